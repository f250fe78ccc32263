"""Dense symmetric linear algebra: eigendecomposition, PSD projection and
square root, jittered Cholesky factorization.

All routines operate on plain ``numpy`` float arrays and are pure functions;
inputs are never modified in place.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

# Entrywise tolerance |M_ij - M_ji| for accepting a matrix as symmetric.
SYMMETRY_TOL = 1e-10

# Relative eigenvalue floor below which a matrix is rejected as not PSD.
PSD_EIG_TOL = 1e-8

# Base of the jitter ladder used when factorizing near-singular Gram matrices.
DEFAULT_JITTER = 1e-12

_JITTER_DOUBLINGS = 40


class SymmetryError(ValueError):
    """Input matrix is not symmetric within tolerance."""


class NotPSDError(ValueError):
    """Input matrix has an eigenvalue too negative to be treated as PSD."""


class SingularMatrixError(np.linalg.LinAlgError):
    """Cholesky factorization failed even at the top of the jitter ladder."""


class EigenDecomposition(NamedTuple):
    """Eigenpairs of a symmetric matrix, eigenvalues sorted descending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v, w = self.eigenvectors, self.eigenvalues
        return (v * w) @ v.T


def require_symmetric(mat: np.ndarray, tol: float = SYMMETRY_TOL) -> np.ndarray:
    """Validate that ``mat`` is a finite, symmetric square matrix.

    Returns the explicitly symmetrized matrix ``(M + M^T) / 2`` so that
    downstream LAPACK calls see an exactly symmetric operand.
    """
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise ValueError("matrix has non-finite entries")
    if np.max(np.abs(mat - mat.T), initial=0.0) > tol:
        raise SymmetryError(
            f"matrix is not symmetric: max |M_ij - M_ji| = "
            f"{np.max(np.abs(mat - mat.T)):.3e} > {tol:.1e}"
        )
    return 0.5 * (mat + mat.T)


def sym_eig(mat: np.ndarray) -> EigenDecomposition:
    """Full eigendecomposition of a symmetric matrix.

    Eigenvalues are returned in descending order; ties keep the ascending
    LAPACK order reversed, which is deterministic for a fixed input.
    """
    sym = require_symmetric(mat)
    w, v = np.linalg.eigh(sym)
    order = np.argsort(-w, kind="stable")
    return EigenDecomposition(w[order], v[:, order])


def positive_part(mat: np.ndarray) -> np.ndarray:
    """Frobenius projection of a symmetric matrix onto the PSD cone.

    Computed by clipping negative eigenvalues to zero, so
    ``M = positive_part(M) - positive_part(-M)`` with the two parts
    Frobenius-orthogonal.
    """
    w, v = sym_eig(mat)
    proj = (v * np.maximum(w, 0.0)) @ v.T
    return 0.5 * (proj + proj.T)


def psd_sqrt(mat: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root ``S`` with ``S @ S = M``.

    Eigenvalues slightly negative from round-off are clamped to zero;
    anything below ``-PSD_EIG_TOL * max|eig|`` is rejected.
    """
    w, v = sym_eig(mat)
    scale = np.max(np.abs(w), initial=0.0)
    if w[-1] < -PSD_EIG_TOL * scale:
        raise NotPSDError(
            f"matrix is not PSD: min eigenvalue {w[-1]:.3e} "
            f"below -{PSD_EIG_TOL:.1e} * {scale:.3e}"
        )
    root = (v * np.sqrt(np.maximum(w, 0.0))) @ v.T
    return 0.5 * (root + root.T)


def jittered_cholesky(
    mat: np.ndarray, jitter_start: float = DEFAULT_JITTER
) -> tuple[np.ndarray, float]:
    """Lower-triangular ``L`` with ``L @ L.T = M + eps * I``.

    ``eps`` is the smallest value among 0 and ``jitter_start * 2**k`` for
    which the factorization succeeds, and is returned alongside ``L``.
    Raises :class:`SingularMatrixError` after 40 doublings.
    """
    if jitter_start <= 0:
        raise ValueError("jitter_start must be positive")
    sym = require_symmetric(mat)
    eye = np.eye(sym.shape[0])
    candidates = [0.0] + [jitter_start * 2.0**k for k in range(_JITTER_DOUBLINGS)]
    for eps in candidates:
        try:
            return np.linalg.cholesky(sym + eps * eye), eps
        except np.linalg.LinAlgError:
            continue
    raise SingularMatrixError(
        f"Cholesky failed up to jitter {candidates[-1]:.3e}; matrix is "
        "numerically singular or indefinite"
    )
