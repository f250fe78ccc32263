"""Low-rank Nystrom approximation of a PSD Gram matrix.

Sampling r columns J of K gives K_nys = V W^{-1} V^T with V = K[:, J] and
W = K[J, J]; factoring W = L L^T yields rank-r features R with R^T R = K_nys.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .numerics import SingularMatrixError, jittered_cholesky, require_symmetric


@dataclass(frozen=True)
class NystromFeatures:
    """Rank-r features for a sampled column subset of a PSD matrix."""

    rank: int
    selected_indices: np.ndarray
    features: np.ndarray  # (r, l); column j approximates the j-th feature

    def approx_gram(self) -> np.ndarray:
        return self.features.T @ self.features


def nystrom_features(mat: np.ndarray, rank: int, seed: int) -> NystromFeatures:
    """Seeded uniform column sampling without replacement, then W = L L^T.

    The returned features are R = L^{-1} V^T so that R^T R = V W^{-1} V^T.
    A jitter on W (reported by the underlying factorization) may make the
    approximation very slightly conservative.
    """
    sym = require_symmetric(mat)
    n = sym.shape[0]
    if not 1 <= rank <= n:
        raise ValueError(f"rank must lie in [1, {n}], got {rank}")
    rng = np.random.default_rng(seed)
    indices = np.sort(rng.choice(n, size=rank, replace=False))
    v = sym[:, indices]
    w = sym[np.ix_(indices, indices)]
    try:
        lower, _ = jittered_cholesky(w)
    except SingularMatrixError as exc:
        raise SingularMatrixError(
            f"Nystrom core of rank {rank} is numerically singular; "
            "lower the rank"
        ) from exc
    feats = solve_triangular(lower, v.T, lower=True)
    return NystromFeatures(rank=rank, selected_indices=indices, features=feats)
