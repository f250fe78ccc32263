"""Kernel families, gradients, Gram matrices, empirical mean embeddings and
constraint features on the product space.

Two families are provided, both normalized so that k(x, x) = 1:

* ``gaussian``: k(a, b) = exp(-||a - b||^2 / (2 sigma^2)).
* ``sobolev``: a Matern kernel of order nu = s - d/2 rounded to the nearest
  half-integer (ties round up), whose RKHS is norm-equivalent to the Sobolev
  space H^s.  Half-integer orders admit the closed polynomial-times-
  exponential form, evaluated here with exact rational coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.spatial.distance import cdist

from .numerics import jittered_cholesky

FAMILIES = ("gaussian", "sobolev")


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family with bandwidth, ambient dimension and Sobolev order.

    ``smoothness`` is required for the ``sobolev`` family and must exceed
    ``dim / 2`` for the kernel to reproduce continuous functions.
    """

    family: str
    bandwidth: float
    dim: int
    smoothness: float | None = None

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if self.dim < 1:
            raise ValueError("dimension must be >= 1")
        if self.family == "sobolev":
            if self.smoothness is None:
                raise ValueError("sobolev kernel requires a smoothness order")
            if self.smoothness <= self.dim / 2:
                raise ValueError(
                    f"smoothness s = {self.smoothness} must exceed d/2 = "
                    f"{self.dim / 2} for a reproducing kernel"
                )

    @property
    def matern_p(self) -> int:
        """Integer p of the realized half-integer Matern order p + 1/2.

        nu = s - d/2 rounded to the nearest half-integer; floor(nu)
        implements that rounding with ties going up.
        """
        if self.family != "sobolev":
            raise ValueError("matern order is only defined for sobolev kernels")
        nu = self.smoothness - self.dim / 2
        return max(int(math.floor(nu)), 0)


@dataclass(frozen=True)
class SampleSet:
    """Uniformly weighted empirical sample, one point per row."""

    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError("sample set needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise ValueError("sample coordinates must be finite")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class FillingPairs:
    """Paired points of the product space where dual constraints are enforced."""

    x_points: np.ndarray
    y_points: np.ndarray

    def __post_init__(self) -> None:
        xs = np.atleast_2d(np.asarray(self.x_points, dtype=float))
        ys = np.atleast_2d(np.asarray(self.y_points, dtype=float))
        if xs.shape != ys.shape or xs.shape[0] < 1:
            raise ValueError("filling pairs need matching nonempty point lists")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise ValueError("filling coordinates must be finite")
        object.__setattr__(self, "x_points", xs)
        object.__setattr__(self, "y_points", ys)

    @property
    def count(self) -> int:
        return self.x_points.shape[0]

    @property
    def dim(self) -> int:
        return self.x_points.shape[1]


def paired_fill(mu: SampleSet, nu: SampleSet) -> FillingPairs:
    """Default filling pairs: zip the two independent sample sets."""
    if mu.n != nu.n:
        raise ValueError("paired filling requires equal sample counts")
    return FillingPairs(mu.points, nu.points)


@lru_cache(maxsize=None)
def _matern_coeffs(p: int) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Coefficients (ascending powers of u) of the Matern polynomial P and of
    (P' - P) / u, where k(r) = exp(-u) P(u), u = sqrt(2 nu) r / bandwidth.

    Exact rationals keep high orders (p ~ 20 for s = 20) accurate.
    """
    fact = math.factorial
    a = [
        Fraction(fact(p) * fact(2 * p - j) * 2**j, fact(2 * p) * fact(p - j) * fact(j))
        for j in range(p + 1)
    ]
    # b_j = coefficient of u^j in P'(u) - P(u); b_0 = 0 for p >= 1.
    b = [(j + 1) * a[j + 1] - a[j] if j < p else -a[p] for j in range(p + 1)]
    g = [float(c) for c in b[1:]] if p >= 1 else []
    return tuple(float(c) for c in a), tuple(g)


def _poly_eval(coeffs: tuple[float, ...], u: np.ndarray) -> np.ndarray:
    out = np.zeros_like(u)
    for c in reversed(coeffs):
        out = out * u + c
    return out


def _matern_scale(spec: KernelSpec) -> float:
    nu = spec.matern_p + 0.5
    return math.sqrt(2.0 * nu) / spec.bandwidth


def _profile(spec: KernelSpec, dist: np.ndarray) -> np.ndarray:
    """Kernel value as a function of the Euclidean distance."""
    if spec.family == "gaussian":
        return np.exp(-0.5 * (dist / spec.bandwidth) ** 2)
    u = _matern_scale(spec) * dist
    a, _ = _matern_coeffs(spec.matern_p)
    return np.exp(-u) * _poly_eval(a, u)


def _grad_weight(spec: KernelSpec, dist: np.ndarray) -> np.ndarray:
    """Radial factor g(r) such that grad_x k(a, x) = g(||x - a||) (x - a)."""
    if spec.family == "gaussian":
        return -_profile(spec, dist) / spec.bandwidth**2
    p = spec.matern_p
    if p == 0:
        # Exponential kernel: gradient singular at coincident points.
        if np.any(dist == 0.0):
            raise ValueError(
                "Matern nu=1/2 kernel is not differentiable at x == anchor"
            )
        c = _matern_scale(spec)
        return -(c / dist) * np.exp(-c * dist)
    c = _matern_scale(spec)
    u = c * dist
    _, g = _matern_coeffs(p)
    return c * c * np.exp(-u) * _poly_eval(g, u)


def _check_dim(spec: KernelSpec, *arrays: np.ndarray) -> None:
    for arr in arrays:
        if arr.shape[-1] != spec.dim:
            raise ValueError(
                f"point dimension {arr.shape[-1]} does not match kernel "
                f"dimension {spec.dim}"
            )


def kernel_eval(spec: KernelSpec, a: np.ndarray, b: np.ndarray) -> float:
    """k(a, b) for a single pair of points."""
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.shape != b.shape:
        raise ValueError("points must share a dimension")
    _check_dim(spec, a)
    return float(_profile(spec, np.linalg.norm(a - b)))


def kernel_grad(spec: KernelSpec, anchor: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Gradient of x -> k(anchor, x) at ``x``."""
    anchor = np.asarray(anchor, dtype=float).reshape(-1)
    x = np.asarray(x, dtype=float).reshape(-1)
    if anchor.shape != x.shape:
        raise ValueError("points must share a dimension")
    _check_dim(spec, x)
    diff = x - anchor
    r = np.linalg.norm(diff)
    if spec.family == "gaussian" or spec.matern_p >= 1:
        if r == 0.0:
            return np.zeros_like(diff)
    return _grad_weight(spec, np.asarray(r)) * diff


def gram_matrix(spec: KernelSpec, a: SampleSet, b: SampleSet) -> np.ndarray:
    """Gram matrix G_ij = k(a_i, b_j)."""
    if a.dim != b.dim:
        raise ValueError("sample sets must share a dimension")
    _check_dim(spec, a.points)
    return gram_points(spec, a.points, b.points)


def gram_points(spec: KernelSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Gram matrix between two raw coordinate arrays."""
    if spec.family == "gaussian":
        sq = cdist(a, b, "sqeuclidean")
        return np.exp(-0.5 * sq / spec.bandwidth**2)
    return _profile(spec, cdist(a, b, "euclidean"))


def gradient_weights(spec: KernelSpec, anchors: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Matrix g(||x_t - a_j||) so that sums of kernel gradients vectorize.

    grad_x k(a_j, x_t) = weights[t, j] * (x_t - a_j).
    """
    return _grad_weight(spec, cdist(xs, anchors, "euclidean"))


def weighted_grad_sum(
    spec: KernelSpec, anchors: np.ndarray, coeffs: np.ndarray, xs: np.ndarray
) -> np.ndarray:
    """Rows sum_j coeffs_j * grad_x k(anchor_j, x_t) for each evaluation point."""
    w = gradient_weights(spec, anchors, xs) * coeffs  # (m, l)
    return xs * w.sum(axis=1, keepdims=True) - w @ anchors


def mean_embedding_eval(spec: KernelSpec, samples: SampleSet, t: np.ndarray) -> float:
    """Empirical kernel mean embedding (1/n) sum_i k(x_i, t) at a point."""
    t = np.asarray(t, dtype=float).reshape(1, -1)
    _check_dim(spec, t)
    if t.shape[1] != samples.dim:
        raise ValueError("query dimension does not match the sample set")
    return float(gram_points(spec, t, samples.points).mean())


def mean_embedding_batch(
    spec: KernelSpec, samples: SampleSet, ts: np.ndarray
) -> np.ndarray:
    """Mean embedding evaluated at every row of ``ts``."""
    return gram_points(spec, np.atleast_2d(ts), samples.points).mean(axis=1)


def mean_embedding_grad(
    spec: KernelSpec, samples: SampleSet, t: np.ndarray
) -> np.ndarray:
    """Gradient of the mean embedding: the average kernel gradient."""
    t = np.asarray(t, dtype=float).reshape(1, -1)
    coeffs = np.full(samples.n, 1.0 / samples.n)
    return weighted_grad_sum(spec, samples.points, coeffs, t)[0]


def embedding_sq_norms(
    spec: KernelSpec,
    mu_samples: SampleSet,
    nu_samples: SampleSet,
    spec_y: KernelSpec | None = None,
) -> float:
    """Sum of squared RKHS norms of the two empirical mean embeddings.

    ||w_mu||^2 = (1/n^2) 1^T K 1 for the Gram matrix K of each sample set;
    a distinct kernel for the second set may be supplied via ``spec_y``.
    """
    spec_y = spec if spec_y is None else spec_y
    kx = gram_points(spec, mu_samples.points, mu_samples.points)
    ky = gram_points(spec_y, nu_samples.points, nu_samples.points)
    return float(kx.mean() + ky.mean())


def product_space_gram(spec_xy: KernelSpec, pairs: FillingPairs) -> np.ndarray:
    """Gram matrix of the tensor-product kernel k((x,y),(x',y')) = k(x,x') k(y,y')."""
    _check_dim(spec_xy, pairs.x_points)
    kx = gram_points(spec_xy, pairs.x_points, pairs.x_points)
    ky = gram_points(spec_xy, pairs.y_points, pairs.y_points)
    return kx * ky


@dataclass(frozen=True)
class ConstraintFeatures:
    """Cholesky features of the product-space Gram: Phi^T Phi = K + jitter * I."""

    matrix: np.ndarray  # columns are the per-pair feature vectors
    jitter: float = field(default=0.0)


def constraint_features(spec_xy: KernelSpec, pairs: FillingPairs) -> ConstraintFeatures:
    """Finite features Phi whose column Gram reproduces the constraint kernel."""
    gram = product_space_gram(spec_xy, pairs)
    lower, eps = jittered_cholesky(gram)
    return ConstraintFeatures(lower.T, eps)


def median_heuristic(points: np.ndarray) -> float:
    """Median pairwise distance, a common default bandwidth."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] < 2:
        raise ValueError("median heuristic needs at least two points")
    d = cdist(pts, pts, "euclidean")
    vals = d[np.triu_indices_from(d, k=1)]
    med = float(np.median(vals))
    if med <= 0:
        raise ValueError("median pairwise distance is zero")
    return med
