"""Ground truth and baselines for the Gaussian benchmark.

Between Gaussians the quadratic-cost transport map is the affine map
x -> A x + b with

    A = S1^{-1/2} (S1^{1/2} S2 S1^{1/2})^{1/2} S1^{-1/2},   b = m2 - A m1,

and the squared distance (half-cost convention, matching the rest of the
package) is

    W2^2 = ( ||m1 - m2||^2 + tr(S1 + S2 - 2 (S1^{1/2} S2 S1^{1/2})^{1/2}) ) / 2.

The plugin estimator solves the exact assignment problem between two equal-
size uniform samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .kernels import SampleSet
from .numerics import psd_sqrt, require_symmetric, sym_eig


@dataclass(frozen=True)
class GaussianMeasure:
    """Gaussian with a strictly positive definite covariance."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = require_symmetric(self.covariance)
        if cov.shape[0] != mean.shape[0]:
            raise ValueError("mean and covariance dimensions differ")
        w = np.linalg.eigvalsh(cov)
        if w[0] <= 1e-10 * w[-1]:
            raise ValueError("covariance must be positive definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def sample(self, n: int, rng: np.random.Generator) -> SampleSet:
        chol = np.linalg.cholesky(self.covariance)
        draws = rng.standard_normal((n, self.dim))
        return SampleSet(self.mean + draws @ chol.T)

    def half_second_moment(self) -> float:
        """E ||X||^2 / 2."""
        return 0.5 * (float(self.mean @ self.mean) + float(np.trace(self.covariance)))


@dataclass(frozen=True)
class AffineMap:
    """x -> A x + b, applied row-wise to point arrays."""

    matrix: np.ndarray
    offset: np.ndarray

    def __call__(self, x: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        out = pts @ self.matrix.T + self.offset
        return out[0] if np.asarray(x).ndim == 1 else out


def wishart_covariance(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded Wishart-style covariance G G^T / d + 0.1 I.

    The ridge keeps the transport maps well conditioned.
    """
    g = rng.standard_normal((dim, dim))
    return g @ g.T / dim + 0.1 * np.eye(dim)


def gaussian_ot_map(src: GaussianMeasure, dst: GaussianMeasure) -> AffineMap:
    """Affine quadratic-cost transport map pushing ``src`` onto ``dst``."""
    root = psd_sqrt(src.covariance)
    w, v = sym_eig(src.covariance)
    inv_root = (v / np.sqrt(w)) @ v.T
    middle = psd_sqrt(root @ dst.covariance @ root)
    a = inv_root @ middle @ inv_root
    a = 0.5 * (a + a.T)
    return AffineMap(matrix=a, offset=dst.mean - a @ src.mean)


def gaussian_w2(src: GaussianMeasure, dst: GaussianMeasure) -> float:
    """Half-cost squared distance between two Gaussians."""
    root = psd_sqrt(src.covariance)
    cross = psd_sqrt(root @ dst.covariance @ root)
    shift = src.mean - dst.mean
    bures = float(
        np.trace(src.covariance) + np.trace(dst.covariance) - 2.0 * np.trace(cross)
    )
    return 0.5 * (float(shift @ shift) + max(bures, 0.0))


def plugin_w2(x: SampleSet, y: SampleSet) -> float:
    """Exact assignment value min over pairings of (1/n) sum ||x_i - y_s(i)||^2 / 2.

    Requires equal sample counts; solved exactly in O(n^3).
    """
    if x.n != y.n:
        raise ValueError("plugin estimator requires equal sample counts")
    cost = 0.5 * cdist(x.points, y.points, "sqeuclidean")
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum() / x.n)


def map_mse(
    est_forward: Callable[[np.ndarray], np.ndarray],
    est_backward: Callable[[np.ndarray], np.ndarray],
    true_forward: Callable[[np.ndarray], np.ndarray],
    true_backward: Callable[[np.ndarray], np.ndarray],
    x: SampleSet,
    y: SampleSet,
) -> float:
    """Mean squared map error, forward side on x plus backward side on y."""
    fwd = np.asarray(est_forward(x.points)) - np.asarray(true_forward(x.points))
    bwd = np.asarray(est_backward(y.points)) - np.asarray(true_backward(y.points))
    return float(np.mean(np.sum(fwd * fwd, axis=1)) + np.mean(np.sum(bwd * bwd, axis=1)))
