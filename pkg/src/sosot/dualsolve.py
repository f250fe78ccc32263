"""Assembly and solution of the penalized dual problem.

The dual objective over multipliers gamma in R^l is

    H(gamma) = (1/4 lam2) gamma^T Q gamma - (1/2 lam2) z^T gamma
             + (1/2 lam1) || (-sum_j gamma_j Phi_j Phi_j^T)_+ ||_F^2
             + (l / 2 delta) ||gamma||^2 + q^2 / (4 lam2),

with Q_ij = k_X(xt_i, xt_j) + k_Y(yt_i, yt_j) over the filling pairs,
q^2 the squared norms of the two empirical mean embeddings, and (.)_+ the
PSD projection.  H is alpha-strongly convex and L-smooth with

    alpha = l/delta + lambda_min(Q) / (2 lam2),
    L     = l/delta + lambda_max(Q) / (2 lam2) + lambda_max(K o K) / lam1,

where K = Phi^T Phi and "o" is the Hadamard product.  It is minimized by
Nesterov's constant-momentum scheme for strongly convex objectives with a
function-value restart.

Two conventions for the linear term are supported.  ``z_variant="paper"``
uses z_j = xt_j . yt_j + w_mu(xt_j) + w_nu(yt_j); re-deriving the Lagrangian
of the quadratically penalized primal instead gives the inner-product term a
2 lam2 factor (``z_variant="derived"``), and only that variant closes the
primal-dual gap numerically.  See README for the practical implications.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.linalg

from .kernels import (
    FillingPairs,
    KernelSpec,
    SampleSet,
    constraint_features,
    embedding_sq_norms,
    gram_points,
    mean_embedding_batch,
    product_space_gram,
)
from .numerics import positive_part
from .nystrom import nystrom_features

Z_VARIANTS = ("paper", "derived")

DEFAULT_MAX_ITER = 50_000


@dataclass(frozen=True)
class Hyperparameters:
    """Penalty weights of the dual problem; ``rank`` enables Nystrom features."""

    lambda1: float
    lambda2: float
    delta: float = 1e3
    rank: Optional[int] = None

    def __post_init__(self) -> None:
        if self.lambda1 <= 0 or self.lambda2 <= 0:
            raise ValueError("lambda1 and lambda2 must be strictly positive")
        if self.delta <= 0:
            raise ValueError("delta must be strictly positive (inf drops the term)")
        if self.rank is not None and self.rank < 1:
            raise ValueError("rank must be a positive integer")


@dataclass(frozen=True)
class DualProblemData:
    """Assembled finite dual problem.

    ``features`` has one column per filling pair (rank-many rows under
    Nystrom).  ``inner`` and ``embed`` are the pieces of the z-vector, which
    depends on lambda2 under the derived variant and is exposed as ``z``.
    Spectral bounds of Q and of the Hadamard-squared feature Gram are
    precomputed so per-cell constants are O(1).
    """

    qmat: np.ndarray
    inner: np.ndarray
    embed: np.ndarray
    q_sq: float
    features: np.ndarray
    feature_gram: np.ndarray
    hyper: Hyperparameters
    fill: FillingPairs
    mu_samples: SampleSet
    nu_samples: SampleSet
    spec_x: KernelSpec
    spec_y: KernelSpec
    z_variant: str = "derived"
    q_eig_min: float = field(default=0.0)
    q_eig_max: float = field(default=0.0)
    k2_eig_max: float = field(default=0.0)

    @property
    def ell(self) -> int:
        return self.inner.shape[0]

    @property
    def z(self) -> np.ndarray:
        coef = 2.0 * self.hyper.lambda2 if self.z_variant == "derived" else 1.0
        return self.embed + coef * self.inner

    def with_hyper(self, hyper: Hyperparameters) -> "DualProblemData":
        """Cheap re-parameterization; the rank must not change."""
        if hyper.rank != self.hyper.rank:
            raise ValueError("changing the Nystrom rank requires re-assembly")
        return replace(self, hyper=hyper)


@dataclass(frozen=True)
class DualSolution:
    """Minimizer of the dual with the recovered SoS matrix and diagnostics."""

    gamma: np.ndarray
    b_matrix: np.ndarray
    objective_value: float
    iterations: int
    grad_norm: float
    constants: tuple[float, float]
    converged: bool
    gap: float = math.nan

    def diagnostics(self) -> dict:
        alpha, lip = self.constants
        return {
            "objective": self.objective_value,
            "gap": self.gap,
            "iterations": self.iterations,
            "grad_norm": self.grad_norm,
            "alpha": alpha,
            "L": lip,
            "converged": self.converged,
        }


def assemble(
    spec_x: KernelSpec,
    spec_y: KernelSpec,
    spec_xy: KernelSpec,
    mu: SampleSet,
    nu: SampleSet,
    fill: FillingPairs,
    hyper: Hyperparameters,
    *,
    z_variant: str = "derived",
    nystrom_seed: int = 0,
) -> DualProblemData:
    """Build Q, z, q^2 and the constraint features for one problem instance."""
    if z_variant not in Z_VARIANTS:
        raise ValueError(f"z_variant must be one of {Z_VARIANTS}")
    ell = fill.count
    if hyper.rank is not None and hyper.rank > ell:
        raise ValueError(f"rank {hyper.rank} exceeds the number of pairs {ell}")

    qmat = gram_points(spec_x, fill.x_points, fill.x_points) + gram_points(
        spec_y, fill.y_points, fill.y_points
    )
    inner = np.einsum("ij,ij->i", fill.x_points, fill.y_points)
    embed = mean_embedding_batch(spec_x, mu, fill.x_points) + mean_embedding_batch(
        spec_y, nu, fill.y_points
    )
    q_sq = embedding_sq_norms(spec_x, mu, nu, spec_y)

    if hyper.rank is not None:
        gram = product_space_gram(spec_xy, fill)
        feats = nystrom_features(gram, hyper.rank, nystrom_seed).features
    else:
        feats = constraint_features(spec_xy, fill).matrix
    feature_gram = feats.T @ feats

    q_eigs = np.linalg.eigvalsh(0.5 * (qmat + qmat.T))
    k2_eigs = np.linalg.eigvalsh(feature_gram * feature_gram)
    return DualProblemData(
        qmat=qmat,
        inner=inner,
        embed=embed,
        q_sq=q_sq,
        features=feats,
        feature_gram=feature_gram,
        hyper=hyper,
        fill=fill,
        mu_samples=mu,
        nu_samples=nu,
        spec_x=spec_x,
        spec_y=spec_y,
        z_variant=z_variant,
        q_eig_min=float(q_eigs[0]),
        q_eig_max=float(q_eigs[-1]),
        k2_eig_max=float(k2_eigs[-1]),
    )


def _ridge(data: DualProblemData) -> float:
    return 0.0 if math.isinf(data.hyper.delta) else data.ell / data.hyper.delta


def _neg_weighted_outer(features: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """-sum_j gamma_j Phi_j Phi_j^T, explicitly symmetrized."""
    s = (features * gamma) @ features.T
    return -0.5 * (s + s.T)


def _quad_objective(data: DualProblemData, gamma: np.ndarray) -> float:
    lam2 = data.hyper.lambda2
    return float(
        0.25 / lam2 * gamma @ (data.qmat @ gamma)
        - 0.5 / lam2 * data.z @ gamma
        + 0.5 * _ridge(data) * gamma @ gamma
        + 0.25 * data.q_sq / lam2
    )


def dual_objective(data: DualProblemData, gamma: np.ndarray) -> float:
    """H(gamma), with the SoS term obtained from the PSD projection."""
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (data.ell,) or not np.all(np.isfinite(gamma)):
        raise ValueError("gamma must be a finite vector of length ell")
    proj = positive_part(_neg_weighted_outer(data.features, gamma))
    sos = 0.5 / data.hyper.lambda1 * float(np.sum(proj * proj))
    return _quad_objective(data, gamma) + sos


def dual_gradient(data: DualProblemData, gamma: np.ndarray) -> np.ndarray:
    """grad H(gamma); the SoS part is -(1/lam1) Phi_j^T (-S)_+ Phi_j per entry."""
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (data.ell,) or not np.all(np.isfinite(gamma)):
        raise ValueError("gamma must be a finite vector of length ell")
    lam1, lam2 = data.hyper.lambda1, data.hyper.lambda2
    proj = positive_part(_neg_weighted_outer(data.features, gamma))
    sos_grad = -np.einsum("ij,ik,kj->j", data.features, proj, data.features) / lam1
    return 0.5 / lam2 * (data.qmat @ gamma - data.z) + sos_grad + _ridge(data) * gamma


def convexity_constants(data: DualProblemData) -> tuple[float, float]:
    """Strong convexity alpha and smoothness L of the dual objective.

    lambda_min(Q) is clamped at zero: Q is PSD in exact arithmetic and a
    negative numerical eigenvalue must not inflate alpha above the true
    modulus.
    """
    ridge = _ridge(data)
    lam1, lam2 = data.hyper.lambda1, data.hyper.lambda2
    alpha = ridge + max(data.q_eig_min, 0.0) / (2.0 * lam2)
    lip = ridge + data.q_eig_max / (2.0 * lam2) + data.k2_eig_max / lam1
    return alpha, lip


def _fast_eval(data: DualProblemData, gamma: np.ndarray, with_grad: bool):
    """Objective (and optionally gradient) sharing one eigendecomposition.

    Only the positive end of the spectrum of -S(gamma) contributes to either
    quantity, so the eigenvector products are restricted to it.
    """
    lam1, lam2 = data.hyper.lambda1, data.hyper.lambda2
    neg = _neg_weighted_outer(data.features, gamma)
    q_gamma = data.qmat @ gamma
    quad = float(
        0.25 / lam2 * (gamma @ q_gamma)
        - 0.5 / lam2 * data.z @ gamma
        + 0.5 * _ridge(data) * (gamma @ gamma)
        + 0.25 * data.q_sq / lam2
    )
    if not with_grad:
        w = np.linalg.eigvalsh(neg)
        pos = w[w > 0.0]
        return quad + 0.5 / lam1 * float(pos @ pos)
    w, v = np.linalg.eigh(neg)  # ascending
    first_pos = int(np.searchsorted(w, 0.0, side="right"))
    lin_grad = 0.5 / lam2 * (q_gamma - data.z) + _ridge(data) * gamma
    if first_pos == w.shape[0]:
        return quad, lin_grad
    wp = w[first_pos:]
    vt_phi = v[:, first_pos:].T @ data.features
    obj = quad + 0.5 / lam1 * float(wp @ wp)
    grad = lin_grad - (wp @ (vt_phi * vt_phi)) / lam1
    return obj, grad


def recover_b_matrix(data: DualProblemData, gamma: np.ndarray) -> np.ndarray:
    """SoS matrix B = (1/lam1) (-sum_j gamma_j Phi_j Phi_j^T)_+."""
    return positive_part(_neg_weighted_outer(data.features, gamma)) / data.hyper.lambda1


def warm_start(data: DualProblemData) -> np.ndarray:
    """Minimizer of the quadratic part (exact solution when features vanish)."""
    lam2 = data.hyper.lambda2
    a = data.qmat / (2.0 * lam2) + _ridge(data) * np.eye(data.ell)
    rhs = data.z / (2.0 * lam2)
    try:
        return scipy.linalg.cho_solve(scipy.linalg.cho_factor(a), rhs)
    except scipy.linalg.LinAlgError:
        return np.linalg.lstsq(a, rhs, rcond=None)[0]


def default_tolerance(data: DualProblemData) -> float:
    """Scale-aware gradient-norm tolerance 1e-8 (1 + ||z|| / 2 lam2)."""
    return 1e-8 * (1.0 + float(np.linalg.norm(data.z)) / (2.0 * data.hyper.lambda2))


def solve(
    data: DualProblemData,
    tol: float | None = None,
    max_iter: int = DEFAULT_MAX_ITER,
) -> DualSolution:
    """Minimize the dual by restarted accelerated gradient descent.

    Steps 1/L with momentum (sqrt(L) - sqrt(alpha)) / (sqrt(L) + sqrt(alpha));
    a function-value restart drops the momentum whenever the evaluated
    objective increases.  When alpha is numerically zero (delta = inf with a
    singular Q) the momentum falls back to the classical 1/k^2 schedule.
    Iterations start from the closed-form minimizer of the quadratic part.
    Stops once ||grad H|| <= tol; hitting ``max_iter`` first returns a
    solution flagged as non-converged.
    """
    if tol is None:
        tol = default_tolerance(data)
    if tol <= 0:
        raise ValueError("tol must be positive")
    alpha, lip = convexity_constants(data)
    strongly_convex = alpha > 0
    beta = (
        (math.sqrt(lip) - math.sqrt(alpha)) / (math.sqrt(lip) + math.sqrt(alpha))
        if strongly_convex
        else 0.0
    )

    x_prev = warm_start(data)
    y = x_prev
    f_prev = math.inf
    t_mom = 1.0
    iterations = 0
    converged = False
    while True:
        f_y, g_y = _fast_eval(data, y, with_grad=True)
        grad_norm = float(np.linalg.norm(g_y))
        if grad_norm <= tol:
            converged = True
            break
        if iterations >= max_iter:
            break
        x_new = y - g_y / lip
        if f_y > f_prev:
            # Function-value restart: drop all momentum.
            y = x_new
            t_mom = 1.0
        elif strongly_convex:
            y = x_new + beta * (x_new - x_prev)
        else:
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_mom * t_mom))
            y = x_new + (t_mom - 1.0) / t_next * (x_new - x_prev)
            t_mom = t_next
        x_prev, f_prev = x_new, f_y
        iterations += 1

    b_matrix = recover_b_matrix(data, y)
    gap = math.nan
    if not math.isinf(data.hyper.delta):
        gap = primal_value(data, y, b_matrix) + f_y
    return DualSolution(
        gamma=y,
        b_matrix=b_matrix,
        objective_value=f_y,
        iterations=iterations,
        grad_norm=grad_norm,
        constants=(alpha, lip),
        converged=converged,
        gap=gap,
    )


def potential_values_at_fill(data: DualProblemData, gamma: np.ndarray) -> np.ndarray:
    """f(xt_j) + g(yt_j) for the potentials recovered from gamma."""
    return (data.qmat @ gamma - data.embed) / (2.0 * data.hyper.lambda2)


def primal_value(data: DualProblemData, gamma: np.ndarray, b_matrix: np.ndarray) -> float:
    """Penalized primal objective at the potentials recovered from gamma.

    The potentials f = (sum_j gamma_j phi_X(xt_j) - w_mu) / (2 lam2) and the
    mirrored g reduce every RKHS inner product to a quadratic form in the
    assembled Gram data, so no kernel evaluations are needed.
    """
    gamma = np.asarray(gamma, dtype=float)
    hyper = data.hyper
    if math.isinf(hyper.delta):
        raise ValueError("the quadratic-penalty primal requires a finite delta")
    lam1, lam2, delta = hyper.lambda1, hyper.lambda2, hyper.delta
    ell = data.ell
    quad_q = float(gamma @ (data.qmat @ gamma))
    lin = (float(gamma @ data.embed) - data.q_sq) / (2.0 * lam2)
    reg_fg = (quad_q - 2.0 * float(gamma @ data.embed) + data.q_sq) / (4.0 * lam2)
    reg_b = 0.5 * lam1 * float(np.sum(b_matrix * b_matrix))
    sos_vals = np.einsum(
        "ij,ik,kj->j", data.features, b_matrix, data.features
    )
    resid = potential_values_at_fill(data, gamma) - data.inner - sos_vals
    penalty = 0.5 * delta / ell * float(resid @ resid)
    return lin + reg_fg + reg_b + penalty


def duality_gap(data: DualProblemData, gamma: np.ndarray) -> float:
    """Primal value at the recovered triple minus the dual optimum bound.

    The dual problem is written as a minimization of H; its value as a
    supremum is -H, so the gap at gamma is primal(gamma) + H(gamma).
    Nonnegative for the derived z-variant, where it equals
    (delta / 2 ell) ||grad H(gamma)||^2.
    """
    b_matrix = recover_b_matrix(data, gamma)
    return primal_value(data, gamma, b_matrix) + dual_objective(data, gamma)
