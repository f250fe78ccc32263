"""Out-of-sample evaluation of the recovered potentials and transport maps.

From dual multipliers gamma, the potentials are kernel expansions over the
filling points minus the empirical mean embedding, scaled by 1 / (2 lam2):

    f(x) = (sum_j gamma_j k_X(xt_j, x) - w_mu(x)) / (2 lam2)

and the forward map is its gradient; g and the backward map mirror this on
the y side.  The transport cost estimate reads off the linear part of the
objective, <f, mu_hat> + <g, nu_hat>, excluding all regularization terms,
and the squared distance adds the empirical half second moments.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dualsolve import DualProblemData, DualSolution
from .kernels import (
    FillingPairs,
    KernelSpec,
    SampleSet,
    gram_points,
    mean_embedding_batch,
    weighted_grad_sum,
)


@dataclass(frozen=True)
class TransportModel:
    """Everything needed to evaluate f, g and the two maps out of sample."""

    gamma: np.ndarray
    fill: FillingPairs
    mu_samples: SampleSet
    nu_samples: SampleSet
    spec_x: KernelSpec
    spec_y: KernelSpec
    lambda2: float

    def __post_init__(self) -> None:
        if self.lambda2 <= 0:
            raise ValueError("lambda2 must be positive")
        if np.asarray(self.gamma).shape != (self.fill.count,):
            raise ValueError("gamma length must match the filling pairs")


def model_from_solution(data: DualProblemData, solution: DualSolution) -> TransportModel:
    return TransportModel(
        gamma=solution.gamma,
        fill=data.fill,
        mu_samples=data.mu_samples,
        nu_samples=data.nu_samples,
        spec_x=data.spec_x,
        spec_y=data.spec_y,
        lambda2=data.hyper.lambda2,
    )


def _expansion(
    model: TransportModel,
    anchors: np.ndarray,
    samples: SampleSet,
    spec: KernelSpec,
    x: np.ndarray,
) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    expa = gram_points(spec, pts, anchors) @ model.gamma
    emb = mean_embedding_batch(spec, samples, pts)
    return (expa - emb) / (2.0 * model.lambda2)


def potential_f(model: TransportModel, x: np.ndarray) -> float | np.ndarray:
    """Potential on the source side; accepts a point or an array of rows."""
    vals = _expansion(model, model.fill.x_points, model.mu_samples, model.spec_x, x)
    return float(vals[0]) if np.asarray(x).ndim == 1 else vals


def potential_g(model: TransportModel, y: np.ndarray) -> float | np.ndarray:
    """Potential on the target side."""
    vals = _expansion(model, model.fill.y_points, model.nu_samples, model.spec_y, y)
    return float(vals[0]) if np.asarray(y).ndim == 1 else vals


def _map_eval(
    model: TransportModel,
    anchors: np.ndarray,
    samples: SampleSet,
    spec: KernelSpec,
    x: np.ndarray,
) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    expa = weighted_grad_sum(spec, anchors, model.gamma, pts)
    unif = np.full(samples.n, 1.0 / samples.n)
    emb = weighted_grad_sum(spec, samples.points, unif, pts)
    out = (expa - emb) / (2.0 * model.lambda2)
    return out[0] if np.asarray(x).ndim == 1 else out


def map_forward(model: TransportModel, x: np.ndarray) -> np.ndarray:
    """T1 = grad f, pushing source points toward the target."""
    return _map_eval(model, model.fill.x_points, model.mu_samples, model.spec_x, x)


def map_backward(model: TransportModel, y: np.ndarray) -> np.ndarray:
    """T2 = grad g, pushing target points toward the source."""
    return _map_eval(model, model.fill.y_points, model.nu_samples, model.spec_y, y)


def ot_value(model: TransportModel) -> float:
    """Inner-product transport value (1/n) sum f(x_i) + (1/n) sum g(y_i)."""
    f_vals = potential_f(model, model.mu_samples.points)
    g_vals = potential_g(model, model.nu_samples.points)
    return float(np.mean(f_vals) + np.mean(g_vals))


def w2_value(model: TransportModel) -> float:
    """Squared distance under the half-cost convention.

    (1/n) sum ||x_i||^2 / 2 + (1/n) sum ||y_i||^2 / 2 minus the transport
    value.
    """
    mom = 0.5 * (
        float(np.mean(np.sum(model.mu_samples.points**2, axis=1)))
        + float(np.mean(np.sum(model.nu_samples.points**2, axis=1)))
    )
    return mom - ot_value(model)


def save_model(model: TransportModel, path: str | Path) -> None:
    """Serialize a model to an .npz archive."""
    spec_x, spec_y = model.spec_x, model.spec_y
    np.savez(
        path,
        gamma=model.gamma,
        fill_x=model.fill.x_points,
        fill_y=model.fill.y_points,
        mu=model.mu_samples.points,
        nu=model.nu_samples.points,
        lambda2=model.lambda2,
        family_x=spec_x.family,
        bandwidth_x=spec_x.bandwidth,
        smoothness_x=-1.0 if spec_x.smoothness is None else spec_x.smoothness,
        family_y=spec_y.family,
        bandwidth_y=spec_y.bandwidth,
        smoothness_y=-1.0 if spec_y.smoothness is None else spec_y.smoothness,
    )


def load_model(path: str | Path) -> TransportModel:
    with np.load(path, allow_pickle=False) as arc:
        def spec(side: str) -> KernelSpec:
            fam = str(arc[f"family_{side}"])
            smooth = float(arc[f"smoothness_{side}"])
            return KernelSpec(
                family=fam,
                bandwidth=float(arc[f"bandwidth_{side}"]),
                dim=int(arc["fill_x"].shape[1]),
                smoothness=None if smooth < 0 else smooth,
            )

        return TransportModel(
            gamma=arc["gamma"],
            fill=FillingPairs(arc["fill_x"], arc["fill_y"]),
            mu_samples=SampleSet(arc["mu"]),
            nu_samples=SampleSet(arc["nu"]),
            spec_x=spec("x"),
            spec_y=spec("y"),
            lambda2=float(arc["lambda2"]),
        )
