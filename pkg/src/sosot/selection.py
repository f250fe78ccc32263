"""MMD computation, the transported-sample selection criterion, and
hyperparameter grid search.

The criterion pushes the source samples through the forward map and the
target samples through the backward map, and sums the squared MMDs between
each transported cloud and its intended destination.  Grid cells are
independent; the best cell minimizes the criterion with ties broken toward
stronger regularization (larger lambda1, then larger lambda2).
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dualsolve import DualProblemData, Hyperparameters, assemble, solve
from .kernels import FillingPairs, KernelSpec, SampleSet, gram_points
from .transport import (
    TransportModel,
    map_backward,
    map_forward,
    model_from_solution,
    ot_value,
    w2_value,
)


def mmd_sq(spec: KernelSpec, a: SampleSet, b: SampleSet) -> float:
    """Squared maximum mean discrepancy, biased V-statistic.

    mean(K_aa) - 2 mean(K_ab) + mean(K_bb); nonnegative up to round-off for
    a PSD kernel.
    """
    if a.dim != b.dim:
        raise ValueError("sample sets must share a dimension")
    kaa = gram_points(spec, a.points, a.points).mean()
    kab = gram_points(spec, a.points, b.points).mean()
    kbb = gram_points(spec, b.points, b.points).mean()
    return float(kaa - 2.0 * kab + kbb)


def selection_criterion(model: TransportModel, spec: KernelSpec) -> float:
    """MMD^2(T1 # mu_hat, nu_hat) + MMD^2(T2 # nu_hat, mu_hat)."""
    pushed_mu = SampleSet(map_forward(model, model.mu_samples.points))
    pushed_nu = SampleSet(map_backward(model, model.nu_samples.points))
    return mmd_sq(spec, pushed_mu, model.nu_samples) + mmd_sq(
        spec, pushed_nu, model.mu_samples
    )


@dataclass(frozen=True)
class GridSpec:
    """Cartesian hyperparameter grid over (lambda1, lambda2)."""

    lambda1_values: tuple[float, ...]
    lambda2_values: tuple[float, ...]
    delta: float = 1e3
    rank: Optional[int] = None

    def __post_init__(self) -> None:
        l1 = tuple(float(v) for v in self.lambda1_values)
        l2 = tuple(float(v) for v in self.lambda2_values)
        if not l1 or not l2 or min(l1) <= 0 or min(l2) <= 0:
            raise ValueError("grids must be nonempty lists of positive values")
        object.__setattr__(self, "lambda1_values", l1)
        object.__setattr__(self, "lambda2_values", l2)


PAPER_GRID = tuple(10.0**e for e in range(-7, -1))


@dataclass(frozen=True)
class CellResult:
    lambda1: float
    lambda2: float
    mmd_criterion: float
    ot_value: float
    w2_value: float
    iterations: int
    converged: bool
    failed: bool = False


@dataclass(frozen=True)
class SelectionReport:
    cells: tuple[CellResult, ...]
    best_index: int

    @property
    def best(self) -> CellResult:
        return self.cells[self.best_index]


REPORT_COLUMNS = (
    "lambda1",
    "lambda2",
    "mmd_criterion",
    "ot_value",
    "w2_value",
    "iterations",
    "converged",
)


def write_report_csv(report: SelectionReport, path: str | Path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for cell in report.cells:
            writer.writerow(
                [
                    cell.lambda1,
                    cell.lambda2,
                    cell.mmd_criterion,
                    cell.ot_value,
                    cell.w2_value,
                    cell.iterations,
                    cell.converged,
                ]
            )


def _pick_best(cells: Sequence[CellResult]) -> int:
    viable = [i for i, c in enumerate(cells) if not c.failed]
    if not viable:
        raise RuntimeError("every grid cell failed to solve")
    # Ties go to the larger (lambda1, lambda2), lexicographically.
    return min(viable, key=lambda i: (cells[i].mmd_criterion, -cells[i].lambda1, -cells[i].lambda2))


def grid_search(
    spec_x: KernelSpec,
    spec_y: KernelSpec,
    spec_xy: KernelSpec,
    mu: SampleSet,
    nu: SampleSet,
    fill: FillingPairs,
    grid: GridSpec,
    *,
    selection_spec: KernelSpec | None = None,
    z_variant: str = "derived",
    tol: float | None = None,
    max_iter: int = 2000,
    nystrom_seed: int = 0,
    workers: int = 1,
) -> SelectionReport:
    """Solve one dual per grid cell and rank cells by the MMD criterion.

    The problem geometry (Q, z components, features) is assembled once and
    shared across cells; only the penalty weights vary.  Cells run
    independently, optionally on a thread pool, and the report is identical
    for any enumeration order or worker count.
    """
    selection_spec = spec_x if selection_spec is None else selection_spec
    base_hyper = Hyperparameters(
        lambda1=grid.lambda1_values[0],
        lambda2=grid.lambda2_values[0],
        delta=grid.delta,
        rank=grid.rank,
    )
    data = assemble(
        spec_x,
        spec_y,
        spec_xy,
        mu,
        nu,
        fill,
        base_hyper,
        z_variant=z_variant,
        nystrom_seed=nystrom_seed,
    )
    cells = [
        (l1, l2) for l1 in grid.lambda1_values for l2 in grid.lambda2_values
    ]

    def run_cell(pair: tuple[float, float]) -> CellResult:
        l1, l2 = pair
        cell_data = data.with_hyper(
            Hyperparameters(lambda1=l1, lambda2=l2, delta=grid.delta, rank=grid.rank)
        )
        try:
            sol = solve(cell_data, tol=tol, max_iter=max_iter)
            model = model_from_solution(cell_data, sol)
            crit = selection_criterion(model, selection_spec)
            return CellResult(
                lambda1=l1,
                lambda2=l2,
                mmd_criterion=crit,
                ot_value=ot_value(model),
                w2_value=w2_value(model),
                iterations=sol.iterations,
                converged=sol.converged,
            )
        except (np.linalg.LinAlgError, FloatingPointError, ValueError):
            return CellResult(
                lambda1=l1,
                lambda2=l2,
                mmd_criterion=math.nan,
                ot_value=math.nan,
                w2_value=math.nan,
                iterations=0,
                converged=False,
                failed=True,
            )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_cell, cells))
    else:
        results = [run_cell(pair) for pair in cells]
    return SelectionReport(cells=tuple(results), best_index=_pick_best(results))


def theoretical_lambda(
    n: int, delta_conf: float, m: int, d: int, epsilon: float, c1: float
) -> float:
    """Regularizer schedule with the statistically calibrated decay in n.

    (log(2/delta)^2 / n)^((m+1)/(m+d/2+eps)) + C1 (log(n/delta)/n)^((m-d)/(2d)).
    Requires m > d (the second exponent must be positive) and n >= 2.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if not 0.0 < delta_conf < 1.0 or not 0.0 < epsilon < 1.0:
        raise ValueError("delta_conf and epsilon must lie in (0, 1)")
    if m <= d:
        raise ValueError("the schedule requires smoothness m > dimension d")
    if c1 < 0:
        raise ValueError("C1 must be nonnegative")
    first = (math.log(2.0 / delta_conf) ** 2 / n) ** ((m + 1) / (m + d / 2 + epsilon))
    second = c1 * (math.log(n / delta_conf) / n) ** ((m - d) / (2 * d))
    return first + second
