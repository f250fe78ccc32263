"""Gaussian benchmark harness: seeded data generation, per-cell grid search,
metric computation against analytic ground truth, and CSV serialization.

Configs are flat ``key = value`` text files; '#' starts a comment.  Keys:

    dimension       ambient dimension d                      (default 2)
    sample_sizes    comma list of per-measure sample counts  (default 25,50,100,200)
    num_repeats     independent sample draws per size        (default 10)
    kernel          gaussian | sobolev                       (default sobolev)
    smoothness      Sobolev order s of the potential kernels (default 20)
    smoothness_xy   order of the constraint-space kernel     (default: smoothness)
    bandwidth       kernel length scale                      (default 1.0)
    lambda1_grid    comma list                               (default 1e-7..1e-2)
    lambda2_grid    comma list                               (default 1e-7..1e-2)
    delta           quadratic-penalty weight                 (default 1e3)
    rank            Nystrom rank, clamped to the pair count  (default 100)
    seed            base seed                                (default 0)
    tol             solver tolerance (empty = scale-aware)   (default empty)
    max_iter        solver iteration cap per cell            (default 1200)
    z_variant       paper | derived                          (default derived)
    w2_convention   half | full                              (default half)
    fill_mode       paired | fresh                           (default paired)
    workers         parallel (n, repeat) tasks               (default 1)
    output_path     directory for result CSVs                (default .)

Per-task seeds are ``base_seed XOR crc32("n:repeat")`` so every (size, repeat)
cell is reproducible in isolation.  Wall-clock timings are the only
nondeterministic field in the records file.
"""

from __future__ import annotations

import csv
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .baselines import (
    GaussianMeasure,
    gaussian_ot_map,
    gaussian_w2,
    map_mse,
    plugin_w2,
    wishart_covariance,
)
from .dualsolve import Hyperparameters, assemble, solve
from .kernels import FillingPairs, KernelSpec, SampleSet, paired_fill
from .selection import GridSpec, PAPER_GRID, grid_search
from .transport import map_backward, map_forward, model_from_solution, ot_value, w2_value


class ConfigError(ValueError):
    """Malformed experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    dimension: int = 2
    sample_sizes: tuple[int, ...] = (25, 50, 100, 200)
    num_repeats: int = 10
    kernel: str = "sobolev"
    smoothness: float = 20.0
    smoothness_xy: float | None = None
    bandwidth: float = 1.0
    lambda1_grid: tuple[float, ...] = PAPER_GRID
    lambda2_grid: tuple[float, ...] = PAPER_GRID
    delta: float = 1e3
    rank: int | None = 100
    seed: int = 0
    tol: float | None = None
    max_iter: int = 1200
    z_variant: str = "derived"
    w2_convention: str = "half"
    fill_mode: str = "paired"
    workers: int = 1
    output_path: str = "."

    def __post_init__(self) -> None:
        if self.num_repeats < 1:
            raise ConfigError("num_repeats must be >= 1")
        sizes = tuple(int(n) for n in self.sample_sizes)
        if not sizes or any(n < 1 for n in sizes) or list(sizes) != sorted(sizes):
            raise ConfigError("sample_sizes must be ascending positive integers")
        if self.w2_convention not in ("half", "full"):
            raise ConfigError("w2_convention must be 'half' or 'full'")
        if self.fill_mode not in ("paired", "fresh"):
            raise ConfigError("fill_mode must be 'paired' or 'fresh'")
        object.__setattr__(self, "sample_sizes", sizes)

    def kernel_spec(self) -> KernelSpec:
        smooth = self.smoothness if self.kernel == "sobolev" else None
        return KernelSpec(
            family=self.kernel,
            bandwidth=self.bandwidth,
            dim=self.dimension,
            smoothness=smooth,
        )

    def kernel_spec_xy(self) -> KernelSpec:
        if self.kernel != "sobolev":
            return self.kernel_spec()
        smooth = self.smoothness if self.smoothness_xy is None else self.smoothness_xy
        return KernelSpec(
            family=self.kernel,
            bandwidth=self.bandwidth,
            dim=self.dimension,
            smoothness=smooth,
        )


_BOOLISH = {"true": True, "false": False, "1": True, "0": False}

_CONFIG_PARSERS = {
    "dimension": int,
    "sample_sizes": lambda s: tuple(int(v) for v in s.split(",") if v.strip()),
    "num_repeats": int,
    "kernel": str,
    "smoothness": float,
    "smoothness_xy": float,
    "bandwidth": float,
    "lambda1_grid": lambda s: tuple(float(v) for v in s.split(",") if v.strip()),
    "lambda2_grid": lambda s: tuple(float(v) for v in s.split(",") if v.strip()),
    "delta": float,
    "rank": lambda s: None if s.lower() in ("none", "") else int(s),
    "seed": int,
    "tol": lambda s: None if s.lower() in ("none", "") else float(s),
    "max_iter": int,
    "z_variant": str,
    "w2_convention": str,
    "fill_mode": str,
    "workers": int,
    "output_path": str,
}


def parse_config(path: str | Path, overrides: dict | None = None) -> ExperimentConfig:
    """Read a flat key = value config file, then apply overrides."""
    values: dict = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _CONFIG_PARSERS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            values[key] = _CONFIG_PARSERS[key](val)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def derive_seed(base_seed: int, n: int, repeat: int) -> int:
    """Stable per-(n, repeat) seed: base XOR crc32 of the cell label."""
    return base_seed ^ zlib.crc32(f"{n}:{repeat}".encode())


@dataclass(frozen=True)
class ResultRecord:
    d: int
    n: int
    repeat_index: int
    lambda1: float
    lambda2: float
    ot_error: float
    w2_error: float
    plugin_error: float
    map_mse: float
    mmd_criterion: float
    solver_iterations: int
    wall_time_ms: float


RECORD_COLUMNS = (
    "d",
    "n",
    "repeat_index",
    "lambda1",
    "lambda2",
    "ot_error",
    "w2_error",
    "plugin_error",
    "map_mse",
    "mmd_criterion",
    "solver_iterations",
    "wall_time_ms",
)

AGGREGATE_COLUMNS = (
    "d",
    "n",
    "num_repeats",
    "ot_error_mean",
    "ot_error_std",
    "w2_error_mean",
    "w2_error_std",
    "plugin_error_mean",
    "plugin_error_std",
    "map_mse_mean",
    "map_mse_std",
    "mmd_criterion_mean",
    "mmd_criterion_std",
)


def draw_measures(cfg: ExperimentConfig) -> tuple[GaussianMeasure, GaussianMeasure]:
    """The benchmark pair: Wishart-style covariances, modest mean shift."""
    rng = np.random.default_rng(cfg.seed)
    d = cfg.dimension
    cov_src = wishart_covariance(d, rng)
    cov_dst = wishart_covariance(d, rng)
    mean_src = 0.5 * rng.standard_normal(d)
    mean_dst = 0.5 * rng.standard_normal(d)
    return GaussianMeasure(mean_src, cov_src), GaussianMeasure(mean_dst, cov_dst)


def _draw_task_data(
    cfg: ExperimentConfig,
    src: GaussianMeasure,
    dst: GaussianMeasure,
    n: int,
    repeat: int,
) -> tuple[SampleSet, SampleSet, FillingPairs]:
    rng = np.random.default_rng(derive_seed(cfg.seed, n, repeat))
    mu = src.sample(n, rng)
    nu = dst.sample(n, rng)
    if cfg.fill_mode == "fresh":
        fill = FillingPairs(src.sample(n, rng).points, dst.sample(n, rng).points)
    else:
        fill = paired_fill(mu, nu)
    return mu, nu, fill


def _run_task(
    cfg: ExperimentConfig,
    src: GaussianMeasure,
    dst: GaussianMeasure,
    n: int,
    repeat: int,
) -> ResultRecord:
    start = time.perf_counter()
    mu, nu, fill = _draw_task_data(cfg, src, dst, n, repeat)
    spec = cfg.kernel_spec()
    rank = None if cfg.rank is None else min(cfg.rank, fill.count)
    grid = GridSpec(cfg.lambda1_grid, cfg.lambda2_grid, delta=cfg.delta, rank=rank)
    report = grid_search(
        spec,
        spec,
        cfg.kernel_spec_xy(),
        mu,
        nu,
        fill,
        grid,
        z_variant=cfg.z_variant,
        tol=cfg.tol,
        max_iter=cfg.max_iter,
        nystrom_seed=derive_seed(cfg.seed, n, repeat),
    )
    best = report.best

    # Re-solve the winning cell to obtain its transport model for the metrics.
    data = assemble(
        spec,
        spec,
        cfg.kernel_spec_xy(),
        mu,
        nu,
        fill,
        Hyperparameters(best.lambda1, best.lambda2, delta=cfg.delta, rank=rank),
        z_variant=cfg.z_variant,
        nystrom_seed=derive_seed(cfg.seed, n, repeat),
    )
    sol = solve(data, tol=cfg.tol, max_iter=cfg.max_iter)
    model = model_from_solution(data, sol)

    scale = 2.0 if cfg.w2_convention == "full" else 1.0
    w2_true = gaussian_w2(src, dst)
    ot_true = src.half_second_moment() + dst.half_second_moment() - w2_true
    fwd_true = gaussian_ot_map(src, dst)
    bwd_true = gaussian_ot_map(dst, src)

    ot_err = abs(ot_value(model) - ot_true)
    w2_err = scale * abs(w2_value(model) - w2_true)
    plugin_err = scale * abs(plugin_w2(mu, nu) - w2_true)
    mse = map_mse(
        lambda pts: map_forward(model, pts),
        lambda pts: map_backward(model, pts),
        fwd_true,
        bwd_true,
        mu,
        nu,
    )
    wall_ms = (time.perf_counter() - start) * 1e3
    return ResultRecord(
        d=cfg.dimension,
        n=n,
        repeat_index=repeat,
        lambda1=best.lambda1,
        lambda2=best.lambda2,
        ot_error=ot_err,
        w2_error=w2_err,
        plugin_error=plugin_err,
        map_mse=mse,
        mmd_criterion=best.mmd_criterion,
        solver_iterations=best.iterations,
        wall_time_ms=wall_ms,
    )


def run_experiment(cfg: ExperimentConfig) -> list[ResultRecord]:
    """Every (n, repeat) task of the sweep, in deterministic order."""
    src, dst = draw_measures(cfg)
    tasks = [(n, rep) for n in cfg.sample_sizes for rep in range(cfg.num_repeats)]
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            records = list(
                pool.map(lambda t: _run_task(cfg, src, dst, t[0], t[1]), tasks)
            )
    else:
        records = [_run_task(cfg, src, dst, n, rep) for n, rep in tasks]
    records.sort(key=lambda r: (r.n, r.repeat_index))
    return records


def aggregate_records(records: list[ResultRecord]) -> list[dict]:
    """Mean and population std of every metric, per sample size."""
    rows = []
    for n in sorted({r.n for r in records}):
        group = [r for r in records if r.n == n]

        def stats(attr: str) -> tuple[float, float]:
            vals = np.array([getattr(r, attr) for r in group])
            return float(vals.mean()), float(vals.std())

        row = {"d": group[0].d, "n": n, "num_repeats": len(group)}
        for attr, label in (
            ("ot_error", "ot_error"),
            ("w2_error", "w2_error"),
            ("plugin_error", "plugin_error"),
            ("map_mse", "map_mse"),
            ("mmd_criterion", "mmd_criterion"),
        ):
            mean, std = stats(attr)
            row[f"{label}_mean"] = mean
            row[f"{label}_std"] = std
        rows.append(row)
    return rows


def write_records_csv(records: list[ResultRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(RECORD_COLUMNS)
        for r in records:
            writer.writerow([getattr(r, col) for col in RECORD_COLUMNS])


def write_aggregate_csv(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(AGGREGATE_COLUMNS)
        for row in rows:
            writer.writerow([row[col] for col in AGGREGATE_COLUMNS])
