"""Command-line interface.

Subcommands: generate (seeded benchmark data), fit (solve one dual and save
the transport model), map (batch map evaluation), gridsearch (hyperparameter
sweep on given data), experiment (full benchmark sweep from a config file).

Point files are headerless CSV, one point per row.  Exit codes: 0 success,
1 usage or config error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .baselines import GaussianMeasure, wishart_covariance
from .dualsolve import Hyperparameters, assemble, solve
from .experiment import (
    ConfigError,
    ExperimentConfig,
    aggregate_records,
    parse_config,
    run_experiment,
    write_aggregate_csv,
    write_records_csv,
)
from .kernels import (
    FillingPairs,
    KernelSpec,
    SampleSet,
    median_heuristic,
    paired_fill,
)
from .numerics import SingularMatrixError
from .selection import GridSpec, PAPER_GRID, grid_search, write_report_csv
from .transport import (
    load_model,
    map_backward,
    map_forward,
    model_from_solution,
    ot_value,
    save_model,
    w2_value,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2


class _Parser(argparse.ArgumentParser):
    """argparse defaults to exit code 2 on usage errors; we reserve 2 for
    numerical failures."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_USAGE)


def read_points(path: str | Path) -> np.ndarray:
    pts = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    if pts.size == 0:
        raise ValueError(f"{path}: empty point file")
    return pts


def write_points(points: np.ndarray, path: str | Path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        for row in np.atleast_2d(points):
            writer.writerow([float(v) for v in row])


def _kernel_spec(args: argparse.Namespace, dim: int, points: np.ndarray | None = None) -> KernelSpec:
    bandwidth = args.bandwidth
    if getattr(args, "median_bandwidth", False):
        if points is None:
            raise ValueError("median bandwidth needs sample points")
        bandwidth = median_heuristic(points)
    smooth = args.smoothness if args.kernel == "sobolev" else None
    return KernelSpec(family=args.kernel, bandwidth=bandwidth, dim=dim, smoothness=smooth)


def _add_kernel_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--kernel", choices=("gaussian", "sobolev"), default="sobolev")
    parser.add_argument("--smoothness", type=float, default=20.0)
    parser.add_argument("--bandwidth", type=float, default=1.0)
    parser.add_argument(
        "--median-bandwidth",
        action="store_true",
        help="override --bandwidth with the median pairwise distance",
    )


def _add_solver_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--delta", type=float, default=1e3)
    parser.add_argument("--rank", type=int, default=None)
    parser.add_argument("--tol", type=float, default=None)
    parser.add_argument("--max-iter", type=int, default=20_000)
    parser.add_argument("--z-variant", choices=("paper", "derived"), default="derived")
    parser.add_argument("--w2-convention", choices=("half", "full"), default="half")


def _cmd_generate(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    d = args.dimension
    src = GaussianMeasure(0.5 * rng.standard_normal(d), wishart_covariance(d, rng))
    dst = GaussianMeasure(0.5 * rng.standard_normal(d), wishart_covariance(d, rng))
    # A second generator keeps parameter and sample draws independent.
    sample_rng = np.random.default_rng(args.seed + 1)
    mu = src.sample(args.num_samples, sample_rng)
    nu = dst.sample(args.num_samples, sample_rng)
    write_points(mu.points, out / "mu_samples.csv")
    write_points(nu.points, out / "nu_samples.csv")
    for name, meas in (("mu", src), ("nu", dst)):
        rows = np.vstack([meas.mean[None, :], meas.covariance])
        write_points(rows, out / f"{name}_truth.csv")
    return EXIT_OK


def _load_fit_inputs(args: argparse.Namespace):
    mu = SampleSet(read_points(args.mu))
    nu = SampleSet(read_points(args.nu))
    if (args.fill_mu is None) != (args.fill_nu is None):
        raise ValueError("--fill-mu and --fill-nu must be given together")
    if args.fill_mu is not None:
        fill = FillingPairs(read_points(args.fill_mu), read_points(args.fill_nu))
    else:
        fill = paired_fill(mu, nu)
    return mu, nu, fill


def _cmd_fit(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mu, nu, fill = _load_fit_inputs(args)
    spec = _kernel_spec(args, mu.dim, np.vstack([mu.points, nu.points]))
    rank = None if args.rank is None else min(args.rank, fill.count)
    hyper = Hyperparameters(args.lambda1, args.lambda2, delta=args.delta, rank=rank)
    data = assemble(
        spec, spec, spec, mu, nu, fill, hyper,
        z_variant=args.z_variant, nystrom_seed=args.seed,
    )
    sol = solve(data, tol=args.tol, max_iter=args.max_iter)
    model = model_from_solution(data, sol)

    scale = 2.0 if args.w2_convention == "full" else 1.0
    save_model(model, out / "model.npz")
    write_points(sol.gamma[:, None], out / "gamma.csv")
    write_points(map_forward(model, mu.points), out / "mapped_mu.csv")
    write_points(map_backward(model, nu.points), out / "mapped_nu.csv")
    with open(out / "diagnostics.json", "w") as handle:
        json.dump(sol.diagnostics(), handle, indent=2)
        handle.write("\n")
    with open(out / "values.json", "w") as handle:
        json.dump(
            {
                "ot_value": ot_value(model),
                "w2_value": scale * w2_value(model),
                "w2_convention": args.w2_convention,
            },
            handle,
            indent=2,
        )
        handle.write("\n")
    return EXIT_OK if sol.converged else EXIT_NUMERICAL


def _cmd_map(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    pts = read_points(args.input)
    mapper = map_forward if args.direction == "forward" else map_backward
    write_points(mapper(model, pts), args.out)
    return EXIT_OK


def _cmd_gridsearch(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mu, nu, fill = _load_fit_inputs(args)
    spec = _kernel_spec(args, mu.dim, np.vstack([mu.points, nu.points]))
    rank = None if args.rank is None else min(args.rank, fill.count)
    grid = GridSpec(
        tuple(args.lambda1_grid), tuple(args.lambda2_grid), delta=args.delta, rank=rank
    )
    report = grid_search(
        spec, spec, spec, mu, nu, fill, grid,
        z_variant=args.z_variant,
        tol=args.tol,
        max_iter=args.max_iter,
        nystrom_seed=args.seed,
        workers=args.workers,
    )
    write_report_csv(report, out / "report.csv")
    best = report.best
    with open(out / "best.json", "w") as handle:
        json.dump(
            {
                "lambda1": best.lambda1,
                "lambda2": best.lambda2,
                "mmd_criterion": best.mmd_criterion,
                "ot_value": best.ot_value,
                "w2_value": best.w2_value,
            },
            handle,
            indent=2,
        )
        handle.write("\n")
    return EXIT_OK


def _cmd_experiment(args: argparse.Namespace) -> int:
    overrides = {"seed": args.seed, "output_path": args.out}
    cfg = parse_config(args.config, overrides)
    out = Path(cfg.output_path)
    out.mkdir(parents=True, exist_ok=True)
    records = run_experiment(cfg)
    write_records_csv(records, out / "records.csv")
    write_aggregate_csv(aggregate_records(records), out / "aggregate.csv")
    return EXIT_OK


def _comma_floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser() -> _Parser:
    parser = _Parser(prog="sosot", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write seeded Gaussian benchmark data")
    gen.add_argument("--out", required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--dimension", "-d", type=int, default=2)
    gen.add_argument("--num-samples", "-n", type=int, default=100)
    gen.set_defaults(func=_cmd_generate)

    fit = sub.add_parser("fit", help="solve one dual problem and save the model")
    fit.add_argument("--mu", required=True)
    fit.add_argument("--nu", required=True)
    fit.add_argument("--fill-mu", default=None)
    fit.add_argument("--fill-nu", default=None)
    fit.add_argument("--out", required=True)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--lambda1", type=float, default=1e-3)
    fit.add_argument("--lambda2", type=float, default=1e-3)
    _add_kernel_flags(fit)
    _add_solver_flags(fit)
    fit.set_defaults(func=_cmd_fit)

    mp = sub.add_parser("map", help="apply a saved transport map to a point file")
    mp.add_argument("--model", required=True)
    mp.add_argument("--input", required=True)
    mp.add_argument("--out", required=True)
    mp.add_argument("--direction", choices=("forward", "backward"), default="forward")
    mp.set_defaults(func=_cmd_map)

    gs = sub.add_parser("gridsearch", help="hyperparameter sweep on given data")
    gs.add_argument("--mu", required=True)
    gs.add_argument("--nu", required=True)
    gs.add_argument("--fill-mu", default=None)
    gs.add_argument("--fill-nu", default=None)
    gs.add_argument("--out", required=True)
    gs.add_argument("--seed", type=int, default=0)
    gs.add_argument("--lambda1-grid", type=_comma_floats, default=list(PAPER_GRID))
    gs.add_argument("--lambda2-grid", type=_comma_floats, default=list(PAPER_GRID))
    gs.add_argument("--workers", type=int, default=1)
    _add_kernel_flags(gs)
    _add_solver_flags(gs)
    gs.set_defaults(func=_cmd_gridsearch)

    exp = sub.add_parser("experiment", help="run a benchmark sweep from a config file")
    exp.add_argument("--config", required=True)
    exp.add_argument("--seed", type=int, default=None)
    exp.add_argument("--out", default=None)
    exp.set_defaults(func=_cmd_experiment)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SingularMatrixError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    raise SystemExit(main())
