"""Command-line surface: fit, transfer, ci, simulate.

Every command writes its outputs plus a run manifest into ``--out``.
Exit codes: 2 ingestion/format, 3 configuration, 4 fit failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .cohort import load_cohort
from .cqr import build_grid, fit_sequential
from .errors import ConfigurationError, FcqrError
from .exchange import export_estimator, import_estimator
from .resample import build_ci, replicate_surfaces
from .simlab import ScenarioConfig, run_scenario
from .transfer import TransferConfig, _target_bases, transfer_estimate


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out_dir: Path, command: str, config: dict, inputs: list[Path],
                   seed, elapsed: float) -> None:
    config_blob = json.dumps(config, sort_keys=True, default=str)
    manifest = {
        "command": command,
        "config": config,
        "config_hash": hashlib.sha256(config_blob.encode()).hexdigest(),
        "seed": seed,
        "inputs": {str(p): _digest(p) for p in inputs},
        "tool_version": __version__,
        "elapsed_seconds": round(elapsed, 3),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str))


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--grid-max", type=float, default=0.8)
    parser.add_argument("--grid-step", type=float, default=0.01)
    parser.add_argument("--knots", type=int, default=None)
    parser.add_argument("--eta-knots", type=int, default=None)
    parser.add_argument("--bandwidth", type=float, default=None)
    parser.add_argument("--kernel", choices=["gaussian", "uniform"], default="gaussian")
    parser.add_argument("--replicates", type=int, default=200)
    parser.add_argument("--alpha", type=float, default=0.05)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--out", type=Path, required=True)


def cmd_fit(args) -> None:
    t0 = time.perf_counter()
    cohort = load_cohort(args.observations, args.functional, label=args.label)
    grid = build_grid(args.grid_max, args.grid_step)
    bases = _target_bases(cohort, args.knots)
    fit = fit_sequential(cohort, bases, grid)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "estimator.json").write_bytes(export_estimator(fit))
    write_manifest(
        args.out, "fit",
        {"grid_max": args.grid_max, "grid_step": args.grid_step,
         "knots": args.knots, "label": args.label},
        [args.observations, args.functional], args.seed, time.perf_counter() - t0,
    )
    print(f"fitted {cohort.label}: n={cohort.n}, censoring rate {cohort.censoring_rate:.3f}")


def _surface_frame(surface, q: int, grid) -> pd.DataFrame:
    rows = []
    for d in range(1, q + 1):
        vals = surface.coeff_surface(d, surface.s_grid)
        for j in range(1, grid.n_levels + 1):
            for s_val, v in zip(surface.s_grid, vals[j - 1]):
                rows.append((s_val, grid.levels[j], d, v))
    return pd.DataFrame(rows, columns=["s", "tau", "predictor", "value"])


def cmd_transfer(args) -> None:
    t0 = time.perf_counter()
    if not args.source:
        raise ConfigurationError("at least one source estimator file is required")
    target = load_cohort(args.observations, args.functional, label=args.label)
    source_fits = [import_estimator(Path(p).read_bytes()) for p in args.source]
    grid = build_grid(args.grid_max, args.grid_step)
    config = TransferConfig(
        grid=grid, bandwidth=args.bandwidth, kernel=args.kernel,
        knots=args.knots, eta_knots=args.eta_knots, seed=args.seed,
    )
    fit = transfer_estimate(target, source_fits, config)
    args.out.mkdir(parents=True, exist_ok=True)
    weights = pd.DataFrame(
        [
            {"source": sw.label, "n_k": sw.n_k, "loss_diff": sw.loss_diff, "weight": sw.weight}
            for sw in fit.report.sources
        ]
    )
    weights.to_csv(args.out / "weights.csv", index=False)
    _surface_frame(fit.final, target.q, grid).to_csv(args.out / "surface_final.csv", index=False)
    _surface_frame(fit.transfer, target.q, grid).to_csv(
        args.out / "surface_transfer.csv", index=False
    )
    report = {
        "bandwidth": fit.report.bandwidth,
        "kernel": fit.report.kernel,
        "fallback": fit.fallback,
        "debias_flagged_levels": (
            fit.debias.meta.get("flagged_levels", []) if fit.debias is not None else []
        ),
    }
    (args.out / "report.json").write_text(json.dumps(report, indent=2))
    write_manifest(
        args.out, "transfer",
        {"grid_max": args.grid_max, "grid_step": args.grid_step, "knots": args.knots,
         "eta_knots": args.eta_knots, "bandwidth": args.bandwidth, "kernel": args.kernel},
        [args.observations, args.functional, *map(Path, args.source)],
        args.seed, time.perf_counter() - t0,
    )
    print(weights.to_string(index=False))


def cmd_ci(args) -> None:
    t0 = time.perf_counter()
    if args.replicates < 2:
        raise ConfigurationError("need at least 2 resampling replicates")
    target = load_cohort(args.observations, args.functional, label=args.label)
    source_fits = [import_estimator(Path(p).read_bytes()) for p in args.source]
    grid = build_grid(args.grid_max, args.grid_step)
    config = TransferConfig(
        grid=grid, bandwidth=args.bandwidth, kernel=args.kernel,
        knots=args.knots, eta_knots=args.eta_knots, seed=args.seed,
    )
    fit = transfer_estimate(target, source_fits, config)
    replicates = replicate_surfaces(fit, target, args.replicates, args.seed)
    taus = args.tau if args.tau else [grid.levels[grid.n_levels // 2]]
    query_s = np.linspace(target.grid[0], target.grid[-1], args.query_points)
    band = build_ci(fit.final, replicates, args.alpha, query_s, taus, grid, target.q)
    args.out.mkdir(parents=True, exist_ok=True)
    band.table.to_csv(args.out / "ci.csv", index=False)
    write_manifest(
        args.out, "ci",
        {"grid_max": args.grid_max, "grid_step": args.grid_step,
         "replicates": args.replicates, "alpha": args.alpha, "taus": taus},
        [args.observations, args.functional, *map(Path, args.source)],
        args.seed, time.perf_counter() - t0,
    )
    print(f"wrote {len(band.table)} confidence rows to {args.out / 'ci.csv'}")


def cmd_simulate(args) -> None:
    t0 = time.perf_counter()
    raw = json.loads(Path(args.config).read_text())
    for key in ("source_sizes", "metric_taus", "methods"):
        if key in raw and isinstance(raw[key], list):
            raw[key] = tuple(raw[key])
    if args.seed is not None:
        raw["seed"] = args.seed
    try:
        config = ScenarioConfig(**raw)
    except TypeError as exc:
        raise ConfigurationError(f"bad scenario config: {exc}") from exc
    result = run_scenario(config)
    args.out.mkdir(parents=True, exist_ok=True)
    result.records.to_csv(args.out / "records.csv", index=False)
    flat = result.summary.copy()
    flat.columns = ["_".join(c) for c in flat.columns]
    flat.to_csv(args.out / "summary.csv")
    if not result.weight_records.empty:
        result.weight_records.to_csv(args.out / "weights.csv", index=False)
    failures = pd.DataFrame(result.failures)
    if not failures.empty:
        failures.to_csv(args.out / "failures.csv", index=False)
    write_manifest(
        args.out, "simulate", raw, [Path(args.config)], config.seed,
        time.perf_counter() - t0,
    )
    print(flat.to_string())
    if result.failures:
        print(f"{len(result.failures)} replication failures recorded; see failures.csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fcqr",
        description="Functional censored quantile regression with cross-cohort transfer",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit the baseline estimator on one cohort")
    p_fit.add_argument("--observations", type=Path, required=True)
    p_fit.add_argument("--functional", type=Path, required=True)
    p_fit.add_argument("--label", default="cohort")
    _add_common(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    p_tr = sub.add_parser("transfer", help="similarity-weighted transfer onto a target cohort")
    p_tr.add_argument("--observations", type=Path, required=True)
    p_tr.add_argument("--functional", type=Path, required=True)
    p_tr.add_argument("--label", default="target")
    p_tr.add_argument("--source", action="append", default=[],
                      help="source estimator file (repeatable)")
    _add_common(p_tr)
    p_tr.set_defaults(func=cmd_transfer)

    p_ci = sub.add_parser("ci", help="resampling pointwise confidence intervals")
    p_ci.add_argument("--observations", type=Path, required=True)
    p_ci.add_argument("--functional", type=Path, required=True)
    p_ci.add_argument("--label", default="target")
    p_ci.add_argument("--source", action="append", default=[])
    p_ci.add_argument("--tau", type=float, action="append", default=[])
    p_ci.add_argument("--query-points", type=int, default=21)
    _add_common(p_ci)
    p_ci.set_defaults(func=cmd_ci)

    p_sim = sub.add_parser("simulate", help="run a Monte Carlo scenario")
    p_sim.add_argument("--config", type=Path, required=True)
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--threads", type=int, default=1)
    p_sim.add_argument("--out", type=Path, required=True)
    p_sim.set_defaults(func=cmd_simulate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except FcqrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
