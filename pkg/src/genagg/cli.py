"""Command-line front end.

Exit codes: 0 success, 1 a verification or experiment suite failed its
tolerance, 2 usage errors (argparse reports unknown names alongside the
valid choices). Output directory resolution: --out, else $GENAGG_OUT_DIR,
else ./results.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .distributive import distributive_catalog, verify_distributive
from .experiments import (
    AGGREGATOR_REGRESSION,
    GNN_REGRESSION,
    METHOD_NAMES,
    TARGET_NAMES,
    ExperimentConfig,
    ExperimentError,
    run_cells,
    verify_parametrisations,
    write_csv,
    write_json,
)
from .afm import symbolic_params_for, LimitCase
from .aggregators import StandardAggregator
from .tensor import finite_diff_check, gradcheck_cases, rng_stream

PARAM_TOL = 1e-6
GDP_TOL = 1e-6
GRAD_TOL = 1e-4


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output directory (default $GENAGG_OUT_DIR or ./results)")
    p.add_argument("--format", choices=("csv", "json", "both"), default="both")
    p.add_argument("--time", action="store_true", help="print elapsed seconds")
    p.add_argument("--quiet", action="store_true", help="suppress per-row output")


def _out_dir(args) -> Path:
    d = Path(args.out or os.environ.get("GENAGG_OUT_DIR") or "results")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _emit_rows(rows: list[dict], name: str, args):
    out = _out_dir(args)
    if args.format in ("json", "both"):
        with open(out / f"{name}.json", "w") as fh:
            json.dump(rows, fh, indent=1)
    if args.format in ("csv", "both"):
        import csv as _csv

        with open(out / f"{name}.csv", "w", newline="") as fh:
            w = _csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            w.writeheader()
            w.writerows(rows)


def _cmd_verify_parametrisations(args) -> int:
    t0 = time.perf_counter()
    rows = verify_parametrisations(n_sets=1000, seed=args.seed)
    ok = True
    for row in rows:
        passed = row["max_rel_err"] < PARAM_TOL
        ok &= passed
        row["passed"] = passed
        if not args.quiet:
            mark = "ok" if passed else "FAIL"
            print(f"{mark:4s} {row['aggregator']:22s} max_rel_err={row['max_rel_err']:.3e}")
    _emit_rows(rows, "parametrisations", args)
    if args.time:
        print(f"elapsed: {time.perf_counter() - t0:.2f}s")
    return 0 if ok else 1


def _cmd_verify_distributive(args) -> int:
    t0 = time.perf_counter()
    rows = verify_distributive(n_probes=1000, seed=args.seed)
    ok = True
    for row in rows:
        passed = row["max_residual"] < GDP_TOL
        ok &= passed
        row["passed"] = passed
        if not args.quiet:
            mark = "ok" if passed else "FAIL"
            print(f"{mark:4s} {row['aggregator']:22s} psi={row['psi']:14s} max_residual={row['max_residual']:.3e}")
    _emit_rows(rows, "distributive", args)
    if args.time:
        print(f"elapsed: {time.perf_counter() - t0:.2f}s")
    return 0 if ok else 1


def _cmd_grad_check(args) -> int:
    t0 = time.perf_counter()
    rng = rng_stream(args.seed, "cli", "gradcheck")
    rows = []
    ok = True
    for name, sampler in gradcheck_cases():
        worst = 0.0
        for _ in range(args.points):
            fn, point = sampler(rng)
            worst = max(worst, finite_diff_check(fn, point))
        passed = worst < GRAD_TOL
        ok &= passed
        rows.append({"primitive": name, "max_rel_err": worst, "passed": passed})
        if not args.quiet:
            mark = "ok" if passed else "FAIL"
            print(f"{mark:4s} {name:14s} max_rel_err={worst:.3e}")
    _emit_rows(rows, "gradcheck", args)
    if args.time:
        print(f"elapsed: {time.perf_counter() - t0:.2f}s")
    return 0 if ok else 1


def _cmd_catalog(args) -> int:
    print("aggregator             f              alpha beta  distributive psi")
    psi_by_agg: dict[str, list[str]] = {}
    for entry in distributive_catalog():
        psi_by_agg.setdefault(entry.aggregator.value, []).append(entry.label)
    for agg in StandardAggregator:
        p = symbolic_params_for(agg)
        fname = p.f.value if isinstance(p.f, LimitCase) else p.f.name
        if isinstance(p.f, LimitCase):
            fname = f"limit:{fname}"
        psis = ", ".join(psi_by_agg.get(agg.value, [])) or "-"
        print(f"{agg.value:22s} {fname:14s} {p.alpha:5g} {p.beta:4g}  {psis}")
    return 0


def _experiment_configs(args, experiment: str) -> list[ExperimentConfig]:
    base = {}
    if args.config:
        try:
            with open(args.config) as fh:
                base = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ExperimentError(f"cannot read config {args.config}: {exc}") from exc
    targets = list(TARGET_NAMES) if args.target == "all" else [args.target]
    methods = list(METHOD_NAMES) if args.method == "all" else [args.method]
    configs = []
    for target in targets:
        for method in methods:
            doc = dict(base)
            doc.update(experiment=experiment, target=target, method=method, seed=args.seed)
            if args.trials is not None:
                doc["trials"] = args.trials
            if args.epochs is not None:
                doc["epochs"] = args.epochs
            configs.append(ExperimentConfig.from_dict(doc))
    return configs


def _cmd_run(args, experiment: str) -> int:
    t0 = time.perf_counter()
    configs = _experiment_configs(args, experiment)
    cells = [(cfg, t) for cfg in configs for t in range(cfg.trials)]
    records = run_cells(cells, jobs=args.jobs)
    out = _out_dir(args)
    if args.format in ("csv", "both"):
        write_csv(records, out / "results.csv")
    if args.format in ("json", "both"):
        write_json(records, out / "results.json")
    if not args.quiet:
        for rec in records:
            print(
                f"{rec.experiment} target={rec.target} method={rec.method} "
                f"trial={rec.trial} r={rec.r:.4f} mse={rec.mse:.5f} ({rec.seconds:.1f}s)"
            )
    if args.time:
        print(f"elapsed: {time.perf_counter() - t0:.2f}s")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="genagg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify-parametrisations", help="closed-form f-mean vs direct reductions")
    _add_common(p)

    p = sub.add_parser("verify-distributive", help="distributive identity residuals over the psi catalog")
    _add_common(p)

    for name, experiment in (
        ("run-regression", AGGREGATOR_REGRESSION),
        ("run-gnn-regression", GNN_REGRESSION),
    ):
        p = sub.add_parser(name, help=f"train methods on the {experiment} benchmark")
        _add_common(p)
        p.add_argument("--target", required=True, choices=TARGET_NAMES + ("all",))
        p.add_argument("--method", required=True, choices=METHOD_NAMES + ("all",))
        p.add_argument("--trials", type=int, default=None)
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--config", default=None, help="JSON file of ExperimentConfig overrides")
        p.set_defaults(experiment=experiment)

    p = sub.add_parser("grad-check", help="finite-difference sweep over every primitive")
    _add_common(p)
    p.add_argument("--points", type=int, default=100)

    sub.add_parser("catalog", help="print the f / alpha / beta / psi table")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify-parametrisations":
            return _cmd_verify_parametrisations(args)
        if args.command == "verify-distributive":
            return _cmd_verify_distributive(args)
        if args.command == "grad-check":
            return _cmd_grad_check(args)
        if args.command == "catalog":
            return _cmd_catalog(args)
        return _cmd_run(args, args.experiment)
    except ExperimentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
