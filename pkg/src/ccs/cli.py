"""Command-line entry point (``ccs``)."""
from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import __version__
from .analysis_approx import (
    AllocationSpec,
    expected_complexity_checks,
    expected_complexity_nodes,
    expected_surviving_approx,
    ptree_bound,
)
from .analysis_exact import surviving_profile_exact
from .csengine import DimensionOverflowError, build_sensing_matrix, write_matrix
from .parityopt import OptProblem, optimize_allocation
from .sim import CSV_COLUMNS, ConfigError, csv_rows, load_config, run_campaign, simulate_survivors, sweep
from .treecode import ParityProfile


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma list of integers, got {text!r}") from None


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma list of numbers, got {text!r}") from None


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _dump(obj, out):
    _emit(json.dumps(obj, indent=2, sort_keys=True), out)


def _overrides(args) -> dict:
    return {"seed": args.seed, "threads": args.threads, "trials": getattr(args, "trials", None)}


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    rep = run_campaign(cfg)
    _emit(rep.to_json(include_runtime=args.runtime), args.out)
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    reports = sweep(cfg, args.param, args.values)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in csv_rows(reports):
            w.writerow({k: "" if v is None else v for k, v in row.items()})
    finally:
        if args.out:
            fh.close()
    return 0


def cmd_analyze_approx(args) -> int:
    spec = AllocationSpec(args.k, args.alloc)
    surv = expected_surviving_approx(spec)
    _dump(
        {
            "K": args.k,
            "l": list(args.alloc),
            "expected_surviving": surv,
            "expected_surviving_plus_true": [s + 1 for s in surv],
            "ptree_bound": ptree_bound(spec),
            "expected_nodes": expected_complexity_nodes(spec),
            "expected_checks": expected_complexity_checks(spec),
        },
        args.out,
    )
    return 0


def cmd_analyze_exact(args) -> int:
    profile = ParityProfile.from_parity(args.j, args.alloc)
    surv = surviving_profile_exact(args.k, profile.m, (0,) + tuple(args.alloc), args.depth)
    _dump(
        {
            "K": args.k,
            "J": args.j,
            "m": list(profile.m),
            "l": list(args.alloc),
            "expected_surviving": surv,
            "expected_surviving_plus_true": [s + 1 for s in surv],
        },
        args.out,
    )
    return 0


def cmd_survivors(args) -> int:
    profile = ParityProfile.from_parity(args.j, args.alloc)
    counts = simulate_survivors(profile, args.k, args.trials, args.seed or 0)
    _dump(
        {
            "K": args.k,
            "trials": args.trials,
            "mean_with_true": counts.mean(axis=0).tolist(),
            "std_error": (counts.std(axis=0, ddof=1) / np.sqrt(args.trials)).tolist() if args.trials > 1 else None,
        },
        args.out,
    )
    return 0


def cmd_optimize(args) -> int:
    res = optimize_allocation(OptProblem(args.b, args.n, args.j, args.k, args.eps))
    out = {
        "feasible": res.feasible,
        "l": list(res.l) if res.l is not None else None,
        "objective": res.objective,
        "tail": res.tail,
        "relaxed": None if res.relaxed is None else [float(x) for x in res.relaxed],
        "reason": res.reason,
    }
    _dump(out, args.out)
    if not res.feasible:
        print(res.reason if res.reason.startswith("infeasible") else f"infeasible: {res.reason}", file=sys.stderr)
        return 2
    return 0


def cmd_export_matrix(args) -> int:
    if not args.out:
        raise ConfigError("export-matrix needs --out")
    A = build_sensing_matrix(args.kind, args.j, args.rows, args.es, np.random.default_rng(args.seed or 0))
    write_matrix(args.out, A)
    print(f"wrote {A.rows}x{A.cols} {args.kind} matrix to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the campaign seed")
    common.add_argument("--threads", type=int, default=None, help="worker threads for trials")
    common.add_argument("--out", default=None, help="output file (default stdout)")

    p = argparse.ArgumentParser(prog="ccs", description="Coded compressed sensing toolkit for unsourced random access.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="run a Monte Carlo campaign from a config file (JSON report)")
    s.add_argument("config")
    s.add_argument("--trials", type=int, default=None)
    s.add_argument("--runtime", action="store_true", help="include wall-clock runtime in the report")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", parents=[common], help="campaigns over a grid of ebn0_db or ka (CSV)")
    s.add_argument("config")
    s.add_argument("--param", choices=("ebn0_db", "ka"), required=True)
    s.add_argument("--values", type=_floats, required=True, help="comma list")
    s.add_argument("--trials", type=int, default=None)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("analyze-approx", parents=[common], help="closed-form survivor and complexity estimates")
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--alloc", type=_ints, required=True, help="parity lengths l_1..l_{n-1}")
    s.set_defaults(func=cmd_analyze_approx)

    s = sub.add_parser("analyze-exact", parents=[common], help="exact expected survivors")
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--j", type=int, required=True)
    s.add_argument("--alloc", type=_ints, required=True, help="parity lengths l_1..l_{n-1}")
    s.add_argument("--depth", type=int, default=None, help="number of sub-blocks to analyse (default n)")
    s.set_defaults(func=cmd_analyze_exact)

    s = sub.add_parser("survivors", parents=[common], help="Monte Carlo survivors per stage of the tree decoder")
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--j", type=int, required=True)
    s.add_argument("--alloc", type=_ints, required=True)
    s.add_argument("--trials", type=int, default=1000)
    s.set_defaults(func=cmd_survivors)

    s = sub.add_parser("optimize-parity", parents=[common], help="choose parity lengths under a survivor budget")
    s.add_argument("--b", type=int, required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--j", type=int, required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--eps", type=float, required=True)
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("export-matrix", parents=[common], help="write a sensing matrix in the binary format")
    s.add_argument("--kind", choices=("rademacher-antipodal", "gaussian"), default="rademacher-antipodal")
    s.add_argument("--j", type=int, required=True)
    s.add_argument("--rows", type=int, required=True)
    s.add_argument("--es", type=float, default=1.0)
    s.set_defaults(func=cmd_export_matrix)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DimensionOverflowError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
