"""Command-line entry point: ``tiot {dist,align,knn,lag,converge,bench}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .data import read_climate_csv, read_series_file, read_ucr_tsv
from .entropic import HBCDConfig, hbcd_solve
from .errors import DataError, InvalidInputError, SolverFailure
from .exact import tiot_exact
from .experiments import (
    CONVERGENCE_EPS,
    DEFAULT_EPS_GRID,
    DistanceCache,
    ExperimentReport,
    alignment_export,
    convergence_study,
    knn_experiment,
    lag_analysis,
    runtime_bench,
)
from .measures import build_cost_pair, lift_to_measure, zscore_normalize

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 1, 2, 3

_STEPSIZES = {
    "theoretical": "theoretical",
    "adaptive-sigma": "adaptive_sigma",
    "adaptive-inverse": "adaptive_inverse",
}


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; the contract reserves 2 for data errors
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x]


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--eps", type=float, default=None, help="entropic regularization")
    shared.add_argument("--p", type=float, default=2.0, help="cost exponent (default 2)")
    shared.add_argument("--tol", type=float, default=0.005, help="marginal tolerance (default 0.005)")
    shared.add_argument("--freq", type=int, default=10, help="w-update period of HBCD")
    shared.add_argument("--stepsize", choices=sorted(_STEPSIZES), default="adaptive-inverse")
    shared.add_argument("--exact", action="store_true", help="use the exact solver")
    shared.add_argument("--seed", type=int, default=0)
    shared.add_argument("--out", default=None, help="output file, or directory for <kind>_<dataset>_<ts> files")
    shared.add_argument("--format", choices=("json", "csv"), default="json")
    shared.add_argument("--no-timestamp", action="store_true", help="omit timestamps and timings for reproducible output")
    shared.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    shared.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="tiot", description="Time-integrated optimal transport distances.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("dist", parents=[shared], help="distance between two series")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--no-label", action="store_true", help="single-row UCR inputs carry no label")
    p.add_argument("--no-normalize", action="store_true", help="skip z-scoring")

    p = sub.add_parser("align", parents=[shared], help="export the transport plan support")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--no-label", action="store_true")
    p.add_argument("--no-normalize", action="store_true")
    p.add_argument("--threshold", type=float, default=None)

    p = sub.add_parser("knn", parents=[shared], help="1NN classification on a UCR split")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--metric", choices=("etiot", "etaot", "ed"), default="etiot")
    p.add_argument("--omega", type=float, default=None, help="fix the eTAOT time weight")
    p.add_argument("--folds", type=int, default=3)
    p.add_argument("--grid", type=_float_list, default=list(DEFAULT_EPS_GRID))
    p.add_argument("--cache-dir", default=None, help="distance cache (default $TIOT_CACHE_DIR)")

    p = sub.add_parser("lag", parents=[shared], help="lag analysis on a daily climate CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--column", default="meantemp")
    p.add_argument("--max-lag", type=int, default=None)
    p.add_argument("--window", type=int, default=365)

    p = sub.add_parser("converge", parents=[shared], help="eTiOT vs TiOT deviation over epsilon")
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--eps-list", type=_float_list, default=list(CONVERGENCE_EPS))

    p = sub.add_parser("bench", parents=[shared], help="runtime comparison")
    p.add_argument("--sizes", type=_int_list, default=[100, 200, 500, 1000])
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--exact-max", type=int, default=200)
    return parser


def _emit(args, payload: str, default_name: str) -> None:
    if args.out is None:
        sys.stdout.write(payload if payload.endswith("\n") else payload + "\n")
        return
    out = Path(args.out)
    if out.is_dir() or args.out.endswith(os.sep):
        out.mkdir(parents=True, exist_ok=True)
        out = out / f"{default_name}.{args.format}"
    out.write_text(payload)
    print(str(out))


def _emit_report(args, report: ExperimentReport, dataset: str = "") -> None:
    report.parameters["seed"] = args.seed
    if args.no_timestamp:
        report.wallclock = None
        report.summary.pop("seconds", None)
    if args.out is not None and (Path(args.out).is_dir() or args.out.endswith(os.sep)):
        for path in report.write(args.out, dataset, args.format, timestamp=not args.no_timestamp):
            print(str(path))
        return
    text = report.to_json(timestamp=not args.no_timestamp) if args.format == "json" else report.to_csv()
    _emit(args, text, f"{report.kind}_{dataset or 'synthetic'}")


def _read_pair(args):
    x = read_series_file(args.a, has_label=not args.no_label, normalize=False)
    y = read_series_file(args.b, has_label=not args.no_label, normalize=False)
    if not args.no_normalize:
        x, y = zscore_normalize(x), zscore_normalize(y)
    return x, y


def _hbcd_config(args, eps: float) -> HBCDConfig:
    return HBCDConfig(
        epsilon=eps,
        marginal_tol=args.tol,
        freq=args.freq,
        stepsize_rule=_STEPSIZES[args.stepsize],
    )


def cmd_dist(args) -> int:
    x, y = _read_pair(args)
    alpha, beta = lift_to_measure(x), lift_to_measure(y)
    cp = build_cost_pair(alpha, beta, args.p)
    if args.exact:
        sol = tiot_exact(cp, alpha.weights, beta.weights)
        result = {
            "solver": "exact",
            "distance": sol.distance,
            "w": sol.w_star,
            "value": sol.value,
            "iterations": sol.evaluations,
            "converged": True,
        }
    else:
        eps = 0.05 if args.eps is None else args.eps
        sol = hbcd_solve(cp, alpha.weights, beta.weights, _hbcd_config(args, eps))
        if not np.isfinite(sol.transport_value):
            raise SolverFailure("non-finite transport value")
        result = {
            "solver": "etiot",
            "distance": sol.distance,
            "w": sol.w,
            "value": sol.transport_value,
            "iterations": sol.iterations,
            "converged": sol.converged,
            "epsilon": eps,
            "tol": args.tol,
            "stepsize": args.stepsize,
        }
    result.update(p=args.p, seed=args.seed)
    if args.format == "csv":
        keys = sorted(result)
        text = ",".join(keys) + "\n" + ",".join(repr(result[k]) if isinstance(result[k], float) else str(result[k]) for k in keys) + "\n"
    else:
        text = json.dumps(result, indent=2, sort_keys=True) + "\n"
    _emit(args, text, "dist")
    return EXIT_OK


def cmd_align(args) -> int:
    x, y = _read_pair(args)
    report = alignment_export(
        x,
        y,
        solver="exact" if args.exact else "etiot",
        epsilon=0.01 if args.eps is None else args.eps,
        threshold=args.threshold,
        marginal_tol=args.tol,
        normalize=False,
    )
    _emit_report(args, report)
    return EXIT_OK


def cmd_knn(args) -> int:
    train = read_ucr_tsv(args.train, split="train")
    test = read_ucr_tsv(args.test, split="test")
    if len(train) == 0 or len(test) == 0:
        raise DataError("empty split")
    if train.series[0].values.shape != test.series[0].values.shape:
        raise DataError("train and test series lengths differ")
    cache = DistanceCache(args.cache_dir) if args.cache_dir else DistanceCache()
    report = knn_experiment(
        train,
        test,
        metric=args.metric,
        epsilon=args.eps,
        grid=args.grid,
        omega=args.omega,
        folds=args.folds,
        seed=args.seed,
        marginal_tol=args.tol,
        stepsize_rule=_STEPSIZES[args.stepsize],
        jobs=args.jobs,
        cache=cache,
    )
    print(f"error {report.summary['error']:.4f}", file=sys.stderr)
    _emit_report(args, report, train.name)
    return EXIT_OK


def cmd_lag(args) -> int:
    series = read_climate_csv(args.csv, args.column)
    max_ell = len(series) - args.window + 1
    if max_ell < 1:
        raise DataError(f"series of length {len(series)} is shorter than the window {args.window}", args.csv)
    top = max_ell if args.max_lag is None else min(args.max_lag, max_ell)
    report = lag_analysis(
        series,
        range(1, top + 1),
        window=args.window,
        solver="exact" if args.exact or args.eps is None else "entropic",
        epsilon=0.01 if args.eps is None else args.eps,
    )
    _emit_report(args, report, Path(args.csv).stem)
    return EXIT_OK


def cmd_converge(args) -> int:
    report = convergence_study(
        n=args.n,
        epsilons=args.eps_list,
        seeds=range(args.seed, args.seed + args.seeds),
        marginal_tol=args.tol,
        stepsize_rule=_STEPSIZES[args.stepsize],
    )
    _emit_report(args, report)
    return EXIT_OK


def cmd_bench(args) -> int:
    report = runtime_bench(
        sorted(args.sizes),
        epsilon=0.1 if args.eps is None else args.eps,
        marginal_tol=args.tol,
        reps=args.reps,
        exact_max=args.exact_max,
        seed=args.seed,
    )
    _emit_report(args, report)
    return EXIT_OK


_COMMANDS = {
    "dist": cmd_dist,
    "align": cmd_align,
    "knn": cmd_knn,
    "lag": cmd_lag,
    "converge": cmd_converge,
    "bench": cmd_bench,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (InvalidInputError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
