"""Command-line entry point: ``run`` trials and ``aggregate`` their logs."""

from __future__ import annotations

import argparse
import csv
import logging
import re
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from ..numerics import NumericalError
from .problems import COORDINATES, FUNCTIONS, make_problem
from .runner import (
    DEFAULT_MAX_ITERATIONS,
    DEFAULT_TARGET,
    HANDLERS,
    ConfigurationError,
    handler_label,
    read_log,
    run_trial,
    trial_filename,
    write_log,
)

log = logging.getLogger("archcma")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2
LOG_NAME = re.compile(r"^(?P<group>.+)_seed(?P<seed>\d+)\.csv$")
SUMMARY_HEADER = ["t", "trials", "median", "q25", "q75"]


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors, not numerical ones
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true")
    parser = _Parser(prog="archcma", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", parents=[common], help="run optimization trials and write one CSV per trial")
    run.add_argument("--function", choices=FUNCTIONS, default="sphere")
    run.add_argument("--n", type=int, default=20)
    run.add_argument("--coords", choices=COORDINATES, default="box")
    run.add_argument("--cht", choices=HANDLERS, default="arch")
    run.add_argument("--seed", type=int, default=0, help="seed of the first trial")
    run.add_argument("--trials", type=int, default=1)
    run.add_argument("--max-iters", type=int, default=DEFAULT_MAX_ITERATIONS)
    run.add_argument("--target", type=float, default=DEFAULT_TARGET)
    run.add_argument("--out", type=Path, default=Path("runs"))

    agg = sub.add_parser("aggregate", parents=[common], help="median and quartile D_crit curves over trials")
    agg.add_argument("logs", nargs="+", type=Path, help="trial CSV files or directories")
    agg.add_argument("--column", default="d_crit")
    agg.add_argument("--out", type=Path, default=None, help="output directory (default: stdout)")
    return parser


def cmd_run(args) -> int:
    if args.trials < 1 or args.max_iters < 1 or args.seed < 0:
        raise ConfigurationError("--trials and --max-iters must be positive, --seed non-negative")
    args.out.mkdir(parents=True, exist_ok=True)
    for seed in range(args.seed, args.seed + args.trials):
        problem = make_problem(args.function, args.n, args.coords, seed)
        records = run_trial(problem, args.cht, args.max_iters, args.target, seed)
        path = args.out / trial_filename(problem, handler_label(args.cht), seed)
        write_log(path, records)
        log.info("%s: %d iterations, D_crit %.3g", path.name, len(records), records[-1].d_crit)
    return EXIT_OK


def _collect(paths: list[Path]) -> dict[str, list[Path]]:
    groups: dict[str, list[Path]] = defaultdict(list)
    for p in paths:
        files = sorted(p.glob("*.csv")) if p.is_dir() else [p]
        for f in files:
            m = LOG_NAME.match(f.name)
            if m:
                groups[m["group"]].append(f)
    if not groups:
        raise ConfigurationError("no trial logs found")
    return groups


def summarize(series: list[np.ndarray]) -> np.ndarray:
    """Per-iteration median and quartiles over trials.

    Trials that stopped early keep their last value. Quantiles use the
    ``lower`` rule so every reported value is an observed one.
    """
    horizon = max(len(s) for s in series)
    padded = np.array([np.concatenate([s, np.full(horizon - len(s), s[-1])]) for s in series])
    q = np.quantile(padded, [0.5, 0.25, 0.75], axis=0, method="lower")
    return q.T


def cmd_aggregate(args) -> int:
    for group, files in sorted(_collect(args.logs).items()):
        series = []
        for f in files:
            recs = read_log(f)
            if not recs:
                continue
            vals = [getattr(r, args.column) for r in recs]
            if any(v is None for v in vals):
                raise ConfigurationError(f"{f.name}: column {args.column!r} is empty")
            series.append(np.asarray(vals, dtype=float))
        if not series:
            continue
        stats = summarize(series)
        fh = sys.stdout if args.out is None else None
        if args.out is not None:
            args.out.mkdir(parents=True, exist_ok=True)
            fh = open(args.out / f"{group}_{args.column}_summary.csv", "w", newline="")
        else:
            print(f"# {group}")
        try:
            w = csv.writer(fh)
            w.writerow(SUMMARY_HEADER)
            for t, (med, q25, q75) in enumerate(stats, 1):
                w.writerow([t, len(series), repr(float(med)), repr(float(q25)), repr(float(q75))])
        finally:
            if fh is not sys.stdout:
                fh.close()
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return cmd_run(args) if args.command == "run" else cmd_aggregate(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigurationError, ValueError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
