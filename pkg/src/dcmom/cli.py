"""``dcm`` command line: run, verify-lb, plot."""

from __future__ import annotations

import argparse
import sys

from .core import InvalidConfig
from . import experiments as ex

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _cmd_run(args) -> int:
    cfg = ex.load_config(args.config)
    outcome = ex.run_config(cfg, output_dir=args.output)
    print(f"wrote {len(outcome.csv_paths)} run CSVs, summary.csv and "
          f"{len(outcome.svg_paths)} SVGs to {outcome.output_dir}")
    for p, r in zip(outcome.points, outcome.results):
        if r.n_diverged and not p.counterexample:
            seed, msg = r.failures[0]
            print(f"numeric failure: point {p.index} ({p.label}), seed {seed}: {msg}",
                  file=sys.stderr)
    return outcome.exit_code


def _cmd_verify(args) -> int:
    report = ex.verify_lower_bounds(args.config)
    for line in report.lines():
        print(line)
    return EXIT_OK if report.passed else EXIT_FAIL


def _cmd_plot(args) -> int:
    n = ex.plot_csv(args.csv, args.output, column=args.column)
    print(f"wrote {args.output} ({n} lines)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dcm", description="Stochastic DC solvers with momentum.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a sweep config and write CSV + SVG")
    run.add_argument("config")
    run.add_argument("-o", "--output", help="output directory (overrides the config)")
    run.set_defaults(func=_cmd_run)

    lb = sub.add_parser("verify-lb", help="Monte-Carlo check of the momentum-free noise floors")
    lb.add_argument("config")
    lb.set_defaults(func=_cmd_verify)

    plot = sub.add_parser("plot", help="plot seed-mean curves from trace CSVs")
    plot.add_argument("csv", nargs="+")
    plot.add_argument("-o", "--output", required=True)
    plot.add_argument("--column", default="gap", choices=ex.COLUMNS)
    plot.set_defaults(func=_cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvalidConfig as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
