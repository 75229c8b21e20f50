"""Command-line entry point: ``budgetbo run | aggregate | plot``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .exceptions import ConfigError
from .harness import (
    aggregate_traces,
    default_output_dir,
    emit_plot,
    load_config,
    read_trace,
    run_experiment,
    trace_path,
    write_aggregate,
)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _cmd_run(args):
    config = load_config(args.config)
    out = args.out or config.output_dir or default_output_dir()
    summaries = run_experiment(config, out, parallel=args.parallel, seed_offset=args.seed_offset)
    failed = [s for s in summaries if s["status"] != "ok"]
    for s in summaries:
        print(f"{s['method']:12s} seed={s['seed']:<4d} evals={s['n_evaluations']:<4d} "
              f"best={s['best_value']} overrun={s['overrun']:.4g} {s['status']}")
    return EXIT_RUNTIME if failed else EXIT_OK


def _cmd_aggregate(args):
    config = load_config(args.config)
    run_dir = Path(args.out or config.output_dir or default_output_dir())
    seeds = [s + args.seed_offset for s in config.seeds]
    traces, budget = {}, 0.0
    for m in config.methods:
        traces[m] = [read_trace(trace_path(run_dir, m, s)) for s in seeds]
        for s in seeds:
            summary = json.loads((run_dir / f"summary_{m}_seed{s}.json").read_text(encoding="utf-8"))
            budget = max(budget, summary["budget"])
    dest = run_dir / "aggregate.csv"
    write_aggregate(dest, aggregate_traces(traces, budget))
    print(dest)
    return EXIT_OK


def _cmd_plot(args):
    dest = args.out or str(Path(args.aggregate).with_suffix(".svg"))
    emit_plot(args.aggregate, dest)
    print(dest)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="budgetbo", description="Budget-aware Bayesian optimization runs")
    parser.add_argument("-v", "--verbose", action="store_true", help="log every iteration")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run every method and seed of a config")
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--seed-offset", type=int, default=0, help="added to every configured seed")
    p.add_argument("--parallel", type=int, default=1, help="number of runs executed concurrently")
    p.add_argument("--out", help="output directory (default: config output_dir or $BUDGETBO_OUT)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("aggregate", help="rebuild aggregate.csv from existing traces")
    p.add_argument("--config", required=True)
    p.add_argument("--seed-offset", type=int, default=0)
    p.add_argument("--out", help="directory holding the traces")
    p.set_defaults(func=_cmd_aggregate)

    p = sub.add_parser("plot", help="render an aggregate CSV as SVG")
    p.add_argument("aggregate", help="aggregate CSV")
    p.add_argument("--out", help="SVG path (default: next to the CSV)")
    p.set_defaults(func=_cmd_plot)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "parallel", 1) < 1:
        parser.error("--parallel must be >= 1")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError, RuntimeError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
