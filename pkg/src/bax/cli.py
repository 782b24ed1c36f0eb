"""Command-line entry point.

``bax run config.yaml`` executes every configured method and trial, writes
results.csv plus per-run JSON records to the output directory, echoes the
fully resolved config next to them, and optionally renders a learning-curve
figure for one metric.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError
from .harness import (
    default_out_dir,
    execute_experiment,
    override,
    parse_config,
    serialize_config,
    write_results,
)
from .report import emit_plot


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bax")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="execute an experiment config")
    run.add_argument("config", help="path to a YAML experiment config")
    run.add_argument("--out", default=None,
                     help="output directory (default: $BAX_OUT_DIR or ./bax-results)")
    run.add_argument("--seed", type=int, default=None,
                     help="override the config's base_seed")
    run.add_argument("--trials", type=int, default=None,
                     help="override the config's trial count")
    run.add_argument("--plot", metavar="METRIC", default=None,
                     help="also render a learning-curve SVG for this metric")
    return parser


def run_command(args) -> int:
    config = override(parse_config(args.config), seed=args.seed, trials=args.trials)
    out = default_out_dir(args.out)
    table = execute_experiment(config)
    out.mkdir(parents=True, exist_ok=True)
    serialize_config(config, out / "config-resolved.yaml")
    written = write_results(table, out)
    if args.plot is not None:
        written.append(emit_plot(table, args.plot, out / f"plot-{args.plot}.svg"))
    print(f"wrote {len(written) + 1} files to {out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return run_command(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary, report and exit
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
