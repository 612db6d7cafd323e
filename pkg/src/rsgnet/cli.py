"""Command-line entry point: ``rsgnet <mode> --config cfg.json --out dir``."""
from __future__ import annotations

import argparse
import json
import sys

from .errors import RSGError, ValidationError
from .experiments import MODES, load_default_config, run_experiment


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rsgnet",
        description="Randomized stochastic gradient training, bound evaluation and trend sweeps.")
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        p = sub.add_parser(mode, help=f"run a {mode} experiment")
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", help="path to a JSON experiment config")
        src.add_argument("--preset", help="name of a shipped config, e.g. sweep_size")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default="results", help="output directory (default: results)")
        p.add_argument("--workers", type=int, default=None, help="thread pool size for independent runs")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            with open(args.config, encoding="utf-8") as fh:
                cfg = json.load(fh)
        else:
            cfg = load_default_config(args.preset)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    if isinstance(cfg, dict):
        cfg.setdefault("mode", args.mode)
        if cfg["mode"] != args.mode:
            print(f"error: config mode {cfg['mode']!r} does not match subcommand {args.mode!r}",
                  file=sys.stderr)
            return 2
    try:
        doc = run_experiment(cfg, args.out, args.seed, args.workers)
    except ValidationError as exc:
        print("error: invalid config:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  - {problem}", file=sys.stderr)
        return 2
    except RSGError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"{len(doc['records'])} records written to {args.out}/results.csv and {args.out}/summary.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
