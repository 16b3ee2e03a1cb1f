"""Command-line entry point: ``multipop <command> --config FILE [--out DIR]``.

Exit status is 0 on success, 2 when the experiment's own check fails and 1
on usage or runtime errors.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .experiments import COMMANDS, run_command

EXIT_OK, EXIT_ERROR, EXIT_FAILED = 0, 1, 2

HELP = {
    "simulate": "run the particle system and check the support bound",
    "pde": "solve the density system and check mass and positivity",
    "converge": "error e(N) against a reference as the number of agents grows",
    "stability": "distance between perturbed runs against the stability envelope",
    "consistency": "particle label marginals against the density solution",
    "validate": "empirical Lipschitz and growth quotients against analytic constants",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="multipop",
        description="Multi-population particle and density simulations with built-in consistency checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", required=True, type=Path, help="key = value configuration file")
        p.add_argument("--out", type=Path, default=None, help="output directory (default: out/<command>)")
        p.add_argument("--seed", type=int, default=None, help="override the configured seed(s)")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for independent runs")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_ERROR
    out = args.out if args.out is not None else Path("out") / args.command
    try:
        cfg = load_config(args.config)
        result = run_command(args.command, cfg, out, args.seed, args.jobs)
    except (ConfigError, OSError, ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    status = "ok" if result.ok else "FAILED"
    print(f"{args.command}: {status}; report written to {out}")
    for k, v in result.summary.items():
        print(f"  {k} = {v}")
    return EXIT_OK if result.ok else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
