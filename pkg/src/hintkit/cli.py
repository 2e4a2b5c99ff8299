"""Command-line entry point: one subcommand per pipeline stage.

Exit codes: 0 success, 2 configuration error, 3 missing upstream artifact,
4 transport exhaustion.
"""

from __future__ import annotations

import argparse
import sys

from .client import TransportError
from .pipeline import COMMANDS, ConfigError, MissingUpstreamError, load_config, run_pipeline

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING_UPSTREAM = 3
EXIT_TRANSPORT = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hintkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        cmd = sub.add_parser(command, help=f"run the {command} stage")
        cmd.add_argument("--config", help="TOML config file")
        cmd.add_argument("--dataset", help="question JSONL path (overrides config)")
        cmd.add_argument("--targets", help="comma-separated target model names (overrides config)")
        cmd.add_argument("--strategy", help="restrict evaluate/report to one strategy")
        cmd.add_argument("--out", help="artifact output directory")
        cmd.add_argument("--cache", help="response cache directory")
        cmd.add_argument("--seed", type=int, help="pipeline seed")
        cmd.add_argument("--parallelism", type=int, help="max in-flight requests per model")
        cmd.add_argument("--mock", help="scripted fixture path; switches every client to scripted mode")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {
        "dataset": args.dataset,
        "targets": args.targets,
        "strategy": args.strategy,
        "out": args.out,
        "cache": args.cache,
        "seed": args.seed,
        "parallelism": args.parallelism,
        "mock": args.mock,
    }
    try:
        config = load_config(args.config, overrides)
        outputs = run_pipeline(config, args.command)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingUpstreamError as exc:
        print(f"missing upstream: {exc}", file=sys.stderr)
        return EXIT_MISSING_UPSTREAM
    except TransportError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    for path in outputs:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
