"""Command-line entry point: run, cmin, casr, pycov, and the full pipeline."""

from __future__ import annotations

import argparse
import sys

from . import orchestrator
from .config import dump_config, load_config
from .errors import ConfigError, PipelineError, SpawnFailure

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SPAWN = 2

_SUBCOMMANDS = {
    "run": "fuzz until a stop condition fires",
    "cmin": "minimize the corpus preserving coverage",
    "casr": "triage collected crashes into clustered reports",
    "pycov": "replay the corpus and export line coverage",
    "pipeline": "chain run, cmin, casr, and pycov",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fuzzpipe",
        description="Fuzzing-campaign orchestrator and crash-triage pipeline.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, help_text in _SUBCOMMANDS.items():
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("-c", "--config", required=True, help="campaign config TOML file")
        sub.add_argument(
            "--print-config",
            action="store_true",
            help="print the effective configuration and exit",
        )
        sub.add_argument("--output", default=None, help="override the output directory")
    return parser


def _dispatch(command: str, config) -> None:
    if command == "run":
        orchestrator.run_campaign(config)
    elif command == "cmin":
        orchestrator.cmin_stage(config)
    elif command == "casr":
        orchestrator.casr_stage(config)
    elif command == "pycov":
        orchestrator.pycov_stage(config)
    else:
        orchestrator.run_pipeline(config)


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = load_config(args.config, output_override=args.output)
        if args.print_config:
            sys.stdout.write(dump_config(config))
            return EXIT_OK
        _dispatch(args.command, config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SpawnFailure as exc:
        print(f"spawn failure: {exc}", file=sys.stderr)
        return EXIT_SPAWN
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
