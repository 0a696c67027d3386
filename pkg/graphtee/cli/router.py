"""Top-level argument parser and command dispatch."""

import argparse
import sys
from typing import Callable, List, Optional

from graphtee import __version__
from graphtee.cli import data, experiment, train, verify
from graphtee.core.exceptions import EXIT_USAGE
from graphtee.core.logging import app_logger, setup_logging

# Each command module contributes its subcommands
COMMAND_MODULES = [data, train, experiment, verify]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphtee",
        description="Treatment-effect estimation on graph-structured targets",
    )
    parser.add_argument("--version", action="version", version=f"graphtee {__version__}")
    parser.add_argument("--log-level", help="Override GRAPHTEE_LOG_LEVEL")
    subparsers = parser.add_subparsers(dest="command", metavar="command")
    subparsers.required = True
    for module in COMMAND_MODULES:
        module.register(subparsers)
    return parser


def dispatch(argv: Optional[List[str]] = None) -> int:
    """Parse ``argv`` and run the chosen command.

    Returns:
        0 on success, 1 on a pipeline failure, 2 on a usage error
    """
    parser = build_parser()
    try:
        args = parser.parse_args(sys.argv[1:] if argv is None else argv)
    except SystemExit as exc:
        # argparse exits 0 for --help/--version and 2 for usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    if args.log_level:
        setup_logging(level=args.log_level)
    handler: Callable[[argparse.Namespace], int] = args.handler
    app_logger.debug(f"Running command {args.command}")
    return handler(args)
