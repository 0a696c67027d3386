"""Command-line interface."""

from graphtee.cli.router import build_parser, dispatch

__all__ = ["build_parser", "dispatch"]
