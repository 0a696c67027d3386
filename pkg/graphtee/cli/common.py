"""Arguments, configuration and output handling shared by every command."""

import argparse
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from pydantic import ValidationError

from graphtee.core.config import settings
from graphtee.core.exceptions import UsageError
from graphtee.models.config import RunConfig, load_run_config


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="TOML or JSON run configuration")
    parser.add_argument("--seed", type=int, help="Master seed (overrides the config)")
    parser.add_argument("--out", help=f"Output directory (default: {settings.out_dir})")


def add_jobs_argument(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--jobs", type=int, default=None, help="Worker processes (default: GRAPHTEE_JOBS)")


def resolve_config(args: argparse.Namespace, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Config file, then command-line flags; flags win."""
    config = load_run_config(args.config)
    merged = {"seed": args.seed}
    merged.update(overrides or {})
    try:
        return config.with_overrides(merged)
    except ValidationError as exc:
        raise UsageError(f"invalid command-line value: {exc}") from None


def out_dir(args: argparse.Namespace) -> Path:
    return Path(args.out or settings.out_dir)


def jobs(args: argparse.Namespace) -> int:
    value = args.jobs if args.jobs is not None else settings.jobs
    if value < 1:
        raise UsageError(f"--jobs must be >= 1, got {value}")
    return value


def parse_list(text: Optional[str], cast=str) -> Optional[List[Any]]:
    """Comma-separated flag value, e.g. ``--methods mean,gnn``."""
    if text is None:
        return None
    try:
        return [cast(item.strip()) for item in text.split(",") if item.strip()]
    except ValueError:
        raise UsageError(f"cannot parse list {text!r}") from None


def parse_seeds(text: Optional[str]) -> Optional[Sequence[int]]:
    """``0,3,5`` lists seeds explicitly; a single number ``N`` means seeds 0..N-1."""
    values = parse_list(text, int)
    if values is not None and len(values) == 1 and "," not in text:
        return list(range(values[0]))
    return values
