"""experiment and sweep: multi-seed comparisons of the estimators."""

import argparse
from pathlib import Path

from graphtee.cli.common import add_common_arguments, add_jobs_argument, jobs, out_dir, parse_list, parse_seeds, resolve_config
from graphtee.core.error_handlers import with_error_handling
from graphtee.core.exceptions import EXIT_FAILURE, EXIT_OK, UsageError
from graphtee.core.health import HealthCheck
from graphtee.core.logging import get_logger, log_structured
from graphtee.core.utils import config_hash, output_path
from graphtee.models.config import METHODS, SWEEP_AXES
from graphtee.models.report import MetricsReport
from graphtee.services.evaluation import render_summary, run_experiment, sweep, to_long_table
from graphtee.services.records import write_json

logger = get_logger(__name__)


def _add_grid_arguments(parser: argparse.ArgumentParser) -> None:
    add_common_arguments(parser)
    add_jobs_argument(parser)
    parser.add_argument("--methods", help=f"Comma-separated subset of {','.join(METHODS)}")
    parser.add_argument("--seeds", help="Seed count N (0..N-1) or a comma-separated list")


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("experiment", help="Compare methods over several seeds")
    _add_grid_arguments(parser)
    parser.set_defaults(handler=experiment)

    parser = subparsers.add_parser("sweep", help="Repeat the experiment along one axis")
    _add_grid_arguments(parser)
    parser.add_argument("--axis", choices=SWEEP_AXES, help="Swept parameter")
    parser.add_argument("--values", help="Comma-separated axis values")
    parser.set_defaults(handler=run_sweep)


def _methods(args: argparse.Namespace):
    methods = parse_list(args.methods)
    unknown = [method for method in methods or [] if method not in METHODS]
    if unknown:
        raise UsageError(f"unknown method(s) {', '.join(unknown)}; expected a subset of {', '.join(METHODS)}")
    return methods


def _write_outputs(report: MetricsReport, directory: Path, command: str, digest: str) -> int:
    write_json(output_path(directory, command, digest, "json"), report.model_dump(mode="json"))
    to_long_table(report).to_csv(output_path(directory, command, digest, "csv"), index=False)
    summary = render_summary(report)
    output_path(directory, command, digest, "txt").write_text(summary + "\n", encoding="utf-8")
    print(summary)
    failed = [row for row in report.rows if row.error]
    if failed:
        log_structured(logger, "warning", "some cells failed", {"failed": len(failed), "total": len(report.rows)})
        return EXIT_FAILURE
    return EXIT_OK


@with_error_handling
def experiment(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    log_structured(logger, "info", "experiment host", HealthCheck.check_system())
    methods = _methods(args)
    seeds = parse_seeds(args.seeds)
    report = run_experiment(config, methods, seeds, jobs(args))
    digest = config_hash({"run": config.model_dump(mode="json"), "methods": methods, "seeds": seeds})
    return _write_outputs(report, out_dir(args), "experiment", digest)


@with_error_handling
def run_sweep(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    log_structured(logger, "info", "sweep host", HealthCheck.check_system())
    axis = args.axis or config.experiment.axis
    values = parse_list(args.values, float) or config.experiment.values
    if axis is None:
        raise UsageError("sweep needs --axis or experiment.axis in the config")
    if not values:
        raise UsageError("sweep needs --values or experiment.values in the config")
    methods = _methods(args)
    seeds = parse_seeds(args.seeds)
    report = sweep(axis, values, config, methods, seeds, jobs(args))
    digest = config_hash({"run": config.model_dump(mode="json"), "axis": axis, "values": values, "methods": methods, "seeds": seeds})
    return _write_outputs(report, out_dir(args), "sweep", digest)
