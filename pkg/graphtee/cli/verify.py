"""verify-bounds and grad-check: numerical self-checks."""

import argparse

from graphtee.cli.common import add_common_arguments, out_dir, resolve_config
from graphtee.core.error_handlers import with_error_handling
from graphtee.core.exceptions import EXIT_FAILURE, EXIT_OK, UsageError
from graphtee.core.utils import config_hash, output_path
from graphtee.services.bounds import verify_bounds
from graphtee.services.gradients import check_model_gradients
from graphtee.services.records import write_json, write_jsonl


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("verify-bounds", help="Check the distribution inequalities on random joints")
    add_common_arguments(parser)
    parser.add_argument("--trials", type=int, default=1000, help="Random joints to draw")
    parser.add_argument("--max-support", type=int, default=4, help="Largest support size per variable")
    parser.set_defaults(handler=verify_bounds_command)

    parser = subparsers.add_parser("grad-check", help="Compare model gradients with finite differences")
    add_common_arguments(parser)
    parser.add_argument("--step", type=float, default=1e-5, help="Central-difference step")
    parser.add_argument("--tol", type=float, default=1e-4, help="Largest accepted relative error")
    parser.set_defaults(handler=grad_check_command)


@with_error_handling
def verify_bounds_command(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    if args.trials < 1:
        raise UsageError(f"--trials must be >= 1, got {args.trials}")
    if args.max_support < 2:
        raise UsageError(f"--max-support must be >= 2, got {args.max_support}")
    report = verify_bounds(args.trials, config.seed, args.max_support)
    summary = report.model_dump(mode="json", exclude={"checks"})
    path = output_path(out_dir(args), "verify-bounds", report.config_hash, "jsonl")
    write_jsonl(path, [summary] + [check.model_dump(mode="json") for check in report.checks])
    print(f"{report.n_violations} violations in {len(report.checks)} checks; min slack {summary['min_slack']}")
    return EXIT_FAILURE if report.n_violations else EXIT_OK


@with_error_handling
def grad_check_command(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    if args.step <= 0:
        raise UsageError(f"--step must be positive, got {args.step}")
    reports = check_model_gradients(seed=config.seed, step=args.step, tol=args.tol)
    payload = {stage: report.to_dict() for stage, report in reports.items()}
    digest = config_hash({"seed": config.seed, "step": args.step, "tol": args.tol})
    write_json(output_path(out_dir(args), "grad-check", digest, "json"), payload)
    for stage, report in reports.items():
        status = "ok" if report.passed else "FAILED"
        print(f"{stage}: max relative error {report.max_rel_error:.3e} ({report.worst_param}) {status}")
    return EXIT_OK if all(report.passed for report in reports.values()) else EXIT_FAILURE
