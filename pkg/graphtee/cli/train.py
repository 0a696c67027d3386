"""train and eval: fit an estimator, then score a checkpoint on a dataset."""

import argparse
import math
from typing import List, Tuple

from graphtee.cli.common import add_common_arguments, out_dir, resolve_config
from graphtee.core.error_handlers import with_error_handling
from graphtee.core.exceptions import EXIT_OK, ConfigurationError, UsageError
from graphtee.core.logging import get_logger, log_structured
from graphtee.core.utils import config_hash, output_path
from graphtee import __version__
from graphtee.models.config import METHODS, RunConfig
from graphtee.models.manifest import DatasetManifest
from graphtee.ndgrad import ModelParams
from graphtee.services.checkpoint import load_checkpoint, save_checkpoint
from graphtee.services.dataset_io import load_dataset, split_samples
from graphtee.services.datagen import build_dataset
from graphtee.services.evaluation import pehe_ate, selection_recall
from graphtee.services.graphs import GraphSample
from graphtee.services.networks import LearnedSelector, predictor_from_params
from graphtee.services.records import write_json, write_jsonl
from graphtee.services.training import fit_method

logger = get_logger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("train", help="Train one estimator")
    add_common_arguments(parser)
    parser.add_argument("--data", help="Dataset file; generated from the config when omitted")
    parser.add_argument("--method", choices=METHODS, help="Estimator to train")
    lam = parser.add_mutually_exclusive_group()
    lam.add_argument("--lambda", dest="lam", type=float, help="Fixed regularization strength")
    lam.add_argument("--select-lambda", action="store_true", help="Pick lambda on the validation grid")
    parser.add_argument("--epochs", type=int, help="Epochs for both stages")
    parser.set_defaults(handler=train)

    parser = subparsers.add_parser("eval", help="Evaluate a checkpoint on a dataset")
    add_common_arguments(parser)
    parser.add_argument("--data", required=True, help="Dataset file")
    parser.add_argument("--checkpoint", required=True, help="Checkpoint written by train")
    parser.add_argument("--split", default="test", choices=["train", "validation", "test"])
    parser.set_defaults(handler=evaluate)


def _load_or_build(args: argparse.Namespace, config: RunConfig) -> Tuple[List[GraphSample], DatasetManifest]:
    if args.data:
        return load_dataset(args.data)
    return build_dataset(config.dataset, config.seed)


@with_error_handling
def train(args: argparse.Namespace) -> int:
    overrides = {"train.method": args.method, "train.fixed_lambda": args.lam}
    if args.epochs is not None:
        overrides.update({"train.epochs_stage1": args.epochs, "train.epochs_stage2": args.epochs})
    config = resolve_config(args, overrides)
    if args.select_lambda:
        config = config.model_copy(update={"train": config.train.model_copy(update={"fixed_lambda": None})})
    samples, manifest = _load_or_build(args, config)
    train_split = split_samples(samples, "train")
    val_split = split_samples(samples, "validation")

    method = config.train.method
    fit = fit_method(method, train_split, val_split, config.train, config.seed)
    digest = config_hash({"run": config.model_dump(mode="json"), "data": manifest.config_hash})

    models = {"outcome": fit.predictor.to_params()}
    if fit.selector_params is not None:
        models["selector"] = fit.selector_params
    metadata = {
        "method": method,
        "selected_lambda": fit.selected_lambda,
        "lambda_report": fit.lambda_report,
        "val_loss": fit.val_loss if math.isfinite(fit.val_loss) else None,
        "k_percent": config.train.k_percent,
        "dataset_hash": manifest.config_hash,
        "d": manifest.config.d,
    }
    directory = out_dir(args)
    checkpoint = save_checkpoint(models, output_path(directory, "train", digest, "ckpt"), digest, metadata)
    write_jsonl(output_path(directory, "train", digest, "log.jsonl"), fit.log.records)
    log_structured(logger, "info", "training finished", {
        "method": method,
        "selected_lambda": fit.selected_lambda,
        "val_loss": fit.val_loss,
    })
    print(checkpoint)
    return EXIT_OK


def _check_compatible(params: ModelParams, d: int) -> None:
    architecture = params.architecture
    if architecture.get("model") != "tarnet":
        return
    if architecture.get("d") != d:
        raise ConfigurationError(f"checkpoint expects covariate dimension {architecture.get('d')}, dataset has {d}")
    width = architecture.get("width")
    for name in ("head0.lin1.weight", "encoder.layer1.lin1.weight", "encoder.phi.lin1.weight"):
        tensor = params.get(name)
        if tensor is not None and tensor.shape[1] != width:
            raise ConfigurationError(f"checkpoint tensor {name} does not match width {width}")
    first = "encoder.layer1.lin1.weight" if "encoder.layer1.lin1.weight" in params else "encoder.phi.lin1.weight"
    if first in params and params[first].shape[0] != d:
        raise ConfigurationError(f"checkpoint tensor {first} expects {params[first].shape[0]} inputs, dataset has {d}")


@with_error_handling
def evaluate(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    samples, manifest = load_dataset(args.data)
    models, header = load_checkpoint(args.checkpoint)
    if "outcome" not in models:
        raise UsageError(f"{args.checkpoint} holds no outcome model")
    _check_compatible(models["outcome"], manifest.config.d)
    evaluated = split_samples(samples, args.split)
    predictor = predictor_from_params(models["outcome"])
    sqrt_pehe, eps_ate = pehe_ate(evaluated, predictor)

    metadata = header.get("metadata", {})
    record = {
        "config_hash": header.get("config_hash"),
        "tool_version": __version__,
        "dataset_hash": manifest.config_hash,
        "method": metadata.get("method"),
        "split": args.split,
        "n_samples": len(evaluated),
        "sqrt_pehe": sqrt_pehe,
        "eps_ate": eps_ate,
        "selection_recall": None,
    }
    if "selector" in models:
        selector = LearnedSelector(models["selector"], metadata.get("k_percent", config.train.k_percent))
        record["selection_recall"] = selection_recall(evaluated, selector)
    digest = config_hash({"checkpoint": header.get("config_hash"), "data": manifest.config_hash, "split": args.split})
    path = write_json(output_path(out_dir(args), "eval", digest, "json"), record)
    log_structured(logger, "info", "evaluation finished", {"sqrt_pehe": round(sqrt_pehe, 6), "eps_ate": round(eps_ate, 6)})
    print(path)
    return EXIT_OK
