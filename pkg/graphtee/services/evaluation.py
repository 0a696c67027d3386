"""Metrics, multi-seed experiments and parameter sweeps."""

from concurrent.futures import ProcessPoolExecutor
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from graphtee import __version__
from graphtee.core.exceptions import AppException, ContractError, ErrorRecord, ParameterError
from graphtee.core.health import ResourceTimer
from graphtee.core.logging import get_logger, log_structured
from graphtee.models.config import SWEEP_AXES, RunConfig
from graphtee.models.report import MetricAggregate, MetricsReport, MetricsRow
from graphtee.services.dataset_io import split_samples
from graphtee.services.datagen import build_dataset
from graphtee.services.graphs import GraphSample, highest_degree_node
from graphtee.services.training import fit_method

logger = get_logger(__name__)

AGGREGATED_METRICS = ("sqrt_pehe", "eps_ate", "selection_recall", "selected_lambda", "val_loss")
SUMMARY_METRICS = ("sqrt_pehe", "eps_ate")


def pehe_ate_from_effects(true_cate: np.ndarray, predicted_cate: np.ndarray) -> Tuple[float, float]:
    """Root PEHE and absolute ATE error of predicted effects."""
    true_cate = np.asarray(true_cate, dtype=np.float64)
    predicted_cate = np.asarray(predicted_cate, dtype=np.float64)
    if true_cate.size == 0:
        raise ContractError("cannot evaluate on an empty test set")
    if true_cate.shape != predicted_cate.shape:
        raise ContractError(f"{true_cate.shape} true effects vs {predicted_cate.shape} predictions")
    sqrt_pehe = float(np.sqrt(np.mean(np.square(true_cate - predicted_cate))))
    eps_ate = float(np.abs(np.mean(true_cate) - np.mean(predicted_cate)))
    return sqrt_pehe, eps_ate


def pehe_ate(samples: Sequence[GraphSample], predictor: Any) -> Tuple[float, float]:
    """``(sqrt_pehe, eps_ate)`` of a predictor on samples carrying both potential outcomes."""
    if not samples:
        raise ContractError("cannot evaluate on an empty test set")
    true_cate = np.array([sample.cate for sample in samples])
    return pehe_ate_from_effects(true_cate, predictor.cate(samples))


def selection_recall(samples: Sequence[GraphSample], selector: Any, k_percent: Optional[float] = None) -> float:
    """Share of graphs whose confounder set holds the highest-degree node."""
    if not samples:
        raise ContractError("selection recall needs at least one graph")
    if k_percent is not None:
        selector = selector.with_k_percent(k_percent)
    partitions = selector.partitions(samples)
    hits = sum(
        int(highest_degree_node(sample) in set(partition.confounders.tolist()))
        for sample, partition in zip(samples, partitions)
    )
    return hits / len(samples)


def _cell_config(config: RunConfig, axis: Optional[str], value: Optional[float]) -> RunConfig:
    if axis is None:
        return config
    if axis == "alpha":
        return config.with_overrides({"dataset.alpha": float(value)})
    if axis == "n_nodes":
        return config.with_overrides({"dataset.n_nodes": int(value)})
    if axis == "lambda":
        return config.with_overrides({"train.fixed_lambda": float(value)})
    raise ParameterError(f"unknown sweep axis {axis!r}")


def run_seed(payload: Dict[str, Any]) -> List[Dict[str, Any]]:
    """Generate one dataset and evaluate every method on it.

    Takes and returns plain data so that it can run in a worker process.
    """
    config = RunConfig.model_validate(payload["config"])
    seed, axis, value = payload["seed"], payload["axis"], payload["value"]
    config = _cell_config(config, axis, value)
    try:
        samples, _ = build_dataset(config.dataset, seed)
    except AppException as exc:
        record = exc.to_record()
        log_structured(logger, "warning", "dataset generation failed", {"seed": seed, "axis_value": value, "error": str(record)})
        return [MetricsRow(seed=seed, method=method, axis_value=value, error=record).model_dump() for method in payload["methods"]]
    train = split_samples(samples, "train")
    val = split_samples(samples, "validation")
    test = split_samples(samples, "test")

    rows = []
    for method in payload["methods"]:
        row = MetricsRow(seed=seed, method=method, axis_value=value)
        timer = ResourceTimer()
        try:
            with timer:
                fit = fit_method(method, train, val, config.train, seed)
                row.sqrt_pehe, row.eps_ate = pehe_ate(test, fit.predictor)
                row.selected_lambda = fit.selected_lambda
                row.val_loss = fit.val_loss if np.isfinite(fit.val_loss) else None
                if fit.selector is not None:
                    row.selection_recall = selection_recall(test, fit.selector)
        except Exception as exc:
            row.error = ErrorRecord.from_exception(exc)
        row.runtime_s = round(timer.runtime_s, 3)
        row.peak_rss_mb = timer.peak_rss_mb
        if row.error:
            log_structured(logger, "warning", "experiment cell failed", {
                "seed": seed, "method": method, "axis_value": value, "error": str(row.error),
            })
        else:
            log_structured(logger, "info", "experiment cell finished", {
                "seed": seed,
                "method": method,
                "axis_value": value,
                "sqrt_pehe": round(row.sqrt_pehe, 6),
                "eps_ate": round(row.eps_ate, 6),
                "runtime_s": row.runtime_s,
            })
        rows.append(row.model_dump())
    return rows


def aggregate_rows(rows: Sequence[MetricsRow]) -> List[MetricAggregate]:
    """Mean and standard error per (method, axis value, metric); SE is 0 for one seed."""
    aggregates: List[MetricAggregate] = []
    frame = pd.DataFrame([row.model_dump() for row in rows])
    if frame.empty:
        return aggregates
    frame = frame[frame["error"].isna()]
    for (method, axis_value), group in frame.groupby(["method", "axis_value"], dropna=False, sort=False):
        for metric in AGGREGATED_METRICS:
            values = group[metric].dropna().astype(float).to_numpy()
            if values.size == 0:
                continue
            se = float(np.std(values, ddof=1) / np.sqrt(values.size)) if values.size > 1 else 0.0
            aggregates.append(MetricAggregate(
                method=method,
                axis_value=None if pd.isna(axis_value) else float(axis_value),
                metric=metric,
                mean=float(np.mean(values)),
                se=se,
                n=int(values.size),
            ))
    return aggregates


def _run_units(units: List[Dict[str, Any]], jobs: int) -> List[Dict[str, Any]]:
    if jobs <= 1 or len(units) <= 1:
        results = [run_seed(unit) for unit in units]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            results = list(executor.map(run_seed, units))
    return [row for rows in results for row in rows]


def _build_report(config: RunConfig, axis: Optional[str], rows: List[Dict[str, Any]]) -> MetricsReport:
    parsed = [MetricsRow.model_validate(row) for row in rows]
    return MetricsReport(
        config_hash=config.digest(),
        tool_version=__version__,
        axis=axis,
        rows=parsed,
        aggregates=aggregate_rows(parsed),
    )


def run_experiment(
    config: RunConfig,
    methods: Optional[Sequence[str]] = None,
    seeds: Optional[Sequence[int]] = None,
    jobs: int = 1,
) -> MetricsReport:
    """Evaluate each method on a fresh dataset per seed.

    Failures are recorded on their cell and the remaining cells proceed.
    """
    methods = list(methods or config.experiment.methods)
    seeds = list(seeds if seeds is not None else config.experiment.seeds)
    if not methods or not seeds:
        raise ContractError("an experiment needs at least one method and one seed")
    units = [
        {"config": config.model_dump(mode="json"), "seed": seed, "methods": methods, "axis": None, "value": None}
        for seed in seeds
    ]
    return _build_report(config, None, _run_units(units, jobs))


def sweep(
    axis: str,
    values: Sequence[float],
    config: RunConfig,
    methods: Optional[Sequence[str]] = None,
    seeds: Optional[Sequence[int]] = None,
    jobs: int = 1,
) -> MetricsReport:
    """``run_experiment`` once per value of ``alpha``, ``lambda`` or ``n_nodes``."""
    if axis not in SWEEP_AXES:
        raise ParameterError(f"unknown sweep axis {axis!r}; expected one of {', '.join(SWEEP_AXES)}")
    if not values:
        raise ContractError("a sweep needs at least one value")
    methods = list(methods or config.experiment.methods)
    seeds = list(seeds if seeds is not None else config.experiment.seeds)
    units = [
        {"config": config.model_dump(mode="json"), "seed": seed, "methods": methods, "axis": axis, "value": float(value)}
        for value in values
        for seed in seeds
    ]
    log_structured(logger, "info", "sweep started", {"axis": axis, "values": list(values), "cells": len(units) * len(methods)})
    return _build_report(config, axis, _run_units(units, jobs))


def to_long_table(report: MetricsReport) -> pd.DataFrame:
    """Long format: one row per (seed, method, axis_value, metric)."""
    columns = ["seed", "method", "axis_value", "metric", "value"]
    frame = pd.DataFrame([row.model_dump() for row in report.rows])
    if frame.empty:
        return pd.DataFrame(columns=columns)
    metrics = [metric for metric in AGGREGATED_METRICS + ("runtime_s", "peak_rss_mb") if metric in frame]
    long = frame.melt(id_vars=["seed", "method", "axis_value"], value_vars=metrics, var_name="metric", value_name="value")
    return long.dropna(subset=["value"])[columns].reset_index(drop=True)


def render_summary(report: MetricsReport) -> str:
    """Plain-text table of mean ± standard error per method."""
    lines = []
    by_key: Dict[Tuple[Optional[float], str], Dict[str, MetricAggregate]] = {}
    for aggregate in report.aggregates:
        by_key.setdefault((aggregate.axis_value, aggregate.method), {})[aggregate.metric] = aggregate
    axis_values = sorted({key[0] for key in by_key}, key=lambda v: (v is None, v))
    header = f"{'method':<14}{'sqrt_pehe':>24}{'eps_ate':>24}"
    for axis_value in axis_values:
        if report.axis:
            lines.append(f"{report.axis} = {axis_value:g}")
        lines.append(header)
        lines.append("-" * len(header))
        for (value, method), metrics in by_key.items():
            if value != axis_value:
                continue
            cells = []
            for metric in SUMMARY_METRICS:
                aggregate = metrics.get(metric)
                cells.append(f"{aggregate.mean:.3f} ± {aggregate.se:.3f}" if aggregate else "n/a")
            lines.append(f"{method:<14}{cells[0]:>24}{cells[1]:>24}")
        lines.append("")
    failures = [row for row in report.rows if row.error]
    if failures:
        lines.append(f"{len(failures)} failed cell(s):")
        lines.extend(f"  seed {row.seed} {row.method}: {row.error}" for row in failures)
    return "\n".join(lines).rstrip() + "\n"
