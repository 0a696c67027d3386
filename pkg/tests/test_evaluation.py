import numpy as np
import pytest

from graphtee.core.config import settings
from graphtee.core.exceptions import ContractError, ErrorRecord, ParameterError
from graphtee.models.config import METHODS, DatasetConfig, RunConfig, TrainConfig
from graphtee.models.report import MetricsRow
from graphtee.services.datagen import build_dataset
from graphtee.services.dataset_io import split_samples
from graphtee.services.evaluation import (
    aggregate_rows,
    pehe_ate,
    pehe_ate_from_effects,
    render_summary,
    run_experiment,
    selection_recall,
    sweep,
    to_long_table,
)
from graphtee.services.networks import MeanBaseline, OracleSelector
from graphtee.services.training import build_selector, fit_method


class TestMetrics:
    def test_worked_example(self):
        sqrt_pehe, eps_ate = pehe_ate_from_effects(np.array([1.0, 2.0, 3.0]), np.array([1.0, 2.0, 6.0]))
        assert sqrt_pehe == pytest.approx(np.sqrt(3.0))
        assert eps_ate == pytest.approx(1.0)

    def test_perfect_predictions(self):
        assert pehe_ate_from_effects(np.array([0.5, -1.0]), np.array([0.5, -1.0])) == (0.0, 0.0)

    def test_constant_predictor(self, toy_val):
        effects = np.array([s.cate for s in toy_val])
        sqrt_pehe, eps_ate = pehe_ate(toy_val, MeanBaseline(0.0, float(np.mean(effects))))
        assert eps_ate == pytest.approx(0.0, abs=1e-12)
        assert sqrt_pehe == pytest.approx(np.std(effects))

    def test_empty_test_set(self):
        with pytest.raises(ContractError):
            pehe_ate([], MeanBaseline(0.0, 1.0))

    def test_shape_mismatch(self):
        with pytest.raises(ContractError):
            pehe_ate_from_effects(np.ones(3), np.ones(2))

    def test_ate_error_never_exceeds_root_pehe(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            n = int(rng.integers(1, 40))
            true_cate = rng.normal(0.0, 5.0, size=n)
            predicted = true_cate + rng.normal(rng.normal(), 2.0, size=n)
            sqrt_pehe, eps_ate = pehe_ate_from_effects(true_cate, predicted)
            assert eps_ate <= sqrt_pehe + 1e-12

    def test_shared_shift_of_both_arms(self, toy_val):
        base = pehe_ate(toy_val, MeanBaseline(0.0, 2.0))
        shifted = pehe_ate(toy_val, MeanBaseline(7.5, 9.5))
        assert shifted == pytest.approx(base)

    def test_oracle_selection_recall(self, toy_val):
        assert selection_recall(toy_val, OracleSelector(10.0)) == 1.0
        assert selection_recall(toy_val, OracleSelector(50.0), k_percent=100.0) == 1.0


class TestAggregation:
    def test_mean_and_standard_error(self):
        rows = [MetricsRow(seed=s, method="mean", sqrt_pehe=v, eps_ate=0.1) for s, v in enumerate([1.0, 2.0, 3.0])]
        aggregates = {a.metric: a for a in aggregate_rows(rows)}
        assert aggregates["sqrt_pehe"].mean == pytest.approx(2.0)
        assert aggregates["sqrt_pehe"].se == pytest.approx(1.0 / np.sqrt(3.0))
        assert aggregates["eps_ate"].se == pytest.approx(0.0)
        assert aggregates["sqrt_pehe"].n == 3

    def test_single_seed_has_zero_error(self):
        aggregates = aggregate_rows([MetricsRow(seed=0, method="gnn", sqrt_pehe=1.5, eps_ate=0.5)])
        assert all(a.se == 0.0 for a in aggregates)

    def test_failed_cells_are_excluded(self):
        rows = [
            MetricsRow(seed=0, method="gnn", sqrt_pehe=1.0, eps_ate=0.5),
            MetricsRow(seed=1, method="gnn", error=ErrorRecord(type="TrainingError", detail="diverged")),
        ]
        aggregates = {a.metric: a for a in aggregate_rows(rows)}
        assert aggregates["sqrt_pehe"].n == 1


class TestExperiment:
    def test_small_run(self, tiny_run_config):
        report = run_experiment(tiny_run_config, methods=["mean", "gnn"], seeds=[0, 1])
        assert len(report.rows) == 4
        assert all(row.error is None for row in report.rows)
        assert {a.method for a in report.aggregates} == {"mean", "gnn"}
        table = to_long_table(report)
        assert list(table.columns) == ["seed", "method", "axis_value", "metric", "value"]
        assert set(table["metric"]) >= {"sqrt_pehe", "eps_ate"}
        summary = render_summary(report)
        assert "mean" in summary and "gnn" in summary

    def test_reproducible_across_workers(self, tiny_run_config):
        serial = run_experiment(tiny_run_config, methods=["mean", "deepsets"], seeds=[0, 1], jobs=1)
        parallel = run_experiment(tiny_run_config, methods=["mean", "deepsets"], seeds=[0, 1], jobs=2)
        assert [r.sqrt_pehe for r in serial.rows] == [r.sqrt_pehe for r in parallel.rows]

    def test_failing_cell_is_recorded(self, tiny_train_config):
        config = RunConfig(dataset=DatasetConfig(n_graphs=5, n_nodes=6, d=2), train=tiny_train_config)
        report = run_experiment(config, methods=["mean", "graphtee"], seeds=[0])
        by_method = {row.method: row for row in report.rows}
        assert by_method["mean"].error is None
        assert by_method["graphtee"].error.type == "TrainingError"
        assert "TrainingError" in render_summary(report)

    def test_sweep_over_alpha(self, tiny_run_config):
        report = sweep("alpha", [0.0, 2.0], tiny_run_config, methods=["mean"], seeds=[0, 1])
        assert report.axis == "alpha"
        assert sorted({row.axis_value for row in report.rows}) == [0.0, 2.0]
        assert "alpha = 2" in render_summary(report)

    def test_sweep_over_lambda_fixes_lambda(self, tiny_run_config):
        report = sweep("lambda", [0.5], tiny_run_config, methods=["gnn_cfr"], seeds=[0])
        assert report.rows[0].selected_lambda == 0.5

    def test_unknown_axis(self, tiny_run_config):
        with pytest.raises(ParameterError):
            sweep("width", [1.0], tiny_run_config, methods=["mean"], seeds=[0])


@pytest.mark.slow
class TestFullSize:
    def test_graphtee_beats_the_mean_baseline(self):
        config = RunConfig(dataset=DatasetConfig(n_graphs=500, n_nodes=30, d=5, alpha=1.0))
        config = config.with_overrides({"train.epochs_stage1": 50, "train.epochs_stage2": 100, "train.fixed_lambda": 1.0})
        report = run_experiment(config, methods=["mean", "graphtee"], seeds=[0, 1, 2])
        means = {(a.method, a.metric): a.mean for a in report.aggregates}
        assert means[("graphtee", "sqrt_pehe")] < means[("mean", "sqrt_pehe")]

    def test_method_ordering_on_the_default_synthetic_config(self):
        report = run_experiment(RunConfig(), seeds=list(range(10)), jobs=settings.jobs)
        pehe = {a.method: a.mean for a in report.aggregates if a.metric == "sqrt_pehe"}
        assert set(pehe) == set(METHODS)
        assert pehe["graphtee"] <= pehe["gnn_cfr"]
        assert pehe["gnn_cfr"] < 0.6 * pehe["gnn"]
        assert pehe["gnn"] < pehe["deepsets"]
        assert pehe["deepsets"] < pehe["mean"]

    def test_balancing_matters_more_under_bias(self):
        report = sweep("alpha", [0.0, 1.0], RunConfig(), methods=["gnn", "gnn_cfr", "graphtee"], seeds=list(range(10)), jobs=settings.jobs)
        pehe = {(a.axis_value, a.method): a.mean for a in report.aggregates if a.metric == "sqrt_pehe"}
        gap = {alpha: abs(pehe[(alpha, "gnn")] - pehe[(alpha, "gnn_cfr")]) for alpha in (0.0, 1.0)}
        assert gap[0.0] < gap[1.0]
        assert pehe[(1.0, "graphtee")] < pehe[(1.0, "gnn")]

    def test_lambda_curve_bottoms_out_below_the_largest_lambda(self):
        config = RunConfig()
        interior = 0
        for seed in range(10):
            samples, _ = build_dataset(config.dataset, seed)
            fit = fit_method("graphtee", split_samples(samples, "train"), split_samples(samples, "validation"), config.train, seed)
            losses = [row["val_loss"] for row in fit.lambda_report]
            assert len(losses) == len(config.train.lambda_grid)
            interior += int(np.argmin(losses) < len(losses) - 1)
        assert interior >= 7

    def test_learned_selector_finds_the_confounder(self):
        samples, _ = build_dataset(DatasetConfig(), 0)
        train, val, test = (split_samples(samples, split) for split in ("train", "validation", "test"))
        selector, _ = build_selector(train, val, TrainConfig(epochs_stage1=50), seed=0)
        assert selection_recall(test, selector, k_percent=10.0) > 0.5
