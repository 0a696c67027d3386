import json

import numpy as np
import pytest
from pydantic import ValidationError

from graphtee.core.error_handlers import with_error_handling
from graphtee.core.exceptions import (
    EXIT_FAILURE,
    EXIT_OK,
    EXIT_USAGE,
    ConfigurationError,
    ErrorRecord,
    ShapeError,
    TrainingError,
    UsageError,
)
from graphtee.core.health import HealthCheck, ResourceTimer
from graphtee.core.utils import config_hash, derive_seed, labelled_rng, output_path, stream_rng
from graphtee.models.config import RunConfig, load_run_config


class TestSeeds:
    def test_labels_give_distinct_seeds(self):
        seeds = {derive_seed(0, label) for label in ("topology", "covariates", "treatment", "noise")}
        assert len(seeds) == 4

    def test_derivation_is_stable(self):
        assert derive_seed(42, "split") == derive_seed(42, "split")
        assert derive_seed(42, "split") != derive_seed(43, "split")

    def test_substreams_do_not_depend_on_creation_order(self):
        first = stream_rng(7, 3).random(4)
        stream_rng(7, 1).random(100)
        np.testing.assert_array_equal(stream_rng(7, 3).random(4), first)
        assert not np.array_equal(stream_rng(7, 2).random(4), first)

    def test_labelled_streams(self):
        a = labelled_rng(1, "batches:stage1", 1).random()
        b = labelled_rng(1, "batches:stage1", 2).random()
        assert a != b


class TestConfigHash:
    def test_key_order_does_not_matter(self):
        assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
        assert len(config_hash({})) == 16

    def test_output_path(self, tmp_path):
        path = output_path(tmp_path / "out", "eval", "0123456789abcdef", "json")
        assert path.name == "eval.0123456789abcdef.json"
        assert path.parent.is_dir()


class TestRunConfig:
    def test_defaults(self):
        config = RunConfig()
        assert config.dataset.n_graphs == 2000
        assert config.dataset.outcome_scale == 1.0
        assert config.train.lambda_grid[0] == 1e-3
        assert config.experiment.seeds == list(range(10))

    def test_toml_and_json_agree(self, tmp_path):
        toml_path = tmp_path / "run.toml"
        toml_path.write_text("seed = 3\n[dataset]\nalpha = 1.5\n")
        json_path = tmp_path / "run.json"
        json_path.write_text(json.dumps({"seed": 3, "dataset": {"alpha": 1.5}}))
        assert load_run_config(toml_path).digest() == load_run_config(json_path).digest()

    def test_unknown_key_is_rejected(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"dataset": {"colour": "red"}}))
        with pytest.raises(ConfigurationError):
            load_run_config(path)

    def test_unsupported_format(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("seed: 1\n")
        with pytest.raises(ConfigurationError):
            load_run_config(path)

    def test_overrides_skip_unset_values(self):
        config = RunConfig().with_overrides({"dataset.alpha": 2.0, "train.method": None})
        assert config.dataset.alpha == 2.0
        assert config.train.method == "graphtee"

    def test_overrides_are_validated(self):
        with pytest.raises(ValidationError):
            RunConfig().with_overrides({"dataset.m": 500})


class TestErrorHandling:
    def test_success_passes_through(self):
        assert with_error_handling(lambda: EXIT_OK)() == EXIT_OK

    def test_application_errors_map_to_exit_codes(self):
        def usage():
            raise UsageError("bad flag")

        def shape():
            raise ShapeError("add", (2, 3), (3, 2))

        assert with_error_handling(usage)() == EXIT_USAGE
        assert with_error_handling(shape)() == EXIT_FAILURE

    def test_unexpected_errors_exit_1(self):
        def boom():
            raise RuntimeError("boom")

        assert with_error_handling(boom)() == EXIT_FAILURE

    def test_error_record(self):
        record = ShapeError("matmul", (2, 3), (4, 5)).to_record()
        assert record.type == "ShapeError"
        assert record.context == {"op": "matmul"}

    def test_error_record_of_foreign_exception(self):
        record = ErrorRecord.from_exception(RuntimeError("boom"))
        assert record.type == "RuntimeError"
        assert str(record) == "RuntimeError: boom"
        assert ErrorRecord.from_exception(TrainingError("diverged")).type == "TrainingError"


class TestHealth:
    def test_process_snapshot(self):
        snapshot = HealthCheck.check_process()
        assert snapshot["status"] == "healthy"
        assert snapshot["rss_mb"] > 0

    def test_timer(self):
        with ResourceTimer() as timer:
            sum(range(1000))
        assert timer.runtime_s >= 0.0
        assert timer.peak_rss_mb > 0
