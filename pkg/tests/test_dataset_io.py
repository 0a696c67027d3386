import json

import numpy as np
import pytest

from graphtee.core.exceptions import DatasetFormatError, EvaluationError
from graphtee.services.checkpoint import load_checkpoint, save_checkpoint
from graphtee.services.dataset_io import load_dataset, save_dataset, split_samples
from graphtee.services.datagen import build_dataset
from graphtee.services.networks import MeanBaseline, init_propensity_params, init_tarnet_params
from graphtee.services.records import read_records, render_value, write_records


@pytest.fixture
def saved(tmp_path, tiny_dataset_config):
    samples, manifest = build_dataset(tiny_dataset_config, 5)
    path = save_dataset(samples, manifest, tmp_path / "data.jsonl")
    return samples, manifest, path


def _rewrite_line(path, index, transform):
    lines = path.read_text().split("\n")
    lines[index] = transform(lines[index])
    path.write_text("\n".join(lines))


class TestRenderValue:
    def test_floats_keep_full_precision(self):
        value = 0.1 + 0.2
        assert float(render_value(value)) == value

    def test_integral_float_stays_float(self):
        assert render_value(2.0) == "2.0"
        assert render_value(np.int64(2)) == "2"

    def test_keys_are_sorted(self):
        assert render_value({"b": 1, "a": [True, None]}) == '{"a":[true,null],"b":1}'

    def test_non_finite_is_rejected(self):
        with pytest.raises(EvaluationError):
            render_value(float("nan"))


class TestDatasetFile:
    def test_load_restores_every_value(self, saved):
        samples, manifest, path = saved
        loaded, loaded_manifest = load_dataset(path)
        assert loaded_manifest == manifest
        for original, restored in zip(samples, loaded):
            assert original.id == restored.id
            assert original.topology == restored.topology
            np.testing.assert_array_equal(original.x, restored.x)
            assert (original.t, original.y0, original.y1, original.split) == (
                restored.t, restored.y0, restored.y1, restored.split,
            )

    def test_identical_inputs_give_identical_bytes(self, tmp_path, saved):
        samples, manifest, path = saved
        again = save_dataset(samples, manifest, tmp_path / "again.jsonl")
        assert again.read_bytes() == path.read_bytes()

    def test_splits_partition_the_dataset(self, saved):
        samples, _, _ = saved
        parts = [split_samples(samples, split) for split in ("train", "validation", "test")]
        assert sum(len(part) for part in parts) == len(samples)

    def test_truncated_file(self, saved):
        _, _, path = saved
        lines = path.read_text().split("\n")
        path.write_text("\n".join(lines[:-3]) + "\n")
        with pytest.raises(DatasetFormatError, match="truncated"):
            load_dataset(path)

    def test_checksum_mismatch(self, saved):
        _, _, path = saved
        _rewrite_line(path, 2, lambda line: line.replace('"t":1', '"t":0') if '"t":1' in line else line.replace('"t":0', '"t":1'))
        with pytest.raises(DatasetFormatError, match="checksum"):
            load_dataset(path)

    def test_unsupported_version(self, saved):
        _, _, path = saved
        _rewrite_line(path, 0, lambda line: line.replace('"version":1', '"version":99'))
        with pytest.raises(DatasetFormatError, match="version"):
            load_dataset(path)

    def test_unparsable_record_is_named(self, saved):
        _, _, path = saved
        _rewrite_line(path, 4, lambda line: line[:-5])
        with pytest.raises(DatasetFormatError, match="record 3"):
            load_dataset(path)

    def test_inconsistent_record_is_named(self, tmp_path):
        records = [{"kind": "sample", "id": "g0", "n_nodes": 2, "edges": [[0, 1]], "d": 2, "x": [1.0, 2.0, 3.0],
                    "t": 0, "y0": 0.0, "y1": 1.0, "y_obs": 0.0, "split": "train"}]
        path = write_records(tmp_path / "bad.jsonl", "manifest", {"manifest": {}}, records)
        with pytest.raises(DatasetFormatError):
            load_dataset(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetFormatError):
            load_dataset(tmp_path / "absent.jsonl")

    def test_wrong_kind(self, tmp_path):
        path = write_records(tmp_path / "other.jsonl", "checkpoint", {}, [])
        with pytest.raises(DatasetFormatError):
            read_records(path, "manifest")


class TestCheckpoint:
    def test_round_trip_of_two_groups(self, tmp_path):
        outcome = init_tarnet_params(3, np.random.default_rng(0), width=4, n_layers=2)
        selector = init_propensity_params(3, np.random.default_rng(1), width=4, n_layers=2)
        path = save_checkpoint({"outcome": outcome, "selector": selector}, tmp_path / "model.ckpt", "abc", {"method": "graphtee"})
        models, header = load_checkpoint(path)
        assert models["outcome"].equals(outcome)
        assert models["selector"].equals(selector)
        assert models["outcome"].architecture == outcome.architecture
        assert header["config_hash"] == "abc"
        assert header["metadata"]["method"] == "graphtee"

    def test_scalar_parameters_keep_their_shape(self, tmp_path):
        params = init_tarnet_params(2, np.random.default_rng(0), width=3, n_layers=1)
        models, _ = load_checkpoint(save_checkpoint({"outcome": params}, tmp_path / "m.ckpt", "h"))
        assert models["outcome"]["encoder.layer1.eps"].shape == ()

    def test_mean_baseline(self, tmp_path):
        params = MeanBaseline(1.5, -2.0).to_params()
        models, _ = load_checkpoint(save_checkpoint({"outcome": params}, tmp_path / "m.ckpt", "h"))
        assert models["outcome"]["mean.arm1"].data[0] == -2.0

    def test_corrupted_checkpoint(self, tmp_path):
        params = MeanBaseline(1.0, 2.0).to_params()
        path = save_checkpoint({"outcome": params}, tmp_path / "m.ckpt", "h")
        _rewrite_line(path, 1, lambda line: json.dumps({"broken": True}))
        with pytest.raises(DatasetFormatError):
            load_checkpoint(path)
