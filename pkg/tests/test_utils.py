"""Tests for `pushtorch.utils` module."""

import numpy as np
import pandas as pd
import pytest
import torch

from pushtorch import utils


def test_valid_split():
    train, valid = utils.valid_split(100, 0.1)
    assert len(train) == 90 and len(valid) == 10
    assert set(train).isdisjoint(valid)
    assert sorted(np.concatenate([train, valid])) == list(range(100))


def test_valid_split_edges():
    train, valid = utils.valid_split(1, 0.5)
    assert list(train) == list(valid) == [0]
    train, valid = utils.valid_split(5, 0.0)
    assert len(valid) == 0
    with pytest.raises(ValueError):
        utils.valid_split(10, 1.0)


def test_valid_split_seeded():
    a, _ = utils.valid_split(20, 0.2, seed=3)
    b, _ = utils.valid_split(20, 0.2, seed=3)
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize(
    "successes, n, expected", [(0, 10, (0.0, 0.2775)), (10, 10, (0.7225, 1.0)), (0, 0, (0.0, 1.0))]
)
def test_wilson_interval(successes, n, expected):
    lo, hi = utils.wilson_interval(successes, n)
    assert lo == pytest.approx(expected[0], abs=1e-4)
    assert hi == pytest.approx(expected[1], abs=1e-4)


def test_wilson_interval_contains_rate():
    lo, hi = utils.wilson_interval(37, 100)
    assert lo < 0.37 < hi


def test_seed_everything():
    generator, rng = utils.seed_everything(7)
    state = utils.rng_state(rng)
    a = rng.random()
    utils.set_rng_state(rng, state)
    assert rng.random() == a
    assert torch.equal(torch.rand(2, generator=generator), torch.rand(2, generator=torch.Generator().manual_seed(7)))


def test_checkpoint_roundtrip(tmp_path):
    path = tmp_path / "checkpoint.pt"
    utils.save_checkpoint(path, {"iteration": 3, "rng": np.random.default_rng(0).bit_generator.state})
    payload = utils.load_checkpoint(path)
    assert payload["iteration"] == 3
    assert payload["format"] == utils.CHECKPOINT_FORMAT


def test_checkpoint_format_mismatch(tmp_path):
    path = tmp_path / "checkpoint.pt"
    torch.save({"iteration": 3, "format": 99}, path)
    with pytest.raises(ValueError):
        utils.load_checkpoint(path)


def test_metrics_writer_appends(tmp_path):
    path = tmp_path / "metrics.csv"
    writer = utils.MetricsWriter(path, ["a", "b"])
    writer.write({"a": 1, "b": 2.5})
    writer.write([{"a": 2, "b": 3.5}, {"a": 3, "b": 4.5}])
    writer.write([])
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["a", "b"]
    assert frame["a"].tolist() == [1, 2, 3]


def test_jsonl(tmp_path):
    path = tmp_path / "records.jsonl"
    records = [{"x": 1}, {"x": [1.5, 2.0]}]
    utils.write_jsonl(path, records)
    assert utils.read_jsonl(path) == records
