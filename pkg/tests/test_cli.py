"""Tests for `pushtorch.cli` module."""

import json
import os

import pandas as pd
import pytest
import yaml
from click.testing import CliRunner

from pushtorch.cli import main
from pushtorch.trainer import METRIC_COLUMNS


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def trained(runner, tiny_config_file):
    result = runner.invoke(main, ["train", "--config", str(tiny_config_file), "--quiet"])
    assert result.exit_code == 0, result.output
    run_dir = os.path.join(yaml.safe_load(tiny_config_file.read_text())["out"], "train-card-seed0")
    assert os.path.isdir(run_dir)
    return run_dir


def test_help(runner):
    result = runner.invoke(main, ["--help"])
    assert result.exit_code == 0
    for command in ("train", "eval", "sysid", "distill", "ablate", "demo"):
        assert command in result.output


def test_train_outputs(trained):
    for name in ("metrics.csv", "episodes.csv", "checkpoint.pt", "manifest.json", "config.yaml", "training_curves.svg"):
        assert os.path.exists(os.path.join(trained, name))
    metrics = pd.read_csv(os.path.join(trained, "metrics.csv"))
    assert list(metrics.columns) == METRIC_COLUMNS
    assert metrics["iteration"].tolist() == [1, 2]
    with open(os.path.join(trained, "manifest.json")) as f:
        manifest = json.load(f)
    assert manifest["command"] == "train"
    assert len(manifest["config_hash"]) == 64


def test_train_never_overwrites(runner, tiny_config_file, trained):
    result = runner.invoke(main, ["train", "--config", str(tiny_config_file), "--quiet", "--iterations", "1"])
    assert result.exit_code == 0, result.output
    assert os.path.isdir(trained + "_1")


def test_eval(runner, trained):
    result = runner.invoke(main, ["eval", "--checkpoint", os.path.join(trained, "checkpoint.pt")])
    assert result.exit_code == 0, result.output
    assert "success" in result.output
    eval_dir = os.path.join(os.path.dirname(trained), "eval-card-seed0")
    with open(os.path.join(eval_dir, "report.json")) as f:
        report = json.load(f)
    assert report["n_episodes"] == 2
    assert sum(report["outcomes"].values()) == 2


def test_demo(runner, trained):
    checkpoint = os.path.join(trained, "checkpoint.pt")
    result = runner.invoke(main, ["demo", "--checkpoint", checkpoint, "--tasks", "1"])
    assert result.exit_code == 0, result.output
    task_dir = os.path.join(os.path.dirname(trained), "demo-card-seed0", "task_000")
    assert os.path.exists(os.path.join(task_dir, "trajectory.jsonl"))


def test_demo_no_tasks(runner, trained):
    result = runner.invoke(main, ["demo", "--checkpoint", os.path.join(trained, "checkpoint.pt"), "--tasks", "0"])
    assert result.exit_code == 0
    assert "no tasks requested" in result.output
    assert not os.path.exists(os.path.join(os.path.dirname(trained), "demo-card-seed0"))


def test_distill(runner, trained):
    result = runner.invoke(main, ["distill", "--checkpoint", os.path.join(trained, "checkpoint.pt")])
    if result.exit_code == 0:
        assert "student:" in result.output
        assert os.path.exists(os.path.join(os.path.dirname(trained), "distill-card-seed0", "student.pt"))
    else:
        # an untrained placement policy can fail to produce a single feasible demonstration
        assert "DistillationError" in result.output


def test_config_error(runner, tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("domian: card\n")
    result = runner.invoke(main, ["train", "--config", str(path)])
    assert result.exit_code != 0
    assert "ConfigError" in result.output


def test_sysid(runner, tiny_config_file):
    result = runner.invoke(main, ["sysid", "--config", str(tiny_config_file), "--joint", "2"])
    assert result.exit_code == 0, result.output
    run_dir = os.path.join(yaml.safe_load(tiny_config_file.read_text())["out"], "sysid-seed0")
    report = pd.read_csv(os.path.join(run_dir, "sysid_report.csv"))
    assert set(report["joint"]) == {2}
    assert len(report) == 3
    assert os.path.exists(os.path.join(run_dir, "arm_fitted.yaml"))
    assert os.path.exists(os.path.join(run_dir, "records.csv"))


def test_ablate(runner, tiny_config_file):
    result = runner.invoke(main, ["ablate", "--config", str(tiny_config_file), "--only", "ee-above"])
    assert result.exit_code == 0, result.output
    root = os.path.join(yaml.safe_load(tiny_config_file.read_text())["out"], "ablate-card")
    summary = pd.read_csv(os.path.join(root, "ablation_summary.csv"))
    assert summary["configuration"].tolist() == ["ee-above"]
