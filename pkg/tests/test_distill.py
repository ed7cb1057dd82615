"""Tests for `pushtorch.distill` module."""

import math

import numpy as np
import pytest
import torch

from pushtorch import Pose2, wrap_angle
from pushtorch.arm import GripperModel
from pushtorch.distill import (
    STUDENT_OBS_DIM,
    DemoSample,
    DistillationError,
    DistillConfig,
    StudentPolicy,
    collect_demos,
    continuous_to_rotation,
    eval_student_closed_loop,
    keypoint_observation,
    load_demos,
    load_student,
    placement_errors,
    rotation_to_continuous,
    save_demos,
    save_student,
    train_student,
)
from pushtorch.env import DomainRandomizationConfig, Keypoints, domain_config
from pushtorch.policy import FixedPlacementPolicy, PostContactPolicy

HALF = domain_config("card").half_extents
WORKSPACE = domain_config("card").terrain.workspace


def scripted_expert():
    return FixedPlacementPolicy("above", HALF, GripperModel())


def demo(x=0.1, theta=-math.pi / 2, width=0.02):
    u = Keypoints(np.full((4, 2), 0.5))
    return DemoSample(u, Keypoints(np.full((4, 2), 0.25)), Pose2(x, 0.08, theta), width)


def test_rotation_roundtrip(rng):
    for theta in rng.uniform(-math.pi, math.pi, 1000):
        assert abs(wrap_angle(continuous_to_rotation(rotation_to_continuous(theta)) - theta)) < 1e-12


def test_rotation_normalizes():
    assert continuous_to_rotation([2.0, 0.0]) == 0.0
    assert continuous_to_rotation([0.0, 3.0]) == pytest.approx(math.pi / 2)


def test_rotation_zero_vector():
    with pytest.raises(ValueError):
        continuous_to_rotation([0.0, 1e-9])


def test_rotation_continuous_across_pi():
    a = rotation_to_continuous(math.pi - 1e-6)
    b = rotation_to_continuous(-math.pi + 1e-6)
    assert np.linalg.norm(a - b) < 1e-5


def test_demo_sample():
    sample = demo()
    assert sample.features().shape == (STUDENT_OBS_DIM,)
    np.testing.assert_allclose(sample.label(), [0.1, 0.08, 0.0, -1.0, 0.02], atol=1e-12)
    with pytest.raises(ValueError):
        demo(width=0.05)


def test_keypoint_observation_noise(rng):
    pose = Pose2(0.1, 0.004, 0.0)
    clean, _ = keypoint_observation(pose, pose, HALF, WORKSPACE)
    noisy = [keypoint_observation(pose, pose, HALF, WORKSPACE, rng, 0.03)[0].u - clean.u for _ in range(2000)]
    assert np.std(noisy) == pytest.approx(0.03, rel=0.05)


def test_collect_zero_demos(rng):
    assert collect_demos(scripted_expert(), "card", 0, rng) == []


def test_collect_demos_labels(short_episode):
    samples = collect_demos(scripted_expert(), "card", 4, np.random.default_rng(0), episode=short_episode)
    assert len(samples) == 4
    for sample in samples:
        assert sample.pose.theta == pytest.approx(-math.pi / 2)
        assert sample.width == pytest.approx(0.02)


def test_labels_ignore_noise(short_episode):
    quiet = DomainRandomizationConfig(keypoint_noise=0.0)
    loud = DomainRandomizationConfig(keypoint_noise=0.05)
    a = collect_demos(scripted_expert(), "card", 3, np.random.default_rng(1), dr=quiet, episode=short_episode)
    b = collect_demos(scripted_expert(), "card", 3, np.random.default_rng(1), dr=loud, episode=short_episode)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.label(), y.label())
        assert not np.array_equal(x.features(), y.features())


def test_demos_jsonl(tmp_path):
    samples = [demo(), demo(x=-0.1, theta=0.3, width=0.0)]
    path = tmp_path / "demos.jsonl"
    save_demos(path, samples)
    loaded = load_demos(path)
    for a, b in zip(samples, loaded):
        np.testing.assert_allclose(a.features(), b.features())
        np.testing.assert_allclose(a.label(), b.label())


def test_distill_config_validate():
    with pytest.raises(ValueError):
        DistillConfig(loss_weights=(1.0, 1.0)).validate()
    with pytest.raises(ValueError):
        DistillConfig(epochs=0).validate()


def test_train_student_empty():
    with pytest.raises(DistillationError):
        train_student([])


def test_train_student_memorizes():
    dataset = [demo()] * 10
    config = DistillConfig(epochs=1000, lr=1e-2, hidden_sizes=(16,))
    student, history = train_student(dataset, config)
    assert history[0]["epoch"] == 0
    assert len(history) == config.epochs + 1
    assert min(row["valid_loss"] for row in history) < 1e-4
    position, heading = placement_errors(student, dataset)
    assert position.max() < 1e-2
    assert heading.max() < 0.1


def test_best_not_worse_than_untrained():
    dataset = [demo(x=0.01 * k, theta=0.1 * k) for k in range(20)]
    _, history = train_student(dataset, DistillConfig(epochs=5, hidden_sizes=(16,)))
    assert min(row["valid_loss"] for row in history) <= history[0]["valid_loss"]


def test_student_act():
    torch.manual_seed(0)
    student = StudentPolicy((16,))
    placements, raw, log_prob = student.act(torch.rand(3, STUDENT_OBS_DIM))
    assert raw is None and log_prob is None
    assert len(placements) == 3
    assert all(0.0 <= p.width <= 0.04 for p in placements)


def test_save_load_student(tmp_path):
    torch.manual_seed(0)
    student = StudentPolicy((16,))
    path = tmp_path / "student.pt"
    save_student(path, student, DistillConfig(hidden_sizes=(16,)))
    loaded = load_student(path)
    obs = torch.rand(2, STUDENT_OBS_DIM)
    assert torch.equal(student(obs), loaded(obs))


def test_closed_loop_eval(short_episode, small_policy_config):
    torch.manual_seed(0)
    report = eval_student_closed_loop(
        StudentPolicy((16,)), PostContactPolicy(small_policy_config), "card", 2, episode=short_episode
    )
    assert report.n_episodes == 2
    assert sum(report.outcomes.values()) == 2
