"""Tests for `pushtorch.functional` module."""

import math

import numpy as np
import pytest
import torch

import pushtorch.functional as PF
from pushtorch import Pose2


@pytest.mark.parametrize("offset, expected", [(0.0, 4.0), (0.02, 2.0), (0.06, 1.0)])
def test_keypoint_term(offset, expected):
    goal = np.zeros((4, 2))
    assert PF.keypoint_term(goal + np.array([offset, 0.0]), goal, 0.02) == pytest.approx(expected)


def test_keypoint_term_bounded(rng):
    goal = rng.normal(size=(4, 2))
    value = PF.keypoint_term(goal + rng.normal(size=(4, 2)), goal, 0.02)
    assert 0 < value < 4


def test_kp_penalty():
    assert PF.kp_penalty(np.array([3.0, 4.0, 0.0]), 0.1) == pytest.approx(-0.5)


def test_pose_errors_wrap():
    d, theta = PF.pose_errors(Pose2(0.0, 0.0, math.pi - 0.01), Pose2(0.03, 0.04, -math.pi + 0.01))
    assert d == pytest.approx(0.05)
    assert theta == pytest.approx(0.02)


@pytest.mark.parametrize(
    "d, theta, match, expected",
    [(0.005, 0.05, True, True), (0.01, 0.05, True, False), (0.005, 0.2, True, False), (0.005, 0.2, False, True)],
)
def test_success_indicator(d, theta, match, expected):
    assert PF.success_indicator(d, theta, 0.01, 0.1, match) is expected


def test_proximity_term_floor():
    center = np.array([0.0, 0.0])
    assert PF.proximity_term(center, center, center, 0.03, 0.01) == pytest.approx(3.0)
    assert PF.proximity_term([0.1, 0.0], [0.1, 0.0], center, 0.03, 0.01) == pytest.approx(0.3)


def test_ppo_clip_loss_values():
    loss_fn = PF.ppo_clip_loss(0.2)
    old = torch.zeros(2)
    new = torch.log(torch.tensor([1.5, 0.5]))
    advantages = torch.tensor([1.0, -1.0])
    # ratio 1.5 clips to 1.2 for a positive advantage, ratio 0.5 clips to 0.8 for a negative one
    assert float(loss_fn(new, old, advantages)) == pytest.approx(-(1.2 - 0.8) / 2)
    assert float(loss_fn.clip_fraction(new, old)) == pytest.approx(1.0)


def test_ppo_clip_loss_gradient_zero_when_clipped():
    loss_fn = PF.ppo_clip_loss(0.2)
    new = torch.log(torch.tensor([1.5])).requires_grad_()
    loss_fn(new, torch.zeros(1), torch.ones(1)).backward()
    assert float(new.grad) == 0.0


@pytest.mark.parametrize("clip_eps", [0.0, 1.0, -0.1])
def test_ppo_clip_loss_range(clip_eps):
    with pytest.raises(ValueError):
        PF.ppo_clip_loss(clip_eps)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        PF.value_loss()(torch.zeros(3), torch.zeros(4))


def test_weighted_mse_loss():
    loss_fn = PF.weighted_mse_loss((1.0, 0.0, 10.0))
    predictions = torch.tensor([[1.0, 5.0, 0.1], [1.0, 5.0, 0.1]])
    assert float(loss_fn(predictions, torch.zeros(2, 3))) == pytest.approx(1.0 + 10.0 * 0.01)


def test_weighted_mse_loss_errors():
    with pytest.raises(ValueError):
        PF.weighted_mse_loss((1.0, -1.0))
    with pytest.raises(ValueError):
        PF.weighted_mse_loss((1.0, 1.0))(torch.zeros(2, 3), torch.zeros(2, 3))
