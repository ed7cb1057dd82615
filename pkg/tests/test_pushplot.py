"""Tests for `pushtorch.pushplot` module."""

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
import pytest  # noqa: E402

import pushtorch.pushplot as pplt  # noqa: E402
from pushtorch.env import PostContactAction, pre_observation  # noqa: E402
from pushtorch.policy import FixedPlacementPolicy  # noqa: E402


@pytest.fixture
def trace(card_env, card_task):
    env = card_env
    env.reset(card_task)
    placement = FixedPlacementPolicy("above", env.domain_cfg.half_extents, env.model.gripper).act(
        pre_observation(card_task)
    )[0][0]
    assert env.place_end_effector(placement.pose, placement.width).feasible
    env.trace = [env.record()]
    env.step(PostContactAction.zeros())
    return env.trace


def test_render_frame_polygon(card_env, trace):
    fig, ax = plt.subplots()
    polygon = pplt.render_frame(trace[-1], ax, card_env.world.terrain, card_env.domain_cfg.half_extents)
    np.testing.assert_allclose(polygon.get_xy()[:4], trace[-1]["object"]["corners"])
    plt.close(fig)


def test_save_frames(tmp_path, card_env, trace):
    paths = pplt.save_frames(trace, card_env.world.terrain, card_env.domain_cfg.half_extents, tmp_path, stride=5)
    assert len(paths) == len(range(0, len(trace), 5))
    assert all(os.path.exists(p) and p.endswith(".svg") for p in paths)


def test_save_frames_empty(tmp_path, card_env):
    out = tmp_path / "frames"
    assert pplt.save_frames([], card_env.world.terrain, (0.043, 0.004), out) == []
    assert not out.exists()
    with pytest.raises(ValueError):
        pplt.save_frames([], card_env.world.terrain, (0.043, 0.004), out, stride=0)


def test_animator(card_env, trace):
    anim = pplt.animator(trace, card_env.world.terrain, card_env.domain_cfg.half_extents, stride=4)
    assert anim is not None
    plt.close("all")


def test_training_curves():
    metrics = pd.DataFrame(
        {
            "env_steps": [10, 20, 30],
            "success_rate": [0.0, 0.5, 0.8],
            "zeta_pos": [0.06, 0.05, 0.04],
            "zeta_rot": [0.1, 0.09, 0.08],
        }
    )
    fig = pplt.training_curves(metrics)
    assert len(fig.axes) == 2
    plt.close(fig)
