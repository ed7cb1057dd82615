"""Tests for `pushtorch.curriculum` module."""

import numpy as np
import pytest

from pushtorch.curriculum import (
    CurriculumConfig,
    CurriculumState,
    JointRangeState,
    narrow_joint_range,
    residual_ratio,
    sample_joint_limits,
)


def test_residual_ratio():
    ratio = residual_ratio((0.06, 0.1), (0.02, 0.03), 10)
    np.testing.assert_allclose(ratio, [(1 / 3) ** 0.1, 0.3**0.1])


@pytest.mark.parametrize(
    "zeta_o, zeta_star, n_steps",
    [((0.01, 0.1), (0.02, 0.03), 10), ((0.06, 0.1), (0.0, 0.03), 10), ((0.06, 0.1), (0.02, 0.03), 0)],
)
def test_residual_ratio_errors(zeta_o, zeta_star, n_steps):
    with pytest.raises(ValueError):
        residual_ratio(zeta_o, zeta_star, n_steps)


def test_config_validate():
    with pytest.raises(ValueError):
        CurriculumConfig(trigger=1.0).validate()
    with pytest.raises(ValueError):
        CurriculumConfig(window=0).validate()
    with pytest.raises(ValueError):
        CurriculumConfig(window=10, min_episodes=11).validate()


def test_window_below_trigger():
    state = CurriculumState(CurriculumConfig(window=100))
    assert not state.on_episode_batch([True] * 79 + [False] * 21)
    assert state.reductions_done == 0
    np.testing.assert_allclose(state.zeta, (0.06, 0.1))


def test_partial_window_triggers():
    state = CurriculumState(CurriculumConfig())
    assert state.on_episode_batch([True] * 85 + [False] * 15)
    assert state.zeta[0] == pytest.approx(0.06 * (1 / 3) ** 0.1)


def test_min_episodes_holds_trigger():
    state = CurriculumState(CurriculumConfig(window=100, min_episodes=50))
    assert not state.on_episode_batch([True] * 49)
    assert state.on_episode_batch([True])
    assert state.reductions_done == 1


def test_reduction_step():
    state = CurriculumState(CurriculumConfig(window=100))
    assert state.on_episode_batch([True] * 85 + [False] * 15)
    assert state.reductions_done == 1
    assert state.zeta[0] == pytest.approx(0.06 * (1 / 3) ** 0.1)
    assert len(state.window) == 0


def test_schedule_closes_at_zeta_star():
    state = CurriculumState(CurriculumConfig(window=4))
    for _ in range(10):
        assert state.on_episode_batch([True] * 4)
    assert state.finished
    np.testing.assert_allclose(state.zeta, (0.02, 0.03), atol=1e-12)
    assert not state.on_episode_batch([True] * 4)
    assert state.reductions_done == 10


def test_zeta_monotone():
    state = CurriculumState(CurriculumConfig(window=2, n_steps=5))
    previous = state.zeta
    for _ in range(5):
        state.on_episode_batch([True, True])
        assert np.all(state.zeta <= previous)
        previous = state.zeta


def test_disabled_starts_at_zeta_star():
    state = CurriculumState(CurriculumConfig(enabled=False))
    assert state.finished
    np.testing.assert_allclose(state.zeta, (0.02, 0.03))


def test_state_dict_roundtrip():
    state = CurriculumState(CurriculumConfig(window=10))
    state.on_episode_batch([True, False, True])
    restored = CurriculumState(CurriculumConfig(window=10))
    restored.load_state_dict(state.state_dict())
    assert restored.reductions_done == state.reductions_done
    assert list(restored.window) == list(state.window)
    assert restored.success_rate == pytest.approx(2 / 3)


def test_narrow_joint_range():
    state = JointRangeState(gap=0.2, shrink=0.5)
    assert narrow_joint_range(state, 0.8).gap == pytest.approx(0.1)
    assert narrow_joint_range(state, 0.5).gap == pytest.approx(0.1)
    assert state.narrowings == 1


def test_narrow_joint_range_snaps_to_zero():
    state = JointRangeState(gap=0.0015, shrink=0.5, floor=1e-3)
    assert narrow_joint_range(state, 0.9).gap == 0.0
    assert narrow_joint_range(state, 0.9).narrowings == 1


def test_sample_joint_limits(rng):
    nominal = np.array([[-2.6, 2.6], [-1.0, 1.0]])
    limits = sample_joint_limits(nominal, 0.2, rng)
    assert np.all(limits[:, 0] <= nominal[:, 0]) and np.all(limits[:, 0] >= nominal[:, 0] - 0.2)
    assert np.all(limits[:, 1] >= nominal[:, 1]) and np.all(limits[:, 1] <= nominal[:, 1] + 0.2)
    np.testing.assert_array_equal(sample_joint_limits(nominal, 0.0, rng), nominal)
