"""Tests for `pushtorch.env` module."""

import math

import numpy as np
import pytest

import pushtorch.env as env_module
from pushtorch import Pose2
from pushtorch.arm import gripper_points
from pushtorch.env import (
    DOMAINS,
    DROPPED,
    INFEASIBLE,
    POST_OBS_DIM,
    RUNNING,
    SUCCESS,
    TIMEOUT,
    DomainRandomizationConfig,
    EpisodeConfig,
    PostContactAction,
    PreContactAction,
    PushEnv,
    RewardConfig,
    VecEnv,
    domain_config,
    object_keypoints,
    placement_pose,
    pre_observation,
    project_keypoints,
    sample_task,
)
from pushtorch.policy import FixedPlacementPolicy

NO_DR = DomainRandomizationConfig(enabled=False)


def place_above(env, task):
    policy = FixedPlacementPolicy("above", env.domain_cfg.half_extents, env.model.gripper)
    placements, _, _ = policy.act(pre_observation(task))
    return env.place_end_effector(placements[0].pose, placements[0].width)


@pytest.mark.parametrize("domain", DOMAINS)
def test_sample_task_on_terrain(domain, rng):
    cfg = domain_config(domain)
    for _ in range(20):
        task = sample_task(domain, rng)
        for pose in (task.initial, task.goal):
            corners = object_keypoints(pose, cfg.half_extents)
            assert corners[:, 1].min() >= -1e-9
            assert task.terrain.in_workspace(pose.position)


def test_card_tasks_apart(rng):
    for _ in range(50):
        task = sample_task("card", rng)
        assert abs(task.goal.x - task.initial.x) >= 0.02
        assert task.initial.theta == 0.0 and task.goal.theta == 0.0


def test_bump_starts_right_of_bump(rng):
    cfg = domain_config("bump")
    right = cfg.terrain.feature_x + cfg.terrain.feature_width / 2
    for _ in range(20):
        assert sample_task("bump", rng).initial.x > right


def test_wall_goal_on_top(rng):
    cfg = domain_config("wall")
    task = sample_task("wall", rng)
    assert task.goal.y == pytest.approx(cfg.terrain.feature_height + cfg.half_extents[1])
    assert not cfg.match_orientation


def test_unknown_domain(rng):
    with pytest.raises(ValueError):
        domain_config("tray")
    with pytest.raises(ValueError):
        sample_task("tray", rng)


def test_sample_task_deterministic():
    a = sample_task("bump", np.random.default_rng(3))
    b = sample_task("bump", np.random.default_rng(3))
    assert a == b


@pytest.mark.parametrize("kwargs", [dict(c_f="thumb"), dict(width=0.05), dict(width=-0.01)])
def test_pre_contact_action_validation(kwargs):
    args = dict(c_f="left_tip", c_o=0.3, approach_angle=0.0, width=0.02)
    args.update(kwargs)
    with pytest.raises(ValueError):
        PreContactAction(**args)


def test_pre_contact_action_wraps():
    action = PreContactAction("mid_palm", 1.25, 3 * math.pi / 2, 0.0)
    assert action.c_o == pytest.approx(0.25)
    assert action.approach_angle == pytest.approx(-math.pi / 2)


def test_keypoints_rotate_with_object():
    half = (0.043, 0.004)
    upright = object_keypoints(Pose2(0.1, 0.2, 0.0), half)
    flipped = object_keypoints(Pose2(0.1, 0.2, math.pi), half)
    np.testing.assert_allclose(flipped, np.roll(upright, 2, axis=0), atol=1e-12)


def test_project_keypoints_clipped():
    u = project_keypoints(np.array([[-0.45, -0.02], [0.0, 0.29], [5.0, 5.0]]), (-0.45, 0.45, -0.02, 0.6))
    np.testing.assert_allclose(u, [[0.0, 0.0], [0.5, 0.5], [1.0, 1.0]])


def test_placement_pose_puts_point_on_contact(arm):
    action = PreContactAction("left_tip", 0.4, 0.7, 0.03)
    pose, contact = placement_pose(action, Pose2(0.1, 0.05, 0.3), (0.035, 0.025), arm.gripper)
    tip = pose.transform_point(arm.gripper.points(0.03)["left_tip"])
    np.testing.assert_allclose(tip, contact, atol=1e-12)
    assert pose.theta == pytest.approx(0.7)


def test_pre_contact_fingertip_on_edge(card_env, card_task):
    env = card_env
    env.reset(card_task)
    action = PreContactAction("right_tip", 0.48, -math.pi / 2, 0.0)
    _, contact = placement_pose(action, card_task.initial, env.domain_cfg.half_extents, env.model.gripper)
    result = env.apply_pre_contact(action)
    assert result.feasible
    tip = gripper_points(env.model, result.q, 0.0)["right_tip"]
    reach = env.model.gripper.palm_depth + env.model.gripper.finger_length
    bound = env.ik_cfg.position_tolerance + reach * env.ik_cfg.orientation_tolerance
    assert np.linalg.norm(tip - contact) < bound


def test_post_contact_clamp():
    action = PostContactAction(np.array([0.1, 0.0, 0.5]), np.array([-1.0, 500.0, 10.0]), np.array([0.0, 3.0, 1.0]))
    clamped = action.clamp((0.06, 0.1), 300.0, 2.0)
    np.testing.assert_allclose(clamped.delta_pose, [0.06, 0.0, 0.1])
    np.testing.assert_allclose(clamped.kp, [0.0, 300.0, 10.0])
    np.testing.assert_allclose(clamped.rho, [0.5, 2.0, 1.0])


def test_post_contact_action_array():
    values = np.arange(9.0)
    np.testing.assert_array_equal(PostContactAction.from_array(values).as_array(), values)


@pytest.mark.parametrize(
    "config",
    [RewardConfig(c4=1.0), RewardConfig(c2=0.01), EpisodeConfig(policy_hz=7), EpisodeConfig(horizon=0)],
)
def test_config_validation(config):
    with pytest.raises(ValueError):
        config.validate()


def test_episode_timing():
    cfg = EpisodeConfig()
    assert cfg.ticks_per_step == 10
    assert cfg.physics_dt == pytest.approx(0.002)


def test_fixed_placement_and_step(card_env, card_task):
    env = card_env
    env.reset(card_task)
    result = place_above(env, card_task)
    assert result.feasible, result.reason
    obs, reward, termination = env.step(PostContactAction.zeros())
    assert obs.as_array().shape == (POST_OBS_DIM,)
    assert math.isfinite(reward)
    assert termination == RUNNING
    assert env.counter.ticks == env.episode_cfg.ticks_per_step


def test_reward_matches_formula(card_env, card_task):
    env = card_env
    env.reset(card_task)
    assert place_above(env, card_task).feasible
    action = PostContactAction(np.zeros(3), np.array([30.0, 20.0, 10.0]), np.ones(3))
    _, reward, _ = env.step(action)

    cfg = env.reward_cfg
    half = env.domain_cfg.half_extents
    obj, goal = env.world.object.pose, card_task.goal
    dist = np.linalg.norm(object_keypoints(obj, half) - object_keypoints(goal, half), axis=1)
    expected = np.sum(cfg.c1 / (dist + cfg.c1))
    expected -= cfg.kp_penalty_scale * np.linalg.norm([30.0, 20.0, 10.0])
    tips = gripper_points(env.model, env.joint_state.arm_q, env.joint_state.width)
    middle = (tips["left_tip"] + tips["right_tip"]) / 2
    expected += cfg.c3 / max(np.linalg.norm(middle - obj.position), cfg.eps_prox)
    assert reward == pytest.approx(expected, rel=1e-9)


def test_infeasible_placement(card_env, card_task):
    env = card_env
    env.reset(card_task)
    result = env.place_end_effector(Pose2(2.0, 2.0, 0.0), 0.02)
    assert not result.feasible
    assert result.reward == env.reward_cfg.c4
    assert env.episode_record()["outcome"] == INFEASIBLE
    assert env.episode_record()["reward_sum"] == env.reward_cfg.c4
    with pytest.raises(RuntimeError):
        env.step(PostContactAction.zeros())


def test_placement_inside_table_collides(card_env, card_task):
    env = card_env
    env.reset(card_task)
    result = env.place_end_effector(Pose2(0.0, 0.02, -math.pi / 2), 0.02)
    assert not result.feasible


def test_phase_errors(card_env, card_task):
    env = card_env
    with pytest.raises(RuntimeError):
        env.step(PostContactAction.zeros())
    env.reset(card_task)
    with pytest.raises(RuntimeError):
        env.step(PostContactAction.zeros())
    assert place_above(env, card_task).feasible
    with pytest.raises(RuntimeError):
        place_above(env, card_task)


def test_teleport_to_goal_succeeds(card_task):
    env = PushEnv("card", seed=0, episode=EpisodeConfig(success_hold=1), dr=NO_DR)
    env.reset(card_task)
    assert place_above(env, card_task).feasible
    env.teleport_object(card_task.goal)
    _, reward, termination = env.step(PostContactAction.zeros())
    assert termination == SUCCESS
    assert reward > env.reward_cfg.c2
    assert env.phase == "done"


def test_dropped_object(card_env, card_task):
    env = card_env
    env.reset(card_task)
    assert place_above(env, card_task).feasible
    env.teleport_object(Pose2(0.6, 0.004, 0.0))
    _, _, termination = env.step(PostContactAction.zeros())
    assert termination == DROPPED


def test_timeout(card_env, card_task):
    env = card_env
    env.reset(card_task)
    assert place_above(env, card_task).feasible
    terminations = [env.step(PostContactAction.zeros())[2] for _ in range(env.episode_cfg.max_steps)]
    assert terminations[:-1] == [RUNNING] * (env.episode_cfg.max_steps - 1)
    assert terminations[-1] == TIMEOUT
    assert env.episode_record()["steps"] == env.episode_cfg.max_steps


def test_trace_records(card_env, card_task):
    env = card_env
    env.reset(card_task)
    assert place_above(env, card_task).feasible
    env.trace = []
    env.step(PostContactAction.zeros())
    assert len(env.trace) == env.episode_cfg.ticks_per_step
    assert {"arm", "goal", "object", "contacts"} <= set(env.trace[-1])


def test_reset_without_dr_keeps_nominal(card_env):
    env = card_env
    env.reset()
    np.testing.assert_array_equal(env.episode_model.joint_limits, env.model.joint_limits)
    assert env.world.object.mass == pytest.approx(env.domain_cfg.mass)


def test_reset_with_dr_randomizes():
    env = PushEnv("card", seed=1)
    env.dr_active = True
    env.reset()
    assert env.world.object.mass != pytest.approx(env.domain_cfg.mass)


def test_vec_env_seeding():
    a = [env.reset() for env in VecEnv("card", 3, seed=5)]
    b = [env.reset() for env in VecEnv("card", 3, seed=5)]
    assert a == b
    assert len({task.initial.x for task in a}) == 3
    with pytest.raises(ValueError):
        VecEnv("card", 0)


def test_vec_env_setters():
    envs = VecEnv("card", 2, seed=0)
    envs.set_zeta((0.02, 0.03))
    envs.set_dr_active(True)
    assert all(env.dr_active for env in envs)
    np.testing.assert_allclose(envs[1].zeta, (0.02, 0.03))


def test_step_ik_keeps_elbow_branch(card_env, card_task, monkeypatch):
    configs = []
    solve = env_module.solve_ik

    def recording_solve(model, target, q_seed, config=None):
        configs.append(config)
        return solve(model, target, q_seed, config)

    env = card_env
    env.reset(card_task)
    assert place_above(env, card_task).feasible
    monkeypatch.setattr(env_module, "solve_ik", recording_solve)
    env.step(PostContactAction(np.array([0.01, 0.0, 0.05]), np.full(3, 30.0), np.ones(3)))
    assert [config.restarts for config in configs] == [0]
    assert env.ik_cfg.restarts > 0


def test_keypoints_without_noise_are_exact_projection(card_task):
    env = PushEnv("card", seed=0, dr=DomainRandomizationConfig(keypoint_noise=0.0, sensor_noise=0.0))
    env.reset(card_task)
    assert place_above(env, card_task).feasible
    env.dr_active = True
    obs = env.observe()
    expected = project_keypoints(env.true_keypoints(), env.world.terrain.workspace)
    np.testing.assert_array_equal(obs.u_o.flatten(), expected.reshape(-1))
