import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from pushtorch import Pose2, rotation, wrap_angle
from pushtorch import functional as PF
from pushtorch.arm import (
    CF_LABELS,
    ArmModel,
    IkConfig,
    InfeasibleError,
    JointDynamicsParams,
    JointState,
    LimitCounter,
    arm_dynamics_step,
    forward_kinematics,
    gravity_torques,
    gripper_points,
    jacobian,
    joint_position_controller,
    link_points,
    point_jacobian,
    solve_ik,
)
from pushtorch.curriculum import sample_joint_limits
from pushtorch.physics import (
    ContactConfig,
    KinematicPoint,
    RigidBody2,
    Terrain,
    WorldState,
    finger_reactions,
    perimeter_point,
    step_world,
    world_record,
)

log = logging.getLogger(__name__)

DOMAINS = ("card", "bump", "wall")
RUNNING, SUCCESS, DROPPED, TIMEOUT, INFEASIBLE = "running", "success", "dropped", "timeout", "infeasible"
N_KEYPOINTS = 4
PRE_OBS_DIM = 8
POST_OBS_DIM = 4 + 4 + 2 * N_KEYPOINTS + 2 * N_KEYPOINTS + 4 + 9


@dataclass
class RewardConfig:
    """Constants of the per-step reward.

    ``c1`` shapes the keypoint attraction, ``c2`` is the success bonus, ``c3`` the finger-proximity weight and
    ``c4`` the reward of an infeasible placement. ``kp_penalty_scale`` weights the gain-magnitude penalty
    (``1.0`` reproduces an unscaled penalty).
    """

    c1: float = 0.02
    c2: float = 1000.0
    c3: float = 0.03
    c4: float = -100.0
    d_bar: float = 0.01
    theta_bar: float = 0.1
    kp_penalty_scale: float = 0.001
    eps_prox: float = 0.01

    def validate(self):
        if self.c1 <= 0 or self.c3 < 0:
            raise ValueError("``c1`` must be positive and ``c3`` non-negative.")
        if self.c2 <= N_KEYPOINTS * self.c1:
            raise ValueError("``c2`` must dominate the keypoint term.")
        if self.c4 >= 0:
            raise ValueError(f"``c4`` [{self.c4}] must be negative.")
        if self.d_bar <= 0 or self.theta_bar <= 0 or self.eps_prox <= 0:
            raise ValueError("``d_bar``, ``theta_bar`` and ``eps_prox`` must be positive.")
        if self.kp_penalty_scale < 0:
            raise ValueError("``kp_penalty_scale`` cannot be negative.")
        return self


@dataclass
class EpisodeConfig:
    """Timing of an episode.

    ``horizon`` (policy steps between post-contact updates) and ``max_steps`` are counted in policy steps. The
    physics runs ``physics_substeps`` steps per control tick.
    """

    horizon: int = 32
    max_steps: int = 300
    policy_hz: int = 10
    control_hz: int = 100
    physics_substeps: int = 5
    success_hold: int = 5
    max_placement_attempts: int = 4
    kp_max: float = 300.0
    rho_max: float = 2.0
    touch_tolerance: float = 1e-3
    finger_stiffness: float = 2000.0
    finger_damping: float = 20.0
    home_q: tuple = (0.6, -1.2, -0.8)

    def validate(self):
        if self.control_hz % self.policy_hz:
            raise ValueError(
                f"``control_hz`` [{self.control_hz}] must be divisible by ``policy_hz`` [{self.policy_hz}]."
            )
        if min(self.horizon, self.max_steps, self.physics_substeps, self.success_hold, self.max_placement_attempts) < 1:
            raise ValueError("Episode counts must be at least 1.")
        if self.kp_max <= 0 or self.rho_max < 0.5:
            raise ValueError("``kp_max`` must be positive and ``rho_max`` at least 0.5.")
        return self

    @property
    def ticks_per_step(self):
        return self.control_hz // self.policy_hz

    @property
    def physics_dt(self):
        return 1.0 / (self.control_hz * self.physics_substeps)


@dataclass
class DomainRandomizationConfig:
    """Multipliers are resampled every episode and noises every control tick or observation.

    ``joint_range_gap`` widens the joint limits at the start of training and is narrowed by the curriculum
    module. With ``dr_after_curriculum`` randomization switches on only once the residual schedule has finished.
    """

    enabled: bool = True
    table_friction_mult: tuple = (0.7, 1.3)
    ee_friction_mult: tuple = (0.9, 1.1)
    object_mass_mult: tuple = (0.7, 1.3)
    torque_noise: float = 0.03
    keypoint_noise: float = 0.03
    sensor_noise: float = 0.01
    joint_range_gap: float = 0.2
    joint_range_shrink: float = 0.5
    joint_range_trigger: float = 0.8
    dr_after_curriculum: bool = True

    def validate(self):
        for name in ("table_friction_mult", "ee_friction_mult", "object_mass_mult"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"``{name}`` must be an interval 0 < lo <= hi.")
        if min(self.torque_noise, self.keypoint_noise, self.sensor_noise, self.joint_range_gap) < 0:
            raise ValueError("Noise levels and ``joint_range_gap`` cannot be negative.")
        return self


@dataclass
class DomainConfig:
    """Geometry of one task family."""

    name: str
    terrain: Terrain
    half_extents: tuple
    density: float
    depth: float
    object_friction: float = 0.5
    ee_friction: float = 1.0
    match_orientation: bool = True

    @property
    def mass(self):
        return RigidBody2.mass_from_density(self.half_extents, self.density, self.depth)


def domain_config(name):
    """Default geometry of the ``card``, ``bump`` and ``wall`` domains."""
    if name == "card":
        return DomainConfig("card", Terrain("flat"), (0.043, 0.004), 457.1, 0.054)
    if name == "bump":
        return DomainConfig("bump", Terrain("bump", 0.03, 0.12, 0.0), (0.035, 0.025), 200.0, 0.05)
    if name == "wall":
        return DomainConfig(
            "wall", Terrain("wall", 0.08, 0.1, -0.05), (0.05, 0.012), 150.0, 0.08, match_orientation=False
        )
    raise ValueError(f"``domain`` [{name}] must be one of {DOMAINS}.")


@dataclass(frozen=True)
class TaskInstance:
    initial: Pose2
    goal: Pose2
    terrain: Terrain
    domain: str = "card"


@dataclass(frozen=True)
class PreContactAction:
    """Contact pairing: gripper point ``c_f``, object perimeter fraction ``c_o``, approach angle and width."""

    c_f: str
    c_o: float
    approach_angle: float
    width: float

    def __post_init__(self):
        if self.c_f not in CF_LABELS:
            raise ValueError(f"``c_f`` [{self.c_f}] must be one of {CF_LABELS}.")
        if not 0.0 <= self.width <= 0.04:
            raise ValueError(f"``width`` [{self.width}] must be between [0, 0.04].")
        object.__setattr__(self, "c_o", float(self.c_o) % 1.0)
        object.__setattr__(self, "approach_angle", wrap_angle(float(self.approach_angle)))


@dataclass(frozen=True)
class EndEffectorPlacement:
    """A placement given directly as a flange pose and gripper width."""

    pose: Pose2
    width: float


@dataclass(frozen=True)
class PostContactAction:
    """End-effector residual ``(dx, dy, dtheta)`` plus per-joint ``kp`` and ``rho``."""

    delta_pose: np.ndarray
    kp: np.ndarray
    rho: np.ndarray

    @classmethod
    def zeros(cls, n_joints=3):
        return cls(np.zeros(3), np.zeros(n_joints), np.full(n_joints, 0.5))

    @classmethod
    def from_array(cls, values):
        values = np.asarray(values, dtype=float)
        return cls(values[:3], values[3:6], values[6:9])

    def as_array(self):
        return np.concatenate([self.delta_pose, self.kp, self.rho])

    def clamp(self, zeta, kp_max, rho_max):
        """Projects onto ``‖(dx, dy)‖ ≤ ζ_pos`` and ``|dθ| ≤ ζ_rot``, with ``kp`` in ``[0, kp_max]`` and ``rho`` in
        ``[0.5, rho_max]``."""
        delta = np.array(self.delta_pose, dtype=float)
        norm = math.hypot(delta[0], delta[1])
        if norm > zeta[0]:
            delta[:2] *= zeta[0] / norm
        delta[2] = min(max(delta[2], -zeta[1]), zeta[1])
        kp = np.clip(np.asarray(self.kp, dtype=float), 0.0, kp_max)
        rho = np.clip(np.asarray(self.rho, dtype=float), 0.5, rho_max)
        return PostContactAction(delta, kp, rho)

    def scaled(self, zeta, kp_max, rho_max):
        """Network-friendly encoding with every component roughly in ``[-1, 1]``."""
        return np.concatenate(
            [self.delta_pose[:2] / zeta[0], self.delta_pose[2:] / zeta[1], self.kp / kp_max, self.rho / rho_max]
        )


@dataclass(frozen=True)
class Keypoints:
    """Four box corners in normalized camera coordinates, ordered ``(-x-y, +x-y, +x+y, -x+y)``."""

    u: np.ndarray

    def flatten(self):
        return np.asarray(self.u).reshape(-1)


@dataclass
class PostObservation:
    q: np.ndarray
    qdot: np.ndarray
    u_o: Keypoints
    u_g: Keypoints
    ee_pose: Pose2
    a_prev: np.ndarray

    def as_array(self):
        return np.concatenate(
            [self.q, self.qdot, self.u_o.flatten(), self.u_g.flatten(), self.ee_pose.features(), self.a_prev]
        ).astype(np.float32)


@dataclass
class PlacementResult:
    feasible: bool
    placement: EndEffectorPlacement = None
    q: np.ndarray = None
    reason: str = ""
    reward: float = 0.0


def object_keypoints(pose, half_extents):
    """World-frame corners of a box at ``pose``."""
    hx, hy = half_extents
    local = np.array([[-hx, -hy], [hx, -hy], [hx, hy], [-hx, hy]])
    return local @ rotation(pose.theta).T + pose.position


def project_keypoints(points, workspace):
    """Orthographic camera over the workspace box, clipped to ``[0, 1]²``."""
    xmin, xmax, ymin, ymax = workspace
    u = (np.asarray(points, dtype=float) - np.array([xmin, ymin])) / np.array([xmax - xmin, ymax - ymin])
    return np.clip(u, 0.0, 1.0)


def pre_observation(task):
    """Pose features of the initial and goal object poses."""
    return np.concatenate([task.initial.features(), task.goal.features()]).astype(np.float32)


def placement_pose(action, object_pose, half_extents, gripper):
    """Flange pose that puts gripper point ``c_f`` on the object boundary point ``c_o``.

    :math:`p_E = p_c - R(R_E)\\,c_f`, with the flange heading equal to the approach angle.

    :return: Flange pose and the contact point
    :rtype: tuple of (pushtorch.Pose2, numpy.ndarray)
    """
    local, _ = perimeter_point(half_extents, action.c_o)
    contact = object_pose.transform_point(local)
    c_f = gripper.points(action.width)[action.c_f]
    p_e = contact - rotation(action.approach_angle) @ c_f
    return Pose2(p_e[0], p_e[1], action.approach_angle), contact


def _effective_half_extents(half_extents, theta):
    c, s = abs(math.cos(theta)), abs(math.sin(theta))
    hx, hy = half_extents
    return c * hx + s * hy, s * hx + c * hy


def sample_task(domain, rng, config=None):
    """Samples initial and goal object poses for a domain.

    ``card`` places both poses flat on the table, at least 2 cm apart. ``bump`` starts the object right of the
    bump and sets the goal on top of it or left of it with equal probability, with headings drawn from the
    quarter turns. ``wall`` always starts from the same upright pose against the wall and sets the goal lying on
    the left half of the wall top.

    :param domain: ``"card"``, ``"bump"`` or ``"wall"``
    :type domain: str

    :param rng: Random generator
    :type rng: numpy.random.Generator

    :param config: Domain geometry, defaults to :func:`domain_config`
    :type config: pushtorch.env.DomainConfig, optional

    :return: The task
    :rtype: pushtorch.env.TaskInstance
    """
    config = config or domain_config(domain)
    terrain = config.terrain
    hx, hy = config.half_extents
    if domain == "card":
        x_o = rng.uniform(-0.25, 0.25)
        x_g = rng.uniform(-0.25, 0.25)
        while abs(x_g - x_o) < 0.02:
            x_g = rng.uniform(-0.25, 0.25)
        return TaskInstance(Pose2(x_o, hy, 0.0), Pose2(x_g, hy, 0.0), terrain, domain)

    if domain == "bump":
        quarter = math.pi / 2
        theta_o = quarter * rng.integers(4)
        theta_g = quarter * rng.integers(4)
        ex_o, ey_o = _effective_half_extents(config.half_extents, theta_o)
        ex_g, ey_g = _effective_half_extents(config.half_extents, theta_g)
        left, right = terrain.feature_x - terrain.feature_width / 2, terrain.feature_x + terrain.feature_width / 2
        x_o = rng.uniform(right + ex_o + 0.01, 0.3)
        if rng.random() < 0.5:
            x_g = rng.uniform(left + ex_g, right - ex_g)
            y_g = terrain.feature_height + ey_g
        else:
            x_g = rng.uniform(-0.3, left - ex_g - 0.01)
            y_g = ey_g
        return TaskInstance(Pose2(x_o, ey_o, theta_o), Pose2(x_g, y_g, theta_g), terrain, domain)

    if domain == "wall":
        left, right = terrain.feature_x - terrain.feature_width / 2, terrain.feature_x + terrain.feature_width / 2
        initial = Pose2(right + hy + 0.001, hx, math.pi / 2)
        x_g = rng.uniform(left + 0.01, terrain.feature_x)
        goal = Pose2(x_g, terrain.feature_height + hy, 0.0)
        return TaskInstance(initial, goal, terrain, domain)

    raise ValueError(f"``domain`` [{domain}] must be one of {DOMAINS}.")


class PushEnv:
    """One planar pushing environment: an arm, an object and a terrain, run through the two-stage episode.

    An episode is :meth:`reset`, one placement (:meth:`apply_pre_contact` or :meth:`place_end_effector`), then
    :meth:`step` until a termination. Every random draw comes from ``self.rng``.

    Example::

        from pushtorch.env import PushEnv, PreContactAction, PostContactAction

        env = PushEnv("card", seed=0)
        env.reset()
        result = env.apply_pre_contact(PreContactAction("right_tip", 0.48, -math.pi / 2, 0.0))
        if result.feasible:
            obs, reward, termination = env.step(PostContactAction.zeros())

    :param domain: Task family, defaults to ``"card"``
    :type domain: str, optional

    :param seed: Seed of the environment generator, ignored when ``rng`` is given
    :type seed: int, optional

    :param rng: Environment generator, defaults to ``None``
    :type rng: numpy.random.Generator, optional
    """

    def __init__(
        self,
        domain="card",
        seed=None,
        rng=None,
        arm=None,
        dynamics=None,
        reward=None,
        episode=None,
        dr=None,
        ik=None,
        contact=None,
        domain_cfg=None,
    ):
        self.domain = domain
        self.domain_cfg = domain_cfg or domain_config(domain)
        self.rng = rng if rng is not None else np.random.default_rng(seed)
        self.model = arm or ArmModel()
        self.dynamics = dynamics or JointDynamicsParams()
        self.reward_cfg = (reward or RewardConfig()).validate()
        self.episode_cfg = (episode or EpisodeConfig()).validate()
        self.dr = (dr or DomainRandomizationConfig()).validate()
        self.ik_cfg = (ik or IkConfig()).validate()
        self.step_ik_cfg = replace(self.ik_cfg, restarts=0)
        self.contact_cfg = (contact or ContactConfig()).validate()

        self.zeta = np.array([0.06, 0.1])
        self.dr_active = False
        self.joint_range = None
        self.counter = LimitCounter()
        self.phase = "idle"
        self.task = None
        self.world = None
        self.episode_model = self.model
        self.trace = None

    # -- episode setup ---------------------------------------------------------------------------------------

    def reset(self, task=None):
        """Samples (or takes) a task and domain randomization draws, parks the arm and clears episode state."""
        self.task = task or sample_task(self.domain, self.rng, self.domain_cfg)
        cfg = self.domain_cfg
        table_mult = ee_mult = mass_mult = 1.0
        limits = self.model.joint_limits
        if self.dr_active:
            table_mult = self.rng.uniform(*self.dr.table_friction_mult)
            ee_mult = self.rng.uniform(*self.dr.ee_friction_mult)
            mass_mult = self.rng.uniform(*self.dr.object_mass_mult)
            if self.joint_range is not None:
                limits = sample_joint_limits(self.model.joint_limits, self.joint_range.gap, self.rng)
        self.episode_model = self.model.with_joint_limits(limits)
        self.ee_friction = cfg.ee_friction * ee_mult

        terrain = replace(self.task.terrain, friction_coeff=self.task.terrain.friction_coeff * table_mult)
        body = RigidBody2.box(self.task.initial, cfg.half_extents, cfg.mass * mass_mult, cfg.object_friction)
        self.world = WorldState(body, terrain, contact_config=self.contact_cfg)
        self.joint_state = JointState.at_rest(self.episode_cfg.home_q, 0.0)
        self.q_target = np.array(self.episode_cfg.home_q, dtype=float)
        self.a_prev = None
        self.kp = np.zeros(self.model.n_joints)
        self.rho = np.full(self.model.n_joints, 0.5)
        self.steps = 0
        self.hold = 0
        self.ik_failures = 0
        self.episode_return = 0.0
        self.outcome = RUNNING
        self.counter = LimitCounter()
        self.goal_keypoints = None
        self.phase = "placing"
        return self.task

    def apply_pre_contact(self, action):
        """Places the arm so that ``action.c_f`` touches the object at ``action.c_o``.

        :return: Placement outcome; an infeasible placement ends the episode with reward ``c4``
        :rtype: pushtorch.env.PlacementResult
        """
        pose, _ = placement_pose(action, self.world.object.pose, self.domain_cfg.half_extents, self.model.gripper)
        return self.place_end_effector(pose, action.width)

    def place_end_effector(self, pose, width):
        """Teleports the arm to the IK solution of ``pose`` with the gripper opened to ``width``."""
        if self.phase != "placing":
            raise RuntimeError("Placement requires a freshly reset environment.")
        width = float(np.clip(width, 0.0, self.model.gripper.max_width))
        try:
            q = solve_ik(self.episode_model, pose, self.episode_cfg.home_q, self.ik_cfg).q
        except InfeasibleError as e:
            return self._infeasible(f"ik: {e}")
        if self._collides(q, width):
            return self._infeasible("collision")

        self.joint_state = JointState.at_rest(q, width)
        self.q_target = q.copy()
        self.width_target = width
        self._sync_fingers()
        self.goal_keypoints = self._noisy_keypoints(self.task.goal)
        self.phase = "post"
        return PlacementResult(True, EndEffectorPlacement(pose, width), q)

    def _infeasible(self, reason):
        self.phase = "done"
        self.outcome = INFEASIBLE
        self.episode_return = self.reward_cfg.c4
        log.debug("placement infeasible: %s", reason)
        return PlacementResult(False, reason=reason, reward=self.reward_cfg.c4)

    def _collides(self, q, width):
        tol = self.episode_cfg.touch_tolerance
        terrain, body = self.world.terrain, self.world.object
        for p in link_points(self.episode_model, q, width):
            if p[1] < -tol or terrain.signed_distance(p) < -tol:
                return True
            if body.signed_distance(p)[0] < -tol:
                return True
        return False

    # -- stepping --------------------------------------------------------------------------------------------

    def _finger_points(self):
        q, qdot, width = self.joint_state.arm_q, self.joint_state.arm_qdot, self.joint_state.width
        ee = forward_kinematics(self.model, q)
        twist = jacobian(self.model, q) @ qdot
        points = gripper_points(self.model, q, width)
        opening = {"left_tip": 0.5, "right_tip": -0.5, "mid_palm": 0.0}
        side = ee.transform_point((0.0, 1.0)) - ee.position
        out = []
        for label in CF_LABELS:
            p = points[label]
            r = p - ee.position
            v = twist[:2] + twist[2] * np.array([-r[1], r[0]]) + opening[label] * self.joint_state.qdot[-1] * side
            out.append(KinematicPoint(label, p, v, self.ee_friction))
        return tuple(out)

    def _sync_fingers(self):
        self.world = replace(self.world, fingers=self._finger_points())

    def _external_torques(self, dt):
        """Joint torques from object reactions and fingertip-terrain penalty forces."""
        q = self.joint_state.arm_q
        reactions = finger_reactions(self.world, dt)
        tau = np.zeros(self.model.n_joints)
        k, c = self.episode_cfg.finger_stiffness, self.episode_cfg.finger_damping
        for finger in self.world.fingers:
            force = reactions.get(finger.label, np.zeros(2))
            depth = -self.world.terrain.signed_distance(finger.position)
            if depth > 0:
                normal = self.world.terrain.outward_normal(finger.position)
                if normal is not None:
                    vn = float(finger.velocity @ normal)
                    force = force + max(k * depth - c * vn, 0.0) * normal
            if np.any(force):
                tau += point_jacobian(self.model, q, finger.position).T @ force
        return tau

    def _substep(self, kp, rho, noise, dt):
        q = self.joint_state.arm_q
        tau = joint_position_controller(
            self.joint_state,
            self.q_target,
            kp,
            rho,
            self.model.torque_limits,
            feedforward=gravity_torques(self.model, q),
            counter=self.counter,
        )
        tau = tau + noise + self._external_torques(dt)
        self.joint_state = arm_dynamics_step(
            self.episode_model, self.dynamics, self.joint_state, tau, dt, self.counter, self.width_target
        )
        self._sync_fingers()
        self.world = step_world(self.world, dt)

    def step(self, action):
        """Applies one post-contact action: clamp, IK on the residual target, then the control ticks.

        The residual IK starts from the current joints without random restarts, so the arm keeps its elbow branch.

        :return: observation, reward and termination (``"running"``, ``"success"``, ``"dropped"`` or ``"timeout"``)
        :rtype: tuple of (pushtorch.env.PostObservation, float, str)
        """
        if self.phase != "post":
            raise RuntimeError(f"``step`` requires a placed environment, phase is '{self.phase}'.")
        cfg = self.episode_cfg
        action = action.clamp(self.zeta, cfg.kp_max, cfg.rho_max)
        ee = forward_kinematics(self.model, self.joint_state.arm_q)
        target = Pose2(ee.x + action.delta_pose[0], ee.y + action.delta_pose[1], ee.theta + action.delta_pose[2])
        try:
            self.q_target = solve_ik(self.episode_model, target, self.joint_state.arm_q, self.step_ik_cfg).q
        except InfeasibleError as e:
            self.ik_failures += 1
            log.debug("IK failed inside a policy step, holding the previous target: %s", e)

        dt = cfg.physics_dt
        for _ in range(cfg.ticks_per_step):
            before = self.counter.total()
            noise = self.rng.normal(0.0, self.dr.torque_noise, self.model.n_joints) if self.dr_active else 0.0
            for _ in range(cfg.physics_substeps):
                self._substep(action.kp, action.rho, noise, dt)
            self.counter.ticks += 1
            if self.counter.total() > before:
                self.counter.violating_ticks += 1
            if self.trace is not None:
                self.trace.append(self.record())

        self.steps += 1
        reward = self.compute_reward(action)
        self.hold = self.hold + 1 if self._success_now() else 0
        termination = self.check_termination()
        self.episode_return += reward
        self.a_prev = action
        if termination != RUNNING:
            self.phase = "done"
            self.outcome = termination
        return self.observe(), reward, termination

    # -- observation, reward, termination -----------------------------------------------------------------

    def true_keypoints(self):
        return object_keypoints(self.world.object.pose, self.domain_cfg.half_extents)

    def _noisy_keypoints(self, pose):
        u = project_keypoints(object_keypoints(pose, self.domain_cfg.half_extents), self.world.terrain.workspace)
        if self.dr_active:
            u = u + self.rng.normal(0.0, self.dr.keypoint_noise, u.shape)
        return Keypoints(u)

    def observe(self):
        """Policy input: noisy proprioception, noisy object and goal keypoints, flange pose, previous action."""
        q, qdot = self.joint_state.q.copy(), self.joint_state.qdot.copy()
        if self.dr_active:
            q += self.rng.normal(0.0, self.dr.sensor_noise, q.shape)
            qdot += self.rng.normal(0.0, self.dr.sensor_noise, qdot.shape)
        cfg = self.episode_cfg
        return PostObservation(
            q,
            qdot,
            self._noisy_keypoints(self.world.object.pose),
            self.goal_keypoints,
            forward_kinematics(self.model, q[:-1]),
            np.zeros(9) if self.a_prev is None else self.a_prev.scaled(self.zeta, cfg.kp_max, cfg.rho_max),
        )

    def _success_now(self):
        d, theta = PF.pose_errors(self.world.object.pose, self.task.goal)
        cfg = self.reward_cfg
        return PF.success_indicator(d, theta, cfg.d_bar, cfg.theta_bar, self.domain_cfg.match_orientation)

    def compute_reward(self, action):
        """Reward of the current true state under ``action``; observation noise never enters it."""
        cfg = self.reward_cfg
        goal = object_keypoints(self.task.goal, self.domain_cfg.half_extents)
        reward = PF.keypoint_term(self.true_keypoints(), goal, cfg.c1)
        reward += PF.kp_penalty(action.kp, cfg.kp_penalty_scale)
        if self._success_now():
            reward += cfg.c2
        tips = gripper_points(self.model, self.joint_state.arm_q, self.joint_state.width)
        reward += PF.proximity_term(
            tips["left_tip"], tips["right_tip"], self.world.object.pose.position, cfg.c3, cfg.eps_prox
        )
        return reward

    def check_termination(self):
        if self.hold >= self.episode_cfg.success_hold:
            return SUCCESS
        center = self.world.object.pose.position
        if center[1] < 0.0 or not self.world.terrain.in_workspace(center):
            return DROPPED
        if self.steps >= self.episode_cfg.max_steps:
            return TIMEOUT
        return RUNNING

    # -- helpers ---------------------------------------------------------------------------------------------

    def teleport_object(self, pose):
        """Moves the object to ``pose`` at rest."""
        body = replace(self.world.object, pose=pose, velocity=np.zeros(3))
        self.world = replace(self.world, object=body)

    def record(self):
        """JSON-serializable snapshot of arm and world."""
        out = world_record(self.world)
        q = self.joint_state.arm_q
        out["arm"] = {
            "q": self.joint_state.q.tolist(),
            "qdot": self.joint_state.qdot.tolist(),
            "links": link_points(self.model, q, self.joint_state.width, samples=2).tolist(),
            "ee": forward_kinematics(self.model, q).as_array().tolist(),
        }
        out["goal"] = self.task.goal.as_array().tolist()
        return out

    def episode_record(self):
        """Per-episode summary row."""
        return {
            "domain": self.domain,
            "initial_x": self.task.initial.x,
            "initial_y": self.task.initial.y,
            "initial_theta": self.task.initial.theta,
            "goal_x": self.task.goal.x,
            "goal_y": self.task.goal.y,
            "goal_theta": self.task.goal.theta,
            "outcome": self.outcome,
            "reward_sum": self.episode_return,
            "steps": self.steps,
            "velocity_clamps": self.counter.velocity_clamps,
            "torque_clamps": self.counter.torque_clamps,
            "ticks": self.counter.ticks,
            "violating_ticks": self.counter.violating_ticks,
            "ik_failures": self.ik_failures,
        }


class VecEnv:
    """Independently seeded environments that share read-only configuration.

    Example::

        from pushtorch.env import VecEnv

        envs = VecEnv("card", n_envs=4, seed=7)
        tasks = [env.reset() for env in envs]

    """

    def __init__(self, domain, n_envs, seed=0, **kwargs):
        if n_envs < 1:
            raise ValueError("``n_envs`` must be at least 1.")
        children = np.random.SeedSequence(seed).spawn(n_envs)
        self.envs = [PushEnv(domain, rng=np.random.default_rng(child), **kwargs) for child in children]

    def __len__(self):
        return len(self.envs)

    def __getitem__(self, idx):
        return self.envs[idx]

    def __iter__(self):
        return iter(self.envs)

    def set_zeta(self, zeta):
        for env in self.envs:
            env.zeta = np.asarray(zeta, dtype=float)

    def set_dr_active(self, active):
        for env in self.envs:
            env.dr_active = bool(active)

    def set_joint_range(self, state):
        for env in self.envs:
            env.joint_range = state
