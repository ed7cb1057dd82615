import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from pushtorch import ConfigError, Pose2, SimulationError, wrap_angle

log = logging.getLogger(__name__)

GRAVITY = 9.81
CF_LABELS = ("left_tip", "right_tip", "mid_palm")
SMOOTH_SIGN_EPS = 0.01


class InfeasibleError(ValueError):
    """Raised when no joint configuration reaches a requested end-effector pose inside the joint limits.

    :param message: Diagnostic
    :type message: str

    :param q: Final iterate of the solver, if any
    :type q: numpy.ndarray, optional

    :param residual: Final ``(dx, dy, dtheta)`` error, if any
    :type residual: numpy.ndarray, optional
    """

    def __init__(self, message, q=None, residual=None, iterations=0):
        super().__init__(message)
        self.q = q
        self.residual = residual
        self.iterations = iterations


@dataclass
class GripperModel:
    """Parallel-jaw gripper bolted to the last link.

    The gripper frame has its x-axis along the approach direction, leaving the flange. The two fingertips sit
    at ``x = palm_depth + finger_length`` and ``y = ±width/2``; ``mid_palm`` is the palm center.
    """

    palm_depth: float = 0.02
    finger_length: float = 0.045
    max_width: float = 0.04
    palm_half_width: float = 0.03

    def __post_init__(self):
        if self.palm_depth <= 0 or self.finger_length <= 0:
            raise ValueError("``palm_depth`` and ``finger_length`` must be positive.")
        if self.max_width <= 0:
            raise ValueError("``max_width`` must be positive.")

    def check_width(self, width):
        if not 0.0 <= width <= self.max_width:
            raise ValueError(f"Gripper ``width`` [{width}] must be between [0, {self.max_width}].")
        return float(width)

    def points(self, width):
        """Gripper-frame position of every ``c_f`` label for an opening of ``width``."""
        tip = self.palm_depth + self.finger_length
        return {
            "left_tip": np.array([tip, width / 2]),
            "right_tip": np.array([tip, -width / 2]),
            "mid_palm": np.array([self.palm_depth, 0.0]),
        }

    def segments(self, width):
        """Gripper-frame line segments outlining palm and fingers."""
        tip = self.palm_depth + self.finger_length
        pd, hw = self.palm_depth, max(self.palm_half_width, width / 2)
        return [
            (np.array([0.0, 0.0]), np.array([pd, 0.0])),
            (np.array([pd, -hw]), np.array([pd, hw])),
            (np.array([pd, width / 2]), np.array([tip, width / 2])),
            (np.array([pd, -width / 2]), np.array([tip, -width / 2])),
        ]


@dataclass
class JointDynamicsParams:
    """Per-joint Coulomb friction (N·m), viscous damping (N·m·s/rad) and armature (kg·m²)."""

    coulomb_friction: np.ndarray = field(default_factory=lambda: np.array([0.3, 0.2, 0.1]))
    viscous_damping: np.ndarray = field(default_factory=lambda: np.array([0.5, 0.3, 0.1]))
    armature: np.ndarray = field(default_factory=lambda: np.array([0.1, 0.08, 0.05]))

    def __post_init__(self):
        self.coulomb_friction = np.asarray(self.coulomb_friction, dtype=float)
        self.viscous_damping = np.asarray(self.viscous_damping, dtype=float)
        self.armature = np.asarray(self.armature, dtype=float)
        if not (self.coulomb_friction.shape == self.viscous_damping.shape == self.armature.shape):
            raise ValueError("``coulomb_friction``, ``viscous_damping`` and ``armature`` must have matching shapes.")
        for name in ("coulomb_friction", "viscous_damping", "armature"):
            values = getattr(self, name)
            if not np.all(np.isfinite(values)) or np.any(values < 0):
                raise ValueError(f"``{name}`` must be finite and non-negative, got {values.tolist()}.")

    def for_joint(self, joint):
        return np.array([self.coulomb_friction[joint], self.viscous_damping[joint], self.armature[joint]])

    def with_joint(self, joint, values):
        """Copy with the ``(friction, damping, armature)`` triple of ``joint`` replaced."""
        out = JointDynamicsParams(self.coulomb_friction.copy(), self.viscous_damping.copy(), self.armature.copy())
        out.coulomb_friction[joint], out.viscous_damping[joint], out.armature[joint] = values
        return out

    def scaled(self, friction=1.0, damping=1.0, armature=1.0):
        return JointDynamicsParams(
            self.coulomb_friction * friction, self.viscous_damping * damping, self.armature * armature
        )

    def to_dict(self):
        return {
            "coulomb_friction": self.coulomb_friction.tolist(),
            "viscous_damping": self.viscous_damping.tolist(),
            "armature": self.armature.tolist(),
        }


@dataclass
class ArmModel:
    """Three revolute links in the plane plus a gripper.

    ``base_pose`` places joint 1 in the world. With the default base pointing straight down, ``q = 0`` hangs
    the arm vertically below the base.

    Example::

        from pushtorch.arm import ArmModel, forward_kinematics

        model = ArmModel(link_lengths=(0.3, 0.3, 0.3), base_pose=Pose2(0.0, 0.0, 0.0))
        forward_kinematics(model, np.zeros(3))
        >>> Pose2(x=0.9, y=0.0, theta=0.0)

    """

    link_lengths: tuple = (0.35, 0.3, 0.1)
    link_masses: tuple = (1.2, 0.8, 0.3)
    joint_limits: tuple = ((-2.6, 2.6), (-2.6, 2.6), (-2.6, 2.6))
    velocity_limits: tuple = (2.0, 2.5, 3.0)
    torque_limits: tuple = (30.0, 15.0, 5.0)
    base_pose: Pose2 = field(default_factory=lambda: Pose2(0.0, 0.4, -math.pi / 2))
    gripper: GripperModel = field(default_factory=GripperModel)
    finger_gains: tuple = (400.0, 40.0)

    def __post_init__(self):
        self.link_lengths = np.asarray(self.link_lengths, dtype=float)
        self.link_masses = np.asarray(self.link_masses, dtype=float)
        self.joint_limits = np.asarray(self.joint_limits, dtype=float).reshape(-1, 2)
        self.velocity_limits = np.asarray(self.velocity_limits, dtype=float)
        self.torque_limits = np.asarray(self.torque_limits, dtype=float)
        n = len(self.link_lengths)
        for name in ("link_masses", "joint_limits", "velocity_limits", "torque_limits"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"``{name}`` must have one entry per link ({n}).")
        if np.any(self.link_lengths <= 0) or np.any(self.link_masses <= 0):
            raise ValueError("``link_lengths`` and ``link_masses`` must be positive.")
        if np.any(self.joint_limits[:, 0] >= self.joint_limits[:, 1]):
            raise ValueError("``joint_limits`` must satisfy lo < hi for every joint.")
        if np.any(self.velocity_limits <= 0) or np.any(self.torque_limits <= 0):
            raise ValueError("``velocity_limits`` and ``torque_limits`` must be positive.")

    @property
    def n_joints(self):
        return len(self.link_lengths)

    @property
    def link_inertias(self):
        """Central inertia of each link modeled as a uniform rod."""
        return self.link_masses * self.link_lengths**2 / 12.0

    @property
    def reach(self):
        return float(np.sum(self.link_lengths))

    def within_limits(self, q, tol=1e-9):
        q = np.asarray(q)[: self.n_joints]
        return bool(np.all(q >= self.joint_limits[:, 0] - tol) and np.all(q <= self.joint_limits[:, 1] + tol))

    def with_joint_limits(self, joint_limits):
        return replace(self, joint_limits=np.asarray(joint_limits, dtype=float))


@dataclass
class JointState:
    """Joint positions and velocities. The last entry is the finger opening (m) and its rate."""

    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).copy()
        self.qdot = np.asarray(self.qdot, dtype=float).copy()
        if self.q.shape != self.qdot.shape:
            raise ValueError(f"``q`` {self.q.shape} and ``qdot`` {self.qdot.shape} must have the same shape.")

    @classmethod
    def at_rest(cls, q_arm, width):
        return cls(np.append(np.asarray(q_arm, dtype=float), width), np.zeros(len(q_arm) + 1))

    @property
    def arm_q(self):
        return self.q[:-1]

    @property
    def arm_qdot(self):
        return self.qdot[:-1]

    @property
    def width(self):
        return float(self.q[-1])


@dataclass
class LimitCounter:
    """Counts of clamp events. A control tick is violating if any clamp happened during it."""

    velocity_clamps: int = 0
    torque_clamps: int = 0
    ticks: int = 0
    violating_ticks: int = 0

    def total(self):
        return self.velocity_clamps + self.torque_clamps

    @property
    def violation_rate(self):
        return self.violating_ticks / self.ticks if self.ticks else 0.0

    def merge(self, other):
        self.velocity_clamps += other.velocity_clamps
        self.torque_clamps += other.torque_clamps
        self.ticks += other.ticks
        self.violating_ticks += other.violating_ticks
        return self


@dataclass
class IkConfig:
    damping: float = 1e-3
    max_iterations: int = 200
    step_clamp: float = 0.2
    position_tolerance: float = 1e-4
    orientation_tolerance: float = 1e-3
    restarts: int = 4
    seed: int = 0

    def validate(self):
        if self.damping < 0 or self.step_clamp <= 0:
            raise ValueError("``damping`` cannot be negative and ``step_clamp`` must be positive.")
        if self.max_iterations < 1 or self.restarts < 0:
            raise ValueError("``max_iterations`` must be at least 1 and ``restarts`` cannot be negative.")
        return self


@dataclass
class IkResult:
    q: np.ndarray
    iterations: int
    residual: np.ndarray


def smooth_sign(x, eps=SMOOTH_SIGN_EPS):
    return np.tanh(np.asarray(x) / eps)


def _link_frames(model, q):
    """World angle of every link and world position of every joint, ending with the flange."""
    q = np.asarray(q, dtype=float)[: model.n_joints]
    angles = model.base_pose.theta + np.cumsum(q)
    points = [model.base_pose.position]
    for length, angle in zip(model.link_lengths, angles):
        points.append(points[-1] + length * np.array([math.cos(angle), math.sin(angle)]))
    return angles, np.array(points)


def forward_kinematics(model, q):
    """End-effector (flange) pose in the world frame.

    :param model: Arm description
    :type model: pushtorch.arm.ArmModel

    :param q: Joint angles; a trailing finger entry is ignored
    :type q: numpy.ndarray

    :return: Flange pose
    :rtype: pushtorch.Pose2
    """
    angles, points = _link_frames(model, q)
    return Pose2(points[-1][0], points[-1][1], angles[-1])


def joint_positions(model, q):
    """``(n_joints + 1, 2)`` array: every joint position followed by the flange."""
    return _link_frames(model, q)[1]


def jacobian(model, q):
    """Planar Jacobian mapping joint rates to ``(vx, vy, omega)`` of the flange.

    Column ``i`` is ``(-(p_E - p_i)_y, (p_E - p_i)_x, 1)`` with ``p_i`` the position of joint ``i``.
    """
    points = joint_positions(model, q)
    return point_jacobian(model, q, points[-1], with_rotation=True)


def point_jacobian(model, q, point, with_rotation=False):
    """Jacobian of a world point rigidly attached to the last link (2×n, or 3×n with the rotation row)."""
    points = joint_positions(model, q)
    n = model.n_joints
    rows = 3 if with_rotation else 2
    jac = np.zeros((rows, n))
    for i in range(n):
        r = np.asarray(point) - points[i]
        jac[0, i] = -r[1]
        jac[1, i] = r[0]
        if with_rotation:
            jac[2, i] = 1.0
    return jac


def gripper_points(model, q, width):
    """World position of every ``c_f`` label."""
    ee = forward_kinematics(model, q)
    return {label: ee.transform_point(p) for label, p in model.gripper.points(width).items()}


def link_points(model, q, width, samples=8):
    """Points sampled along every link and gripper segment, used for collision checks and rendering."""
    points = joint_positions(model, q)
    out = []
    for a, b in zip(points[:-1], points[1:]):
        for s in np.linspace(0.0, 1.0, samples):
            out.append(a + s * (b - a))
    ee = forward_kinematics(model, q)
    for a, b in model.gripper.segments(width):
        a, b = ee.transform_point(a), ee.transform_point(b)
        for s in np.linspace(0.0, 1.0, samples):
            out.append(a + s * (b - a))
    return np.array(out)


def _pose_error(target, pose):
    return np.array([target.x - pose.x, target.y - pose.y, wrap_angle(target.theta - pose.theta)])


def _dls(model, target, q0, config):
    q = np.array(q0, dtype=float)
    lam2 = config.damping**2
    error = _pose_error(target, forward_kinematics(model, q))
    for iteration in range(config.max_iterations + 1):
        if np.hypot(error[0], error[1]) < config.position_tolerance and abs(error[2]) < config.orientation_tolerance:
            return q, iteration, error, True
        if iteration == config.max_iterations:
            break
        jac = jacobian(model, q)
        dq = jac.T @ np.linalg.solve(jac @ jac.T + lam2 * np.eye(3), error)
        largest = np.max(np.abs(dq))
        if largest > config.step_clamp:
            dq *= config.step_clamp / largest
        q = q + dq
        error = _pose_error(target, forward_kinematics(model, q))
    return q, config.max_iterations, error, False


def solve_ik(model, target, q_seed, config=None):
    """Damped-least-squares inverse kinematics for the flange pose ``target``.

    The solver starts from ``q_seed`` and, on failure, from ``config.restarts`` extra seeds drawn
    deterministically inside the joint limits. A solution is accepted only if it reaches the position and
    orientation tolerances and, after wrapping every angle to :math:`(-π, π]`, lies within the joint limits.

    Example::

        model = ArmModel()
        q = np.array([0.3, -0.8, 0.5])
        result = solve_ik(model, forward_kinematics(model, q), q)
        print(result.iterations)
        >>> 0

    :param model: Arm description
    :type model: pushtorch.arm.ArmModel

    :param target: Desired flange pose
    :type target: pushtorch.Pose2

    :param q_seed: Initial guess
    :type q_seed: numpy.ndarray

    :param config: Solver settings, defaults to :class:`IkConfig`
    :type config: pushtorch.arm.IkConfig, optional

    :return: Joint angles, iterations used and final residual
    :rtype: pushtorch.arm.IkResult

    :raises InfeasibleError: target unreachable, tolerance unmet or limits violated
    """
    config = config or IkConfig()
    q_seed = np.asarray(q_seed, dtype=float)[: model.n_joints]
    if not np.all(np.isfinite(q_seed)):
        raise ValueError("``q_seed`` must be finite.")
    if np.linalg.norm(target.position - model.base_pose.position) > model.reach + config.position_tolerance:
        raise InfeasibleError("Target lies outside the reach of the arm.", residual=None)

    rng = np.random.default_rng(config.seed)
    lo, hi = model.joint_limits[:, 0], model.joint_limits[:, 1]
    seeds = [q_seed] + [rng.uniform(lo, hi) for _ in range(config.restarts)]
    best = None
    for seed in seeds:
        q, iterations, error, converged = _dls(model, target, seed, config)
        q = wrap_angle(q)
        if converged and model.within_limits(q):
            return IkResult(q, iterations, error)
        if best is None or np.linalg.norm(error) < np.linalg.norm(best[2]):
            best = (q, iterations, error)
    q, iterations, error = best
    raise InfeasibleError(
        f"IK did not reach the target within the joint limits (residual {np.linalg.norm(error):.3g}).",
        q=q,
        residual=error,
        iterations=iterations,
    )


def derivative_gain(kp, rho):
    """:math:`k_d = ρ \\sqrt{k_p}` with ``rho`` floored at 0.5 and ``kp`` at 0."""
    kp = np.maximum(np.asarray(kp, dtype=float), 0.0)
    rho = np.maximum(np.asarray(rho, dtype=float), 0.5)
    return rho * np.sqrt(kp)


def joint_position_controller(state, q_target, kp, rho, torque_limits, feedforward=None, counter=None):
    """Joint PD position control with gains set per call.

    :math:`τ = k_p (q^* - q) - k_d \\dot q + τ_{ff}` with :math:`k_d = ρ \\sqrt{k_p}`, clamped to
    ``±torque_limits``. Clamped joints are counted on ``counter``.

    Example::

        state = JointState(np.array([0.0, 0.0, 0.0, 0.02]), np.array([1.0, 1.0, 1.0, 0.0]))
        tau = joint_position_controller(state, np.full(3, 0.1), 50.0, 1.0, np.full(3, 100.0))
        print(tau)
        >>> [-2.0710678 -2.0710678 -2.0710678]

    :param state: Current joint state
    :type state: pushtorch.arm.JointState

    :param q_target: Target joint angles
    :type q_target: numpy.ndarray

    :param kp: Per-joint (or shared) stiffness, floored at 0
    :type kp: float or numpy.ndarray

    :param rho: Per-joint (or shared) damping ratio, floored at 0.5
    :type rho: float or numpy.ndarray

    :param torque_limits: Per-joint torque bound
    :type torque_limits: numpy.ndarray

    :param feedforward: Torque added before clamping, defaults to ``None``
    :type feedforward: numpy.ndarray, optional

    :param counter: Clamp bookkeeping, defaults to ``None``
    :type counter: pushtorch.arm.LimitCounter, optional

    :return: Joint torques
    :rtype: numpy.ndarray
    """
    q, qdot = state.arm_q, state.arm_qdot
    kp = np.maximum(np.asarray(kp, dtype=float), 0.0)
    tau = kp * (np.asarray(q_target, dtype=float)[: len(q)] - q) - derivative_gain(kp, rho) * qdot
    if feedforward is not None:
        tau = tau + feedforward
    limits = np.asarray(torque_limits, dtype=float)
    clipped = np.clip(tau, -limits, limits)
    if counter is not None:
        counter.torque_clamps += int(np.count_nonzero(clipped != tau))
    return clipped


def inverse_dynamics(model, q, qdot, qddot, gravity=GRAVITY):
    """Recursive Newton-Euler inverse dynamics of the planar chain.

    Returns :math:`M(q)\\ddot q + C(q, \\dot q)\\dot q + g(q)` for rod links, without armature.
    """
    n = model.n_joints
    q, qdot, qddot = (np.asarray(v, dtype=float)[:n] for v in (q, qdot, qddot))
    lengths, masses, inertias = model.link_lengths, model.link_masses, model.link_inertias
    angles = model.base_pose.theta + np.cumsum(q)
    omega = np.cumsum(qdot)
    alpha = np.cumsum(qddot)

    acc = np.array([0.0, gravity])
    axes, com_acc = [], []
    for i in range(n):
        e = np.array([math.cos(angles[i]), math.sin(angles[i])])
        nrm = np.array([-e[1], e[0]])
        half = lengths[i] / 2
        com_acc.append(acc + alpha[i] * half * nrm - omega[i] ** 2 * half * e)
        acc = acc + alpha[i] * lengths[i] * nrm - omega[i] ** 2 * lengths[i] * e
        axes.append(e)

    tau = np.zeros(n)
    f_next, tau_next = np.zeros(2), 0.0
    for i in reversed(range(n)):
        f = masses[i] * com_acc[i] + f_next
        r = lengths[i] / 2 * axes[i]
        moment = inertias[i] * alpha[i] + tau_next + (r[0] * f[1] - r[1] * f[0]) + (r[0] * f_next[1] - r[1] * f_next[0])
        tau[i] = moment
        f_next, tau_next = f, moment
    return tau


def mass_matrix(model, q):
    n = model.n_joints
    zeros = np.zeros(n)
    return np.column_stack([inverse_dynamics(model, q, zeros, np.eye(n)[j], gravity=0.0) for j in range(n)])


def gravity_torques(model, q):
    zeros = np.zeros(model.n_joints)
    return inverse_dynamics(model, q, zeros, zeros)


def composite_inertia(model, q, joint):
    """Rigid-body inertia seen by ``joint`` with every other joint held, excluding armature."""
    return float(mass_matrix(model, q)[joint, joint])


def arm_dynamics_step(model, params, state, torques, dt, counter=None, finger_target=None):
    """One semi-implicit Euler step of the arm.

    :math:`(M(q) + diag(a))\\ddot q = τ - C\\dot q - g - c \\dot q - f\\,tanh(\\dot q / ε_v)`. Joint rates are
    clamped to the velocity limits (each clamp is counted). The finger is a PD-driven prismatic pair tracking
    ``finger_target`` inside ``[0, max_width]``.

    :return: The next joint state
    :rtype: pushtorch.arm.JointState

    :raises pushtorch.SimulationError: the state becomes non-finite
    """
    if dt <= 0:
        raise ValueError(f"``dt`` [{dt}] must be positive.")
    q, qdot = state.arm_q, state.arm_qdot
    inertia = mass_matrix(model, q) + np.diag(params.armature)
    bias = inverse_dynamics(model, q, qdot, np.zeros(model.n_joints))
    net = (
        np.asarray(torques, dtype=float)
        - bias
        - params.viscous_damping * qdot
        - params.coulomb_friction * smooth_sign(qdot)
    )
    qddot = np.linalg.solve(inertia, net)
    qdot_new = qdot + dt * qddot
    limited = np.clip(qdot_new, -model.velocity_limits, model.velocity_limits)
    if counter is not None:
        counter.velocity_clamps += int(np.count_nonzero(limited != qdot_new))
    q_new = q + dt * limited

    width, width_rate = state.q[-1], state.qdot[-1]
    target = width if finger_target is None else finger_target
    kp_f, kd_f = model.finger_gains
    width_rate = width_rate + dt * (kp_f * (target - width) - kd_f * width_rate)
    width = width + dt * width_rate
    if not 0.0 <= width <= model.gripper.max_width:
        width = min(max(width, 0.0), model.gripper.max_width)
        width_rate = 0.0

    out = JointState(np.append(q_new, width), np.append(limited, width_rate))
    if not (np.all(np.isfinite(out.q)) and np.all(np.isfinite(out.qdot))):
        raise SimulationError("Non-finite state in body 'arm'.")
    return out


def single_joint_step(inertia, friction, damping, armature, q, qdot, tau, dt, velocity_limit=None):
    """Scalar joint dynamics, vectorized over any broadcastable inputs.

    :math:`(I + a)\\ddot q = τ - c\\dot q - f\\,tanh(\\dot q/ε_v)` integrated with semi-implicit Euler.

    :return: ``(q, qdot, clamped)`` where ``clamped`` marks entries whose rate hit ``velocity_limit``
    """
    qddot = (tau - damping * qdot - friction * np.tanh(qdot / SMOOTH_SIGN_EPS)) / (inertia + armature)
    qdot = qdot + dt * qddot
    clamped = np.zeros(np.shape(qdot), dtype=bool)
    if velocity_limit is not None:
        limited = np.clip(qdot, -velocity_limit, velocity_limit)
        clamped = limited != qdot
        qdot = limited
    return q + dt * qdot, qdot, clamped


_ARM_KEYS = {
    "link_lengths",
    "link_masses",
    "joint_limits",
    "velocity_limits",
    "torque_limits",
    "base_pose",
    "gripper",
    "finger_gains",
    "dynamics",
}


def arm_config_to_dict(model, params):
    return {
        "link_lengths": model.link_lengths.tolist(),
        "link_masses": model.link_masses.tolist(),
        "joint_limits": model.joint_limits.tolist(),
        "velocity_limits": model.velocity_limits.tolist(),
        "torque_limits": model.torque_limits.tolist(),
        "base_pose": [model.base_pose.x, model.base_pose.y, model.base_pose.theta],
        "gripper": {
            "palm_depth": model.gripper.palm_depth,
            "finger_length": model.gripper.finger_length,
            "max_width": model.gripper.max_width,
            "palm_half_width": model.gripper.palm_half_width,
        },
        "finger_gains": list(model.finger_gains),
        "dynamics": params.to_dict(),
    }


def arm_config_from_dict(data):
    """Builds ``(ArmModel, JointDynamicsParams)`` from a mapping; missing keys take the defaults."""
    data = dict(data or {})
    unknown = set(data) - _ARM_KEYS
    if unknown:
        raise ConfigError(f"Unknown arm config keys: {sorted(unknown)}.")
    try:
        kwargs = {k: data[k] for k in _ARM_KEYS - {"base_pose", "gripper", "dynamics", "finger_gains"} if k in data}
        if "base_pose" in data:
            kwargs["base_pose"] = Pose2(*data["base_pose"])
        if "gripper" in data:
            kwargs["gripper"] = GripperModel(**data["gripper"])
        if "finger_gains" in data:
            kwargs["finger_gains"] = tuple(data["finger_gains"])
        model = ArmModel(**kwargs)
        params = JointDynamicsParams(**data.get("dynamics", {}))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid arm config: {e}") from e
    if params.armature.shape != (model.n_joints,):
        raise ConfigError("Arm ``dynamics`` must have one entry per joint.")
    return model, params


def load_arm_config(path):
    """Reads an arm description (geometry, limits, dynamics) from a YAML file."""
    with open(path) as f:
        return arm_config_from_dict(yaml.safe_load(f))


def save_arm_config(path, model, params):
    with open(path, "w") as f:
        yaml.safe_dump(arm_config_to_dict(model, params), f, sort_keys=False)
    log.info("wrote arm config to %s", path)
