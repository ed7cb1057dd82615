import logging
import math
from dataclasses import asdict, dataclass, field

import cma
import numpy as np
import pandas as pd
from tqdm import tqdm

from pushtorch.arm import ArmModel, JointDynamicsParams, composite_inertia, single_joint_step

log = logging.getLogger(__name__)

PARAM_NAMES = ("coulomb_friction", "viscous_damping", "armature")


@dataclass
class SysidConfig:
    """Excitation and fitting settings of the joint identification.

    Amplitudes are drawn as ``U[amplitude_range] * amplitude_scale * half_range`` around ``hold_q``, and
    frequencies as ``U[frequency_range] * velocity_limit / A``, so the sinusoid never asks for more than the
    velocity limit.
    """

    n_traj: int = 8
    duration: float = 4.0
    sample_hz: float = 100.0
    dt: float = 0.002
    kp: float = 80.0
    rho: float = 1.0
    amplitude_range: tuple = (0.3, 1.0)
    amplitude_scale: float = 0.5
    frequency_range: tuple = (0.2, 1.0)
    hold_q: tuple = (0.0, 0.0, 0.0)
    plant_scale: tuple = (1.5, 1.5, 1.5)
    measurement_noise: float = 0.0
    log_bounds: tuple = (math.log(1e-6), math.log(10.0))
    sigma0: float = 0.5
    consistency_threshold: float = 1e-3

    def validate(self):
        if self.n_traj < 1:
            raise ValueError("``n_traj`` must be at least 1.")
        if self.duration <= 0 or self.sample_hz <= 0 or self.dt <= 0:
            raise ValueError("``duration``, ``sample_hz`` and ``dt`` must be positive.")
        ratio = 1.0 / (self.sample_hz * self.dt)
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("``1 / (sample_hz * dt)`` must be an integer.")
        lo, hi = self.amplitude_range
        if not 0 <= lo <= hi:
            raise ValueError("``amplitude_range`` must satisfy 0 <= lo <= hi.")
        lo, hi = self.frequency_range
        if not 0 < lo <= hi <= 1:
            raise ValueError("``frequency_range`` must lie in (0, 1].")
        if self.kp <= 0 or self.rho < 0.5:
            raise ValueError("``kp`` must be positive and ``rho`` at least 0.5.")
        return self

    @property
    def substeps(self):
        return int(round(1.0 / (self.sample_hz * self.dt)))

    @property
    def n_samples(self):
        return int(round(self.duration * self.sample_hz))


@dataclass
class CmaEsConfig:
    """Settings of :func:`cmaes_minimize`.

    ``popsize`` defaults to :math:`4 + \\lfloor 3 \\ln n \\rfloor`. Points outside ``bounds`` are evaluated at their
    projection plus ``penalty`` times the squared projection distance. With ``vectorized`` the objective receives
    the whole population as a ``(popsize, n)`` array.
    """

    popsize: int = None
    max_generations: int = 1000
    ftol: float = 1e-12
    xtol: float = 1e-12
    seed: int = 0
    bounds: tuple = None
    penalty: float = 1e4
    vectorized: bool = False

    def validate(self):
        if self.max_generations < 1:
            raise ValueError("``max_generations`` must be at least 1.")
        if self.popsize is not None and self.popsize < 2:
            raise ValueError("``popsize`` must be at least 2.")
        if self.penalty < 0:
            raise ValueError("``penalty`` cannot be negative.")
        return self


@dataclass
class CmaEsState:
    """Snapshot of the search distribution after a generation."""

    mean: np.ndarray
    sigma: float
    covariance: np.ndarray
    path_c: np.ndarray
    path_sigma: np.ndarray
    popsize: int
    generation: int


@dataclass
class CmaEsResult:
    x_best: np.ndarray
    f_best: float
    history: list
    stop_reason: str
    restarts: int = 0
    state: CmaEsState = None

    def __iter__(self):
        return iter((self.x_best, self.f_best, self.history))


@dataclass(frozen=True)
class ExcitationSpec:
    joint: int
    amplitude: float
    omega: float
    duration: float
    sample_hz: float
    center: float = 0.0

    def target(self, t):
        return self.center + self.amplitude * np.sin(self.omega * np.asarray(t))


@dataclass
class TrajectoryRecord:
    spec: ExcitationSpec
    t: np.ndarray
    q_target: np.ndarray
    q: np.ndarray
    seed: int = 0
    label: str = "plant"

    def __post_init__(self):
        expected = int(round(self.spec.duration * self.spec.sample_hz))
        if not len(self.t) == len(self.q) == len(self.q_target) == expected:
            raise ValueError(f"Trajectory must hold {expected} uniform samples.")


@dataclass
class JointFit:
    joint: int
    params: np.ndarray
    f_best: float
    consistent: bool
    result: CmaEsResult = field(repr=False, default=None)


def default_popsize(n):
    return 4 + int(math.floor(3 * math.log(n)))


def _stop_reason(stops):
    if "maxiter" in stops:
        return "max_generations"
    if "tolflatfitness" in stops:
        return "flat_fitness"
    if any(k.startswith("tolfun") for k in stops):
        return "f_tolerance"
    if any(k in stops for k in ("tolx", "tolupsigma", "noeffectaxis", "noeffectcoord", "tolstagnation")):
        return "sigma_collapse"
    return ",".join(sorted(stops)) or "unknown"


def _snapshot(es, n):
    return CmaEsState(
        mean=np.array(es.mean, dtype=float)[:n],
        sigma=float(es.sigma),
        covariance=np.array(es.sm.C, dtype=float)[:n, :n],
        path_c=np.array(getattr(es, "pc", np.zeros(es.N)), dtype=float)[:n],
        path_sigma=np.array(getattr(es.adapt_sigma, "ps", np.zeros(es.N)), dtype=float)[:n],
        popsize=int(es.popsize),
        generation=int(es.countiter),
    )


def _positive_definite(matrix):
    if not np.all(np.isfinite(matrix)):
        return False
    if not np.allclose(matrix, matrix.T, atol=1e-12 * max(1.0, np.abs(matrix).max())):
        return False
    return bool(np.linalg.eigvalsh((matrix + matrix.T) / 2).min() > 0)


def cmaes_minimize(objective, x0, sigma0, config=None, callback=None):
    """Minimizes ``objective`` with the (μ/μ_w, λ) covariance matrix adaptation evolution strategy.

    Sampling and the rank-one plus rank-μ covariance updates come from ``cma.CMAEvolutionStrategy``; this
    function adds the bound handling, the generation limit and the restart on a covariance that is no longer
    symmetric positive-definite.

    Example::

        from pushtorch.sysid import cmaes_minimize

        result = cmaes_minimize(lambda x: float(np.sum(x**2)), np.ones(3), 0.5)
        print(result.f_best < 1e-10)
        >>> True

    :param objective: ``f(x) -> float``, or ``f(X) -> (popsize,)`` when ``config.vectorized``
    :type objective: callable

    :param x0: Initial mean
    :type x0: numpy.ndarray

    :param sigma0: Initial step size
    :type sigma0: float

    :param config: Search settings, defaults to :class:`CmaEsConfig`
    :type config: pushtorch.sysid.CmaEsConfig, optional

    :param callback: Called as ``callback(generation, population)`` before every evaluation, defaults to ``None``
    :type callback: callable, optional

    :return: Best point, its value, per-generation history and the stop reason
    :rtype: pushtorch.sysid.CmaEsResult
    """
    config = (config or CmaEsConfig()).validate()
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    n = x0.size
    if n < 1:
        raise ValueError("``x0`` must have at least one dimension.")
    # pycma refuses one-dimensional problems: search in 2-D with a quadratic on a dummy coordinate
    padded = n == 1
    start = np.append(x0, 0.0) if padded else x0
    if sigma0 <= 0:
        raise ValueError(f"``sigma0`` [{sigma0}] must be positive.")
    popsize = config.popsize or default_popsize(n)
    lo = hi = None
    if config.bounds is not None:
        lo, hi = (np.broadcast_to(np.asarray(b, dtype=float), (n,)) for b in config.bounds)

    def evaluate(population):
        X = np.array(population, dtype=float)[:, :n]
        projected = X if lo is None else np.clip(X, lo, hi)
        if config.vectorized:
            values = np.asarray(objective(projected), dtype=float).reshape(-1)
        else:
            values = np.array([float(objective(x)) for x in projected])
        if lo is not None:
            values = values + config.penalty * np.sum((X - projected) ** 2, axis=1)
        return projected, values

    def make_es(mean, restart):
        opts = {
            "popsize": popsize,
            "seed": config.seed + restart + 1,
            "verbose": -9,
            "verb_log": 0,
            "verb_disp": 0,
            "tolfun": config.ftol,
            "tolx": config.xtol,
            "maxiter": config.max_generations,
        }
        return cma.CMAEvolutionStrategy(mean, sigma0, opts)

    es = make_es(start, 0)
    restarts = 0
    x_best, f_best = x0.copy() if lo is None else np.clip(x0, lo, hi), math.inf
    history = []
    stop_reason = "max_generations"
    for generation in range(1, config.max_generations + 1):
        population = es.ask()
        if callback is not None:
            callback(generation, np.array(population)[:, :n])
        projected, values = evaluate(population)
        told = values + np.array(population)[:, n] ** 2 if padded else values
        k = int(np.argmin(values))
        if values[k] < f_best:
            f_best, x_best = float(values[k]), projected[k].copy()
        try:
            es.tell(population, told.tolist())
            healthy = _positive_definite(np.asarray(es.sm.C)) and es.sigma > 0
        except (np.linalg.LinAlgError, ValueError):
            healthy = False
        history.append(
            {
                "generation": generation,
                "f_best": f_best,
                "f_median": float(np.median(values)),
                "sigma": float(es.sigma),
            }
        )
        if not healthy:
            restarts += 1
            log.warning("covariance lost positive-definiteness at generation %d, restarting", generation)
            es = make_es(np.array(es.mean, dtype=float), restarts)
            continue
        stops = es.stop()
        if stops:
            stop_reason = _stop_reason(stops)
            break
    return CmaEsResult(x_best, f_best, history, stop_reason, restarts, _snapshot(es, n))


def generate_excitations(model, joint, n_traj, rng, config=None):
    """Random sinusoid targets for one joint, sized by its position and velocity limits.

    Example::

        specs = generate_excitations(ArmModel(), joint=1, n_traj=8, rng=np.random.default_rng(0))
        print(all(s.amplitude * s.omega <= 2.5 for s in specs))
        >>> True

    """
    config = config or SysidConfig()
    lo, hi = model.joint_limits[joint]
    half_range = (hi - lo) / 2
    v_max = model.velocity_limits[joint]
    specs = []
    for _ in range(n_traj):
        amplitude = rng.uniform(*config.amplitude_range) * config.amplitude_scale * half_range
        omega = rng.uniform(*config.frequency_range) * v_max / amplitude if amplitude > 0 else 0.0
        specs.append(
            ExcitationSpec(
                joint, float(amplitude), float(omega), config.duration, config.sample_hz, config.hold_q[joint]
            )
        )
    return specs


def simulate_batch(inertia, params, specs, config, velocity_limit=None, torque_limit=None):
    """Tracks every excitation under every parameter row at once.

    :param inertia: Rigid-body inertia seen by the joint
    :type inertia: float

    :param params: ``(P, 3)`` rows of ``(friction, damping, armature)``
    :type params: numpy.ndarray

    :param specs: ``R`` excitations of one joint
    :type specs: list of pushtorch.sysid.ExcitationSpec

    :return: ``(P, R, n_samples)`` sampled joint positions
    :rtype: numpy.ndarray
    """
    params = np.atleast_2d(np.asarray(params, dtype=float))
    friction, damping, armature = (params[:, k : k + 1] for k in range(3))
    amplitude = np.array([s.amplitude for s in specs])
    omega = np.array([s.omega for s in specs])
    center = np.array([s.center for s in specs])
    kd = config.rho * math.sqrt(config.kp)
    q = np.broadcast_to(center, (len(params), len(specs))).copy()
    qdot = np.zeros_like(q)
    out = np.empty((len(params), len(specs), config.n_samples))
    substeps = config.substeps
    for step in range(config.n_samples * substeps):
        if step % substeps == 0:
            out[:, :, step // substeps] = q
        target = center + amplitude * np.sin(omega * step * config.dt)
        tau = config.kp * (target - q) - kd * qdot
        if torque_limit is not None:
            tau = np.clip(tau, -torque_limit, torque_limit)
        q, qdot, _ = single_joint_step(inertia, friction, damping, armature, q, qdot, tau, config.dt, velocity_limit)
    return out


def _joint_context(model, joint, config):
    inertia = composite_inertia(model, np.asarray(config.hold_q, dtype=float), joint)
    return inertia, model.velocity_limits[joint], model.torque_limits[joint]


def collect_trajectory(plant_params, spec, model=None, config=None, seed=0, label="plant"):
    """Runs the plant's joint position loop on one excitation and samples the joint angle."""
    model = model or ArmModel()
    config = (config or SysidConfig()).validate()
    inertia, v_max, t_max = _joint_context(model, spec.joint, config)
    q = simulate_batch(inertia, plant_params.for_joint(spec.joint), [spec], config, v_max, t_max)[0, 0]
    if config.measurement_noise > 0:
        q = q + np.random.default_rng(seed).normal(0.0, config.measurement_noise, q.shape)
    t = np.arange(config.n_samples) / config.sample_hz
    return TrajectoryRecord(spec, t, spec.target(t), q, seed, label)


def _records_joint(records):
    joints = {r.spec.joint for r in records}
    if len(joints) != 1:
        raise ValueError(f"Records must share one joint, got {sorted(joints)}.")
    return joints.pop()


def batched_objective(params, records, model, config):
    """Objective for every row of ``params`` (``(P, 3)``) against ``records``; returns ``(P,)``."""
    joint = _records_joint(records)
    inertia, v_max, t_max = _joint_context(model, joint, config)
    sim = simulate_batch(inertia, params, [r.spec for r in records], config, v_max, t_max)
    real = np.stack([r.q for r in records])
    return np.sqrt(((sim - real[None]) ** 2).sum(axis=2)).sum(axis=1)


def sysid_objective(alpha, records, model=None, config=None):
    """Sum over records of the root of the summed squared angle discrepancy between record and simulation.

    :param alpha: Candidate parameters, either a full :class:`~pushtorch.arm.JointDynamicsParams` or the
        ``(friction, damping, armature)`` triple of the records' joint
    :type alpha: pushtorch.arm.JointDynamicsParams or numpy.ndarray

    :return: Non-negative discrepancy (rad)
    :rtype: float
    """
    model = model or ArmModel()
    config = config or SysidConfig()
    if not records:
        return 0.0
    joint = _records_joint(records)
    triple = alpha.for_joint(joint) if isinstance(alpha, JointDynamicsParams) else np.asarray(alpha, dtype=float)
    return float(batched_objective(triple[None], records, model, config)[0])


def make_plant(nominal, scale=(1.5, 1.5, 1.5)):
    """Synthetic "real" plant: nominal parameters scaled per component (friction, damping, armature)."""
    return nominal.scaled(*scale)


def fit_joint(records, x0, model=None, config=None, cma_config=None, progress=False):
    """Fits friction, damping and armature independently for every joint present in ``records``.

    The search runs in log space inside ``config.log_bounds``, so fitted values are strictly positive. A fit whose
    objective per record stays above ``config.consistency_threshold`` is flagged and logged.

    :param records: Trajectories, any mix of joints
    :type records: list of pushtorch.sysid.TrajectoryRecord

    :param x0: Starting parameters, also used for joints without records
    :type x0: pushtorch.arm.JointDynamicsParams

    :return: Fitted parameters and one fit report per identified joint
    :rtype: tuple of (pushtorch.arm.JointDynamicsParams, list of pushtorch.sysid.JointFit)
    """
    model = model or ArmModel()
    config = (config or SysidConfig()).validate()
    cma_config = cma_config or CmaEsConfig()
    cma_config = CmaEsConfig(**dict(asdict(cma_config), bounds=config.log_bounds, vectorized=True))
    fitted = x0
    fits = []
    joints = sorted({r.spec.joint for r in records})
    for joint in tqdm(joints, disable=not progress, desc="sysid"):
        group = [r for r in records if r.spec.joint == joint]
        start = np.log(np.clip(x0.for_joint(joint), math.exp(config.log_bounds[0]), math.exp(config.log_bounds[1])))

        def objective(X, group=group):
            return batched_objective(np.exp(X), group, model, config)

        result = cmaes_minimize(objective, start, config.sigma0, cma_config)
        params = np.exp(result.x_best)
        consistent = result.f_best / len(group) <= config.consistency_threshold
        if not consistent:
            log.warning(
                "joint %d: objective floor %.3g over %d records, data may come from inconsistent plants",
                joint,
                result.f_best,
                len(group),
            )
        log.info(
            "joint %d: friction=%.4g damping=%.4g armature=%.4g (f=%.3g, %s)",
            joint,
            *params,
            result.f_best,
            result.stop_reason,
        )
        fitted = fitted.with_joint(joint, params)
        fits.append(JointFit(joint, params, result.f_best, consistent, result))
    return fitted, fits


def records_to_frame(records):
    rows = []
    for index, record in enumerate(records):
        spec = record.spec
        rows.append(
            pd.DataFrame(
                {
                    "traj": index,
                    "joint": spec.joint,
                    "amplitude": spec.amplitude,
                    "omega": spec.omega,
                    "duration": spec.duration,
                    "sample_hz": spec.sample_hz,
                    "center": spec.center,
                    "seed": record.seed,
                    "label": record.label,
                    "t": record.t,
                    "q_target": record.q_target,
                    "q": record.q,
                }
            )
        )
    return pd.concat(rows, ignore_index=True) if rows else pd.DataFrame()


def save_records(path, records):
    records_to_frame(records).to_csv(path, index=False)


def load_records(path):
    frame = pd.read_csv(path)
    records = []
    for _, group in frame.groupby("traj", sort=True):
        first = group.iloc[0]
        spec = ExcitationSpec(
            int(first.joint),
            float(first.amplitude),
            float(first.omega),
            float(first.duration),
            float(first.sample_hz),
            float(first.center),
        )
        records.append(
            TrajectoryRecord(
                spec,
                group.t.to_numpy(),
                group.q_target.to_numpy(),
                group.q.to_numpy(),
                int(first.seed),
                str(first.label),
            )
        )
    return records
