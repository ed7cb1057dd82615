import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class CurriculumConfig:
    """Residual-limit schedule.

    :param zeta_o: Initial ``(position (m), rotation (rad))`` residual limit, defaults to ``(0.06, 0.1)``
    :type zeta_o: tuple, optional

    :param zeta_star: Final residual limit, defaults to ``(0.02, 0.03)``
    :type zeta_star: tuple, optional

    :param n_steps: Number of geometric reductions from ``zeta_o`` to ``zeta_star``, defaults to ``10``
    :type n_steps: int, optional

    :param trigger: Windowed success rate that triggers a reduction, defaults to ``0.8``
    :type trigger: float, optional

    :param window: Number of recent episodes in the success window, defaults to ``1024``
    :type window: int, optional

    :param min_episodes: Outcomes the window must hold before the trigger is evaluated, defaults to ``1``
    :type min_episodes: int, optional

    :param enabled: When ``False`` the limit is fixed at ``zeta_star`` from the start, defaults to ``True``
    :type enabled: bool, optional
    """

    zeta_o: tuple = (0.06, 0.1)
    zeta_star: tuple = (0.02, 0.03)
    n_steps: int = 10
    trigger: float = 0.8
    window: int = 1024
    min_episodes: int = 1
    enabled: bool = True

    def validate(self):
        zeta_o, zeta_star = np.asarray(self.zeta_o, dtype=float), np.asarray(self.zeta_star, dtype=float)
        if zeta_o.shape != (2,) or zeta_star.shape != (2,):
            raise ValueError("``zeta_o`` and ``zeta_star`` must be (position, rotation) pairs.")
        if np.any(zeta_star <= 0) or np.any(zeta_o < zeta_star):
            raise ValueError("Residual limits must satisfy ``zeta_o`` >= ``zeta_star`` > 0.")
        if self.n_steps < 1:
            raise ValueError("``n_steps`` must be at least 1.")
        if not 0 < self.trigger < 1:
            raise ValueError(f"``trigger`` [{self.trigger}] must be between (0, 1).")
        if self.window < 1:
            raise ValueError("``window`` must be at least 1.")
        if not 1 <= self.min_episodes <= self.window:
            raise ValueError(f"``min_episodes`` [{self.min_episodes}] must be between [1, ``window``].")
        return self


def residual_ratio(zeta_o, zeta_star, n_steps):
    """Per-component geometric ratio :math:`(ζ^*/ζ_o)^{1/N_s}`.

    Example::

        from pushtorch.curriculum import residual_ratio

        residual_ratio((0.06, 0.1), (0.02, 0.03), 10)
        >>> array([0.8959584 , 0.88656815])

    """
    zeta_o, zeta_star = np.asarray(zeta_o, dtype=float), np.asarray(zeta_star, dtype=float)
    if np.any(zeta_star <= 0) or np.any(zeta_o < zeta_star):
        raise ValueError("``zeta_o`` must be at least ``zeta_star`` and both positive.")
    if n_steps < 1:
        raise ValueError("``n_steps`` must be at least 1.")
    return (zeta_star / zeta_o) ** (1.0 / n_steps)


@dataclass
class CurriculumState:
    """Current residual limit and the success window that drives it.

    ``zeta`` is always recomputed as :math:`ζ_o r^k` from the number of reductions ``k``; at ``k = N_s`` it is
    exactly ``zeta_star``.
    """

    config: CurriculumConfig = field(default_factory=CurriculumConfig)
    reductions_done: int = 0
    window: deque = None

    def __post_init__(self):
        self.config.validate()
        if not self.config.enabled:
            self.reductions_done = self.config.n_steps
        self.window = deque(self.window or (), maxlen=self.config.window)

    @property
    def ratio(self):
        return residual_ratio(self.config.zeta_o, self.config.zeta_star, self.config.n_steps)

    @property
    def zeta(self):
        if self.reductions_done >= self.config.n_steps:
            return np.asarray(self.config.zeta_star, dtype=float)
        return np.asarray(self.config.zeta_o, dtype=float) * self.ratio**self.reductions_done

    @property
    def finished(self):
        return self.reductions_done >= self.config.n_steps

    @property
    def success_rate(self):
        return float(np.mean(self.window)) if self.window else 0.0

    @property
    def ready(self):
        """Whether the window holds enough outcomes to evaluate the trigger."""
        return len(self.window) >= self.config.min_episodes

    def on_episode_batch(self, successes):
        """Pushes episode outcomes and applies at most one reduction.

        The trigger is evaluated once the window holds ``min_episodes`` outcomes; the rate is taken over whatever
        the window holds. A reduction clears the window.

        :return: ``True`` if a reduction happened
        :rtype: bool
        """
        self.window.extend(bool(s) for s in successes)
        if self.finished or not self.ready:
            return False
        if self.success_rate < self.config.trigger:
            return False
        self.reductions_done += 1
        self.window.clear()
        zeta = self.zeta
        log.info(
            "residual limit reduced (%d/%d): zeta_pos=%.5f zeta_rot=%.5f",
            self.reductions_done,
            self.config.n_steps,
            zeta[0],
            zeta[1],
        )
        return True

    def state_dict(self):
        return {"reductions_done": self.reductions_done, "window": list(self.window)}

    def load_state_dict(self, state):
        self.reductions_done = int(state["reductions_done"])
        self.window = deque(state["window"], maxlen=self.config.window)


@dataclass
class JointRangeState:
    """Widening gap (rad) applied to both ends of every joint's limits during domain randomization.

    Each trigger multiplies the gap by ``1 - shrink``; gaps below ``floor`` snap to zero, i.e. to the nominal
    limits.
    """

    gap: float = 0.2
    shrink: float = 0.5
    trigger: float = 0.8
    floor: float = 1e-3
    narrowings: int = 0

    def __post_init__(self):
        if self.gap < 0:
            raise ValueError("``gap`` cannot be negative.")
        if not 0 < self.shrink <= 1:
            raise ValueError(f"``shrink`` [{self.shrink}] must be between (0, 1].")

    def state_dict(self):
        return {"gap": self.gap, "narrowings": self.narrowings}

    def load_state_dict(self, state):
        self.gap = float(state["gap"])
        self.narrowings = int(state["narrowings"])


def narrow_joint_range(state, success_rate):
    """Shrinks the joint-range gap toward the nominal limits when ``success_rate`` reaches the trigger.

    Example::

        state = JointRangeState(gap=0.2, shrink=0.5)
        narrow_joint_range(state, 0.8).gap
        >>> 0.1

    """
    if success_rate < state.trigger or state.gap == 0.0:
        return state
    gap = state.gap * (1.0 - state.shrink)
    state.gap = 0.0 if gap < state.floor else gap
    state.narrowings += 1
    log.info("joint range gap narrowed to %.4f rad", state.gap)
    return state


def sample_joint_limits(nominal, gap, rng):
    """Per-episode limits ``lo - U[0, gap]``, ``hi + U[0, gap]`` for every joint."""
    nominal = np.asarray(nominal, dtype=float)
    if gap == 0.0:
        return nominal.copy()
    widen = rng.uniform(0.0, gap, size=nominal.shape)
    return nominal + widen * np.array([-1.0, 1.0])
