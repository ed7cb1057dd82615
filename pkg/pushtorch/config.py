import dataclasses
import hashlib
import logging
from dataclasses import dataclass, field

import yaml

from pushtorch import ConfigError
from pushtorch.arm import IkConfig, arm_config_from_dict
from pushtorch.curriculum import CurriculumConfig
from pushtorch.distill import DistillConfig
from pushtorch.env import DOMAINS, DomainRandomizationConfig, EpisodeConfig, RewardConfig
from pushtorch.physics import ContactConfig
from pushtorch.policy import FixedPlacementPolicy, PolicyConfig
from pushtorch.ppo import PpoConfig
from pushtorch.sysid import CmaEsConfig, SysidConfig

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "dump_config", "config_hash"]

log = logging.getLogger(__name__)

SECTIONS = {
    "reward": RewardConfig,
    "episode": EpisodeConfig,
    "dr": DomainRandomizationConfig,
    "curriculum": CurriculumConfig,
    "ppo": PpoConfig,
    "policy": PolicyConfig,
    "ik": IkConfig,
    "contact": ContactConfig,
    "sysid": SysidConfig,
    "cmaes": CmaEsConfig,
    "distill": DistillConfig,
}


@dataclass
class ExperimentConfig:
    """Everything one run needs. Every section is a module config with its own defaults.

    :param domain: Task family, defaults to ``"card"``
    :type domain: str, optional

    :param n_envs: Parallel environments, defaults to ``256``
    :type n_envs: int, optional

    :param seed: Root seed, defaults to ``0``
    :type seed: int, optional

    :param iterations: Training iterations, defaults to ``500``
    :type iterations: int, optional

    :param pre_policy: Learn the placement policy; otherwise place with ``ee_init``, defaults to ``True``
    :type pre_policy: bool, optional

    :param ee_init: Fixed placement of the single-policy ablation, ``"above"`` or ``"at-right"``
    :type ee_init: str, optional

    :param arm: Arm description in the :func:`pushtorch.arm.load_arm_config` format, defaults to the built-in arm
    :type arm: dict, optional
    """

    domain: str = "card"
    n_envs: int = 256
    seed: int = 0
    iterations: int = 500
    out: str = "runs"
    pre_policy: bool = True
    ee_init: str = "above"
    checkpoint_interval: int = 10
    eval_episodes: int = 100
    demo_count: int = 50000
    ablation_seeds: tuple = (0, 1)
    render_stride: int = 10
    arm: dict = None
    reward: RewardConfig = field(default_factory=RewardConfig)
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    dr: DomainRandomizationConfig = field(default_factory=DomainRandomizationConfig)
    curriculum: CurriculumConfig = field(default_factory=CurriculumConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    ik: IkConfig = field(default_factory=IkConfig)
    contact: ContactConfig = field(default_factory=ContactConfig)
    sysid: SysidConfig = field(default_factory=SysidConfig)
    cmaes: CmaEsConfig = field(default_factory=CmaEsConfig)
    distill: DistillConfig = field(default_factory=DistillConfig)

    def validate(self):
        try:
            if self.domain not in DOMAINS:
                raise ValueError(f"``domain`` [{self.domain}] must be one of {DOMAINS}.")
            if self.ee_init not in FixedPlacementPolicy.MODES:
                raise ValueError(f"``ee_init`` [{self.ee_init}] must be one of {FixedPlacementPolicy.MODES}.")
            if min(self.n_envs, self.iterations, self.render_stride) < 1:
                raise ValueError("``n_envs``, ``iterations`` and ``render_stride`` must be at least 1.")
            if min(self.checkpoint_interval, self.eval_episodes, self.demo_count) < 0:
                raise ValueError("``checkpoint_interval``, ``eval_episodes`` and ``demo_count`` cannot be negative.")
            for name in SECTIONS:
                getattr(self, name).validate()
            self.arm_model()
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(str(e)) from e
        return self

    def arm_model(self):
        """``(ArmModel, JointDynamicsParams)`` described by ``arm``."""
        return arm_config_from_dict(self.arm)

    def env_kwargs(self):
        model, params = self.arm_model()
        return {
            "arm": model,
            "dynamics": params,
            "reward": self.reward,
            "episode": self.episode,
            "dr": self.dr,
            "ik": self.ik,
            "contact": self.contact,
        }

    def to_dict(self):
        return _plain(dataclasses.asdict(self))

    def override(self, **values):
        """Copy with every non-``None`` value replaced; flags given on the command line win over the file."""
        changes = {k: v for k, v in values.items() if v is not None}
        unknown = set(changes) - {f.name for f in dataclasses.fields(self)}
        if unknown:
            raise ConfigError(f"Unknown override keys: {sorted(unknown)}.")
        return dataclasses.replace(self, **changes).validate()

    @classmethod
    def from_dict(cls, data):
        data = dict(data or {})
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(data) - set(known)
        if unknown:
            raise ConfigError(f"Unknown config keys: {sorted(unknown)}.")
        kwargs = {}
        for key, value in data.items():
            if key in SECTIONS:
                kwargs[key] = _section(SECTIONS[key], value, key)
            elif key == "arm":
                if value is not None and not isinstance(value, dict):
                    raise ConfigError("``arm`` must be a mapping.")
                kwargs[key] = value
            else:
                kwargs[key] = _coerce(key, value, known[key].default)
        return cls(**kwargs).validate()


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def _tuples(value):
    if isinstance(value, (list, tuple)):
        return tuple(_tuples(v) for v in value)
    return value


def _coerce(name, value, default):
    """Checks ``value`` against the type of ``default`` and converts sequences to tuples."""
    if default is None or default is dataclasses.MISSING:
        return _tuples(value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"``{name}`` must be a boolean, got {value!r}.")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"``{name}`` must be an integer, got {value!r}.")
        return value
    if isinstance(default, float):
        if isinstance(value, str):
            # YAML 1.1 reads exponents without a dot (1e-3) as strings
            try:
                value = float(value)
            except ValueError:
                pass
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"``{name}`` must be a number, got {value!r}.")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"``{name}`` must be a string, got {value!r}.")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"``{name}`` must be a sequence, got {value!r}.")
        return _tuples(value)
    return value


def _section(cls, data, section):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"Section ``{section}`` must be a mapping.")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"Unknown keys in ``{section}``: {sorted(unknown)}.")
    kwargs = {}
    for key, value in data.items():
        f = fields[key]
        default = f.default_factory() if f.default is dataclasses.MISSING else f.default
        kwargs[key] = _coerce(f"{section}.{key}", value, default)
    return cls(**kwargs)


def load_config(path=None):
    """Reads an :class:`ExperimentConfig` from YAML; without ``path`` returns the defaults.

    :raises ConfigError: unknown keys, wrong types or invalid values
    """
    if path is None:
        return ExperimentConfig().validate()
    with open(path) as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(f"Cannot parse {path}: {e}") from e
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a mapping at the top level.")
    config = ExperimentConfig.from_dict(data)
    log.debug("loaded config from %s", path)
    return config


def dump_config(config, path=None):
    """YAML text of ``config``; also written to ``path`` when given."""
    text = yaml.safe_dump(config.to_dict(), sort_keys=False)
    if path is not None:
        with open(path, "w") as f:
            f.write(text)
    return text


def config_hash(config):
    """SHA-256 of the canonical (key-sorted) YAML form."""
    canonical = yaml.safe_dump(config.to_dict(), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()
