import math

import numpy as np
import pytest
import torch
import yaml

from pushtorch import Pose2
from pushtorch.arm import ArmModel, JointDynamicsParams
from pushtorch.env import DomainRandomizationConfig, EpisodeConfig, PushEnv, TaskInstance, domain_config
from pushtorch.policy import PolicyConfig


@pytest.fixture(scope="module")
def arm():
    return ArmModel()


@pytest.fixture(scope="module")
def dynamics():
    return JointDynamicsParams()


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def short_episode():
    return EpisodeConfig(horizon=2, max_steps=3)


@pytest.fixture
def card_task():
    """A card lying flat at x = 0.1 that the ``above`` placement reaches without collision."""
    cfg = domain_config("card")
    return TaskInstance(Pose2(0.1, cfg.half_extents[1], 0.0), Pose2(-0.05, cfg.half_extents[1], 0.0), cfg.terrain)


@pytest.fixture
def card_env(short_episode):
    return PushEnv("card", seed=0, episode=short_episode, dr=DomainRandomizationConfig(enabled=False))


@pytest.fixture
def small_policy_config():
    return PolicyConfig(hidden_sizes=(16,))


class Net(torch.nn.Module):
    """Placement policy stub whose outputs turn non-finite after ``finite_calls`` evaluations, for exercising
    update failures."""

    def __init__(self, finite_calls=0):
        super().__init__()
        self.weight = torch.nn.Parameter(torch.ones(1))
        self.finite_calls = finite_calls
        self.calls = 0

    def evaluate(self, obs, raw):
        self.calls += 1
        fill = 1.0 if self.calls <= self.finite_calls else math.nan
        log_prob = self.weight * torch.full((obs.size(0),), fill)
        return log_prob, torch.zeros(obs.size(0))


@pytest.fixture
def tiny_config_file(tmp_path):
    """A config small enough to train, evaluate and render in seconds."""
    data = {
        "domain": "card",
        "n_envs": 2,
        "iterations": 2,
        "out": str(tmp_path / "runs"),
        "checkpoint_interval": 1,
        "eval_episodes": 2,
        "demo_count": 4,
        "ablation_seeds": [0],
        "render_stride": 5,
        "episode": {"horizon": 2, "max_steps": 3},
        "policy": {"hidden_sizes": [16]},
        "ppo": {"minibatch_size": 8, "epochs": 1},
        "curriculum": {"window": 4},
        "sysid": {"n_traj": 2, "duration": 0.5},
        "cmaes": {"max_generations": 5},
        "distill": {"epochs": 2, "hidden_sizes": [16]},
    }
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.safe_dump(data))
    return path
