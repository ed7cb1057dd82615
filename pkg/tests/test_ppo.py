"""Tests for `pushtorch.ppo` module."""

import math

import numpy as np
import pytest
import torch
from torch.distributions import Normal

from pushtorch.ppo import PpoConfig, PpoStats, PpoUpdateError, RolloutBatch, gae, normalize_advantages, ppo_update
from tests.conftest import Net


class Bandit(torch.nn.Module):
    """Unit-variance Gaussian over one scalar action."""

    def __init__(self):
        super().__init__()
        self.mu = torch.nn.Parameter(torch.zeros(1))

    def evaluate(self, obs, raw):
        dist = Normal(self.mu.expand(obs.size(0)), torch.ones(obs.size(0)))
        return dist.log_prob(raw[:, 0]), dist.entropy()


def bandit_batch(policy, n, generator):
    with torch.no_grad():
        raw = policy.mu + torch.randn(n, 1, generator=generator)
        obs = torch.zeros(n, 1)
        log_probs, _ = policy.evaluate(obs, raw)
    rewards = raw[:, 0].numpy()
    zeros = np.zeros(n)
    return RolloutBatch.from_arrays(obs, raw, log_probs, rewards, zeros, np.ones(n), rewards, rewards)


def test_gae_single_step():
    advantages, returns = gae([1.0], [0.0], [1.0], gamma=0.99, lam=0.95)
    np.testing.assert_allclose(advantages, [1.0])
    np.testing.assert_allclose(returns, [1.0])


def test_gae_lambda_one_is_monte_carlo(rng):
    gamma, bootstrap = 0.99, 0.7
    rewards, values = rng.normal(size=(2, 20))
    dones = (rng.random(20) < 0.2).astype(float)
    advantages, _ = gae(rewards, values, dones, gamma, 1.0, bootstrap)
    expected = np.zeros(20)
    g = bootstrap
    for t in reversed(range(20)):
        g = rewards[t] + gamma * (1.0 - dones[t]) * g
        expected[t] = g - values[t]
    np.testing.assert_allclose(advantages, expected, atol=1e-10)


def test_gae_lambda_zero_is_td(rng):
    rewards, values = rng.normal(size=(2, 5))
    dones = np.zeros(5)
    advantages, _ = gae(rewards, values, dones, 0.9, 0.0)
    next_values = np.append(values[1:], 0.0)
    np.testing.assert_allclose(advantages, rewards + 0.9 * next_values - values)


def test_gae_per_env_columns(rng):
    rewards, values = rng.normal(size=(2, 6, 3))
    dones = np.zeros((6, 3))
    advantages, _ = gae(rewards, values, dones, 0.99, 0.95)
    column, _ = gae(rewards[:, 1], values[:, 1], dones[:, 1], 0.99, 0.95)
    np.testing.assert_allclose(advantages[:, 1], column)


def test_gae_shape_mismatch():
    with pytest.raises(ValueError):
        gae([1.0, 2.0], [0.0], [0.0, 1.0], 0.99, 0.95)


def test_normalize_advantages():
    out = normalize_advantages(torch.tensor([1.0, 2.0, 3.0, 6.0]))
    assert float(out.mean()) == pytest.approx(0.0, abs=1e-6)
    assert float(out.std(unbiased=False)) == pytest.approx(1.0, rel=1e-5)
    assert torch.equal(normalize_advantages(torch.full((3,), 5.0)), torch.zeros(3))


def test_rollout_batch_rejects_non_finite():
    n = 3
    advantages = [0.0, math.nan, 1.0]
    with pytest.raises(ValueError):
        RolloutBatch.from_arrays(np.zeros((n, 1)), np.zeros((n, 1)), *(np.zeros(n),) * 4, advantages, np.zeros(n))


@pytest.mark.parametrize("kwargs", [dict(clip_eps=0.0), dict(gamma=1.5), dict(epochs=0), dict(lr=0.0)])
def test_ppo_config_validate(kwargs):
    with pytest.raises(ValueError):
        PpoConfig(**kwargs).validate()


def test_ppo_update_learns_bandit():
    generator = torch.Generator().manual_seed(0)
    policy = Bandit()
    optimizer = torch.optim.Adam(policy.parameters(), lr=0.05)
    config = PpoConfig(epochs=4, minibatch_size=64, entropy_coef=0.0)
    for _ in range(20):
        stats = ppo_update(bandit_batch(policy, 256, generator), policy, None, optimizer, config, generator)
    assert float(policy.mu) > 0.5
    assert len(stats.policy_loss) == config.epochs
    assert all(0.0 <= value <= 1.0 for value in stats.clip_fraction)


def test_ppo_update_empty_batch():
    empty = RolloutBatch.from_arrays(*(np.zeros((0, 1)),) * 2, *(np.zeros(0),) * 6)
    stats = ppo_update(empty, Bandit(), None, torch.optim.Adam(Bandit().parameters()), PpoConfig())
    assert isinstance(stats, PpoStats)
    assert math.isnan(stats.mean("policy_loss"))


def test_ppo_update_non_finite_raises():
    net = Net()
    optimizer = torch.optim.Adam(net.parameters(), lr=0.1)
    n = 4
    batch = RolloutBatch.from_arrays(
        np.zeros((n, 2)), np.zeros((n, 1)), np.zeros(n), np.zeros(n), np.zeros(n), np.ones(n), np.ones(n), np.ones(n)
    )
    with pytest.raises(PpoUpdateError) as excinfo:
        ppo_update(batch, net, None, optimizer, PpoConfig(minibatch_size=n))
    assert excinfo.value.diagnostics["batch_size"] == n
    assert float(net.weight) == 1.0


def test_ppo_update_failure_restores_earlier_steps():
    net = Net(finite_calls=1)
    optimizer = torch.optim.Adam(net.parameters(), lr=0.1)
    zeros = np.zeros(2)
    batch = RolloutBatch.from_arrays(
        np.zeros((2, 2)), np.zeros((2, 1)), np.ones(2), zeros, zeros, np.ones(2), np.array([1.0, -1.0]), zeros
    )
    with pytest.raises(PpoUpdateError):
        ppo_update(batch, net, None, optimizer, PpoConfig(minibatch_size=1, epochs=1))
    assert net.calls == 2
    assert float(net.weight) == 1.0
    assert optimizer.state_dict()["state"] == {}
