import copy
import logging
from dataclasses import dataclass, field

import numpy as np
import torch

from pushtorch import functional as PF

log = logging.getLogger(__name__)

dtype = torch.float


class PpoUpdateError(RuntimeError):
    """Raised when a PPO loss becomes non-finite. ``diagnostics`` summarizes the offending minibatch."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class PpoConfig:
    """Clipped-surrogate PPO settings.

    :param clip_eps: Ratio clip range, defaults to ``0.2``
    :type clip_eps: float, optional

    :param gamma: Discount, defaults to ``0.99``
    :type gamma: float, optional

    :param lam: GAE λ, defaults to ``0.95``
    :type lam: float, optional

    :param epochs: Passes over each batch, defaults to ``3``
    :type epochs: int, optional

    :param minibatch_size: Samples per gradient step, defaults to ``256``
    :type minibatch_size: int, optional

    :param lr: Adam learning rate, defaults to ``3e-4``
    :type lr: float, optional

    :param entropy_coef: Entropy bonus weight, defaults to ``0.005``
    :type entropy_coef: float, optional

    :param value_coef: Value loss weight, defaults to ``0.5``
    :type value_coef: float, optional

    :param max_grad_norm: Gradient norm clip, defaults to ``1.0``
    :type max_grad_norm: float, optional
    """

    clip_eps: float = 0.2
    gamma: float = 0.99
    lam: float = 0.95
    epochs: int = 3
    minibatch_size: int = 256
    lr: float = 3e-4
    entropy_coef: float = 0.005
    value_coef: float = 0.5
    max_grad_norm: float = 1.0

    def validate(self):
        if not 0 < self.clip_eps < 1:
            raise ValueError(f"``clip_eps`` [{self.clip_eps}] must be between (0, 1).")
        if not (0 <= self.gamma <= 1 and 0 <= self.lam <= 1):
            raise ValueError("``gamma`` and ``lam`` must be between [0, 1].")
        if self.epochs < 1 or self.minibatch_size < 1:
            raise ValueError("``epochs`` and ``minibatch_size`` must be at least 1.")
        if self.lr <= 0 or self.max_grad_norm <= 0:
            raise ValueError("``lr`` and ``max_grad_norm`` must be positive.")
        return self


def gae(rewards, values, dones, gamma, lam, bootstrap_value=0.0):
    """Generalized advantage estimation along the first axis.

    :math:`δ_t = r_t + γ v_{t+1}(1 - d_t) - v_t` and :math:`A_t = δ_t + γλ(1 - d_t) A_{t+1}`, with
    ``bootstrap_value`` standing in for :math:`v_T` after a truncated tail.

    Example::

        from pushtorch.ppo import gae

        advantages, returns = gae([1.0], [0.0], [1.0], gamma=0.99, lam=0.95)
        print(advantages)
        >>> [1.]

    :return: advantages and returns (``advantages + values``)
    :rtype: tuple of numpy.ndarray
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if not rewards.shape == values.shape == dones.shape:
        raise ValueError(
            f"``rewards`` {rewards.shape}, ``values`` {values.shape} and ``dones`` {dones.shape} must match."
        )
    advantages = np.zeros_like(rewards)
    next_value = np.broadcast_to(np.asarray(bootstrap_value, dtype=np.float64), rewards.shape[1:])
    last = np.zeros(rewards.shape[1:])
    for t in reversed(range(len(rewards))):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        last = delta + gamma * lam * nonterminal * last
        advantages[t] = last
        next_value = values[t]
    return advantages, advantages + values


def normalize_advantages(advantages):
    """Shift to zero mean and scale to unit (population) standard deviation; constant batches become zeros."""
    advantages = advantages - advantages.mean()
    std = advantages.std(unbiased=False) if advantages.numel() > 1 else advantages.new_tensor(0.0)
    if std > 1e-12:
        advantages = advantages / std
    return advantages


@dataclass
class RolloutBatch:
    """Flat batch of transitions ready for a PPO update."""

    observations: torch.Tensor
    raw_actions: torch.Tensor
    log_probs: torch.Tensor
    rewards: torch.Tensor
    values: torch.Tensor
    dones: torch.Tensor
    advantages: torch.Tensor
    returns: torch.Tensor

    def __post_init__(self):
        if not torch.all(torch.isfinite(self.advantages)):
            raise ValueError("``advantages`` must be finite.")

    def __len__(self):
        return self.observations.size(0)

    @classmethod
    def from_arrays(cls, observations, raw_actions, log_probs, rewards, values, dones, advantages, returns):
        def t(x):
            return torch.as_tensor(np.asarray(x), dtype=dtype)

        return cls(
            t(observations),
            t(raw_actions),
            t(log_probs),
            t(rewards),
            t(values),
            t(dones),
            t(advantages),
            t(returns),
        )


@dataclass
class PpoStats:
    policy_loss: list = field(default_factory=list)
    value_loss: list = field(default_factory=list)
    entropy: list = field(default_factory=list)
    approx_kl: list = field(default_factory=list)
    clip_fraction: list = field(default_factory=list)

    def mean(self, name):
        values = getattr(self, name)
        return float(np.mean(values)) if values else float("nan")


def ppo_update(batch, policy, value_fn, optimizer, config, generator=None, normalize=True):
    """Runs ``config.epochs`` passes of minibatch PPO over ``batch``.

    The loss is ``clip_loss + value_coef * value_mse - entropy_coef * entropy``. Gradients of both networks are
    clipped jointly to ``max_grad_norm``. ``policy.evaluate(obs, raw)`` must return log-probabilities
    and entropies.

    Example::

        optimizer = torch.optim.Adam(list(policy.parameters()) + list(value_fn.parameters()), lr=3e-4)
        stats = ppo_update(batch, policy, value_fn, optimizer, PpoConfig())

    :return: per-epoch averages of the losses, entropy, approximate KL and clip fraction
    :rtype: pushtorch.ppo.PpoStats

    :raises PpoUpdateError: a loss becomes non-finite; the networks and the optimizer are restored to their state
        before the update
    """
    config.validate()
    if len(batch) == 0:
        return PpoStats()
    loss_fn = PF.ppo_clip_loss(config.clip_eps)
    value_loss_fn = PF.value_loss()
    advantages = normalize_advantages(batch.advantages) if normalize else batch.advantages
    params = [p for group in optimizer.param_groups for p in group["params"]]
    modules = [m for m in (policy, value_fn) if m is not None]
    snapshot = copy.deepcopy([m.state_dict() for m in modules]), copy.deepcopy(optimizer.state_dict())
    stats = PpoStats()
    n = len(batch)
    for epoch in range(config.epochs):
        order = torch.randperm(n, generator=generator)
        sums = np.zeros(5)
        count = 0
        for start in range(0, n, config.minibatch_size):
            idx = order[start : start + config.minibatch_size]
            obs, raw = batch.observations[idx], batch.raw_actions[idx]
            log_probs, entropy = policy.evaluate(obs, raw)
            old_log_probs, adv = batch.log_probs[idx], advantages[idx]
            policy_loss = loss_fn(log_probs, old_log_probs, adv)
            if value_fn is not None:
                v_loss = value_loss_fn(value_fn(obs), batch.returns[idx])
            else:
                v_loss = policy_loss.new_zeros(())
            entropy = entropy.mean()
            loss = policy_loss + config.value_coef * v_loss - config.entropy_coef * entropy
            if not torch.isfinite(loss):
                diagnostics = {
                    "epoch": epoch,
                    "policy_loss": float(policy_loss),
                    "value_loss": float(v_loss),
                    "entropy": float(entropy),
                    "advantage_range": (float(adv.min()), float(adv.max())),
                    "log_prob_range": (float(log_probs.min()), float(log_probs.max())),
                    "batch_size": int(idx.numel()),
                }
                for module, state in zip(modules, snapshot[0]):
                    module.load_state_dict(state)
                optimizer.load_state_dict(snapshot[1])
                raise PpoUpdateError("Non-finite PPO loss, update aborted.", diagnostics)
            optimizer.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(params, config.max_grad_norm)
            optimizer.step()

            with torch.no_grad():
                log_ratio = log_probs - old_log_probs
                approx_kl = ((log_ratio.exp() - 1) - log_ratio).mean()
                clip_frac = loss_fn.clip_fraction(log_probs, old_log_probs)
            sums += np.array([float(policy_loss), float(v_loss), float(entropy), float(approx_kl), float(clip_frac)])
            count += 1
        means = sums / max(count, 1)
        stats.policy_loss.append(means[0])
        stats.value_loss.append(means[1])
        stats.entropy.append(means[2])
        stats.approx_kl.append(means[3])
        stats.clip_fraction.append(means[4])
    log.debug(
        "ppo update on %d samples: policy_loss=%.4f value_loss=%.4f kl=%.5f",
        n,
        stats.mean("policy_loss"),
        stats.mean("value_loss"),
        stats.mean("approx_kl"),
    )
    return stats
