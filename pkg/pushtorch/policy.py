import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.distributions import Categorical, Normal

from pushtorch import Pose2
from pushtorch.arm import CF_LABELS
from pushtorch.env import (
    POST_OBS_DIM,
    PRE_OBS_DIM,
    EndEffectorPlacement,
    PostContactAction,
    PreContactAction,
)

dtype = torch.float

# ranges of the squashed pre-contact outputs: c_o, approach angle, width
PRE_LOW = (0.0, -math.pi, 0.0)
PRE_HIGH = (1.0, math.pi, 0.04)


@dataclass
class PolicyConfig:
    """Network sizes and output scaling.

    :param hidden_sizes: Hidden layer widths of every trunk, defaults to ``(256, 256)``
    :type hidden_sizes: tuple, optional

    :param init_log_std: Initial state-independent log standard deviation, defaults to ``-0.5``
    :type init_log_std: float, optional

    :param kp_scale: ``kp = kp_scale * softplus(u)``, defaults to ``50.0``
    :type kp_scale: float, optional
    """

    hidden_sizes: tuple = (256, 256)
    init_log_std: float = -0.5
    kp_scale: float = 50.0

    def validate(self):
        if not self.hidden_sizes or min(self.hidden_sizes) < 1:
            raise ValueError("``hidden_sizes`` must list positive widths.")
        if self.kp_scale <= 0:
            raise ValueError("``kp_scale`` must be positive.")
        return self


def mlp(in_features, hidden_sizes, out_features=None, activation=nn.Tanh):
    """Fully-connected tanh network; without ``out_features`` the last hidden activation is the output."""
    layers = []
    width = in_features
    for size in hidden_sizes:
        layers += [nn.Linear(width, size), activation()]
        width = size
    if out_features is not None:
        layers.append(nn.Linear(width, out_features))
    return nn.Sequential(*layers)


def tanh_log_abs_det(u):
    """:math:`\\log(1 - \\tanh^2 u)` computed without cancellation."""
    return 2.0 * (math.log(2.0) - u - F.softplus(-2.0 * u))


def squash(u, low, high):
    return low + (high - low) * (torch.tanh(u) + 1.0) / 2.0


def _gaussian_sample(mean, std, generator):
    noise = torch.randn(mean.shape, generator=generator, dtype=mean.dtype)
    return mean + std * noise


class PreContactPolicy(nn.Module):
    """Contact-pairing policy: a categorical head over the gripper points and a tanh-squashed Gaussian over
    ``(c_o, approach angle, width)``.

    The raw action stored for training is ``(index, u_co, u_angle, u_width)`` with ``u`` the pre-squash sample.

    Example::

        from pushtorch.policy import PreContactPolicy

        pre = PreContactPolicy()
        actions, raw, log_prob = pre.act(torch.as_tensor(obs).unsqueeze(0))

    """

    def __init__(self, config=None):
        super().__init__()
        self.config = (config or PolicyConfig()).validate()
        hidden = self.config.hidden_sizes
        self.trunk = mlp(PRE_OBS_DIM, hidden)
        self.logits = nn.Linear(hidden[-1], len(CF_LABELS))
        self.mean = nn.Linear(hidden[-1], 3)
        self.log_std = nn.Parameter(torch.full((3,), self.config.init_log_std))
        self.register_buffer("low", torch.tensor(PRE_LOW, dtype=dtype))
        self.register_buffer("high", torch.tensor(PRE_HIGH, dtype=dtype))

    def forward(self, obs):
        h = self.trunk(obs)
        return self.logits(h), self.mean(h)

    def distribution(self, obs):
        logits, mean = self(obs)
        return Categorical(logits=logits), Normal(mean, self.log_std.exp().expand_as(mean))

    def _squash_log_det(self, u):
        return (torch.log((self.high - self.low) / 2.0) + tanh_log_abs_det(u)).sum(-1)

    @torch.no_grad()
    def act(self, obs, deterministic=False, generator=None):
        """Samples (or takes the mode of) the action distribution.

        :return: decoded actions, raw ``(B, 4)`` tensor and log-probabilities
        :rtype: tuple of (list of pushtorch.env.PreContactAction, torch.Tensor, torch.Tensor)
        """
        cat, normal = self.distribution(obs)
        if deterministic:
            index = cat.logits.argmax(-1)
            u = normal.mean
        else:
            index = torch.multinomial(cat.probs, 1, generator=generator).squeeze(-1)
            u = _gaussian_sample(normal.mean, normal.stddev, generator)
        raw = torch.cat([index.unsqueeze(-1).to(dtype), u], dim=-1)
        log_prob, _ = self.evaluate(obs, raw)
        return self.decode(raw), raw, log_prob

    def evaluate(self, obs, raw):
        """Log-probability and entropy of stored raw actions under the current parameters.

        The entropy is that of the pre-squash Gaussian plus the categorical, used only as a bonus.
        """
        cat, normal = self.distribution(obs)
        index, u = raw[..., 0].long(), raw[..., 1:]
        log_prob = cat.log_prob(index) + normal.log_prob(u).sum(-1) - self._squash_log_det(u)
        entropy = cat.entropy() + normal.entropy().sum(-1)
        return log_prob, entropy

    def decode(self, raw):
        values = squash(raw[..., 1:], self.low, self.high).cpu().numpy()
        indices = raw[..., 0].long().cpu().numpy()
        out = []
        for index, (c_o, angle, width) in zip(indices, values):
            out.append(PreContactAction(CF_LABELS[index], c_o, angle, float(np.clip(width, 0.0, 0.04))))
        return out


class PostContactPolicy(nn.Module):
    """Residual-and-gains policy with a state-independent diagonal Gaussian.

    Outputs are squashed per group: the residual through ``tanh`` to ``±ζ`` for the current curriculum
    limit, ``kp`` through ``kp_scale * softplus`` and ``rho`` through ``0.5 + softplus``.
    """

    def __init__(self, config=None, n_joints=3):
        super().__init__()
        self.config = (config or PolicyConfig()).validate()
        self.n_joints = n_joints
        hidden = self.config.hidden_sizes
        self.action_dim = 3 + 2 * n_joints
        self.trunk = mlp(POST_OBS_DIM, hidden)
        self.mean = nn.Linear(hidden[-1], self.action_dim)
        self.log_std = nn.Parameter(torch.full((self.action_dim,), self.config.init_log_std))

    def forward(self, obs):
        return self.mean(self.trunk(obs))

    def distribution(self, obs):
        mean = self(obs)
        return Normal(mean, self.log_std.exp().expand_as(mean))

    def _log_det(self, u, zeta=None):
        """Log-Jacobian of the squashing; the ``log ζ`` constant is added when ``zeta`` is given."""
        n = self.n_joints
        res, kp, rho = u[..., :3], u[..., 3 : 3 + n], u[..., 3 + n :]
        log_det = tanh_log_abs_det(res).sum(-1)
        log_det = log_det + (math.log(self.config.kp_scale) + F.logsigmoid(kp)).sum(-1)
        log_det = log_det + F.logsigmoid(rho).sum(-1)
        if zeta is not None:
            zeta = torch.as_tensor(zeta, dtype=u.dtype)
            log_det = log_det + 2 * torch.log(zeta[..., 0]) + torch.log(zeta[..., 1])
        return log_det

    @torch.no_grad()
    def act(self, obs, zeta, deterministic=False, generator=None):
        normal = self.distribution(obs)
        u = normal.mean if deterministic else _gaussian_sample(normal.mean, normal.stddev, generator)
        log_prob, _ = self.evaluate(obs, u)
        return self.decode(u, zeta), u, log_prob

    def evaluate(self, obs, raw, zeta=None):
        normal = self.distribution(obs)
        log_prob = normal.log_prob(raw).sum(-1) - self._log_det(raw, zeta)
        return log_prob, normal.entropy().sum(-1)

    def squash(self, raw, zeta):
        """Bounded action values ``(B, 9)`` for raw pre-squash values."""
        n = self.n_joints
        zeta = torch.as_tensor(zeta, dtype=raw.dtype)
        scale = torch.stack([zeta[..., 0], zeta[..., 0], zeta[..., 1]], dim=-1)
        res = torch.tanh(raw[..., :3]) * scale
        kp = self.config.kp_scale * F.softplus(raw[..., 3 : 3 + n])
        rho = 0.5 + F.softplus(raw[..., 3 + n :])
        return torch.cat([res, kp, rho], dim=-1)

    def decode(self, raw, zeta):
        values = self.squash(raw, zeta).cpu().double().numpy()
        return [PostContactAction.from_array(v) for v in values]


class ValueFunction(nn.Module):
    def __init__(self, obs_dim, config=None):
        super().__init__()
        config = config or PolicyConfig()
        self.net = mlp(obs_dim, config.hidden_sizes, 1)

    def forward(self, obs):
        return self.net(obs).squeeze(-1)


class FixedPlacementPolicy:
    """Non-learning placement used when no pre-contact policy is trained.

    ``"above"`` points the gripper down and holds the fingertips ``clearance`` above the object top;
    ``"at-right"`` points the gripper left with the fingertips ``clearance`` away from the object's right side.
    Reads the object pose from the first four pre-contact features.
    """

    MODES = ("above", "at-right")

    def __init__(self, mode, half_extents, gripper, width=0.02, clearance=0.005):
        if mode not in self.MODES:
            raise ValueError(f"``mode`` [{mode}] must be one of {self.MODES}.")
        self.mode = mode
        self.half_extents = half_extents
        self.gripper = gripper
        self.width = width
        self.clearance = clearance

    def act(self, obs, deterministic=True, generator=None):
        obs = np.asarray(obs, dtype=float).reshape(-1, PRE_OBS_DIM)
        tool = self.gripper.palm_depth + self.gripper.finger_length
        out = []
        for x, y, c, s in obs[:, :4]:
            hx, hy = self.half_extents
            ex, ey = abs(c) * hx + abs(s) * hy, abs(s) * hx + abs(c) * hy
            if self.mode == "above":
                pose = Pose2(x, y + ey + self.clearance + tool, -math.pi / 2)
            else:
                pose = Pose2(x + ex + self.clearance + tool, y, math.pi)
            out.append(EndEffectorPlacement(pose, self.width))
        return out, None, None
