import math

import numpy as np
import torch
import torch.nn as nn

from pushtorch import wrap_angle

dtype = torch.float


def keypoint_term(object_points, goal_points, c1):
    """Bounded keypoint attraction :math:`\\sum_i C_1 / (\\lVert x_o^i - x_g^i \\rVert + C_1)`.

    Each summand lies in ``(0, 1]`` and equals 1 only when the keypoint sits on its goal.

    Example::

        import pushtorch.functional as PF

        goal = np.zeros((4, 2))
        obj = goal + np.array([0.02, 0.0])
        PF.keypoint_term(obj, goal, 0.02)
        >>> 2.0

    """
    dist = np.linalg.norm(np.asarray(object_points) - np.asarray(goal_points), axis=-1)
    return float(np.sum(c1 / (dist + c1)))


def kp_penalty(kp, scale):
    """:math:`-\\text{scale} \\cdot \\lVert k_p \\rVert_2`."""
    return -scale * float(np.linalg.norm(kp))


def pose_errors(pose, goal):
    """Position distance (m) and absolute wrapped heading difference (rad) between two poses."""
    d = math.hypot(pose.x - goal.x, pose.y - goal.y)
    return d, abs(wrap_angle(pose.theta - goal.theta))


def success_indicator(d, theta, d_bar, theta_bar, match_orientation=True):
    """``d < d_bar`` and, when ``match_orientation``, ``theta < theta_bar``."""
    if not d < d_bar:
        return False
    return theta < theta_bar if match_orientation else True


def proximity_term(left_tip, right_tip, object_center, c3, eps):
    """:math:`C_3 / \\max(\\lVert (p_{lf} + p_{rf})/2 - p_{obj} \\rVert, ε)`."""
    mid = (np.asarray(left_tip) + np.asarray(right_tip)) / 2
    return c3 / max(float(np.linalg.norm(mid - np.asarray(object_center))), eps)


class LossFunctions:
    def _check_shapes(self, *tensors):
        shape = tensors[0].shape
        for t in tensors[1:]:
            if t.shape != shape:
                raise ValueError(f"Loss inputs must share one shape, got {shape} and {t.shape}.")


class ppo_clip_loss(LossFunctions):
    """Clipped surrogate loss.
    The probability ratio :math:`r = \\exp(\\log π - \\log π_{old})` is clipped to :math:`[1-ε, 1+ε]` and the
    pessimistic minimum of the clipped and unclipped advantage-weighted ratios is maximized. The returned value
    is the negated surrogate, so it can be minimized directly.

    Example::

        import pushtorch.functional as PF

        loss_fn = PF.ppo_clip_loss(clip_eps=0.2)
        loss = loss_fn(log_probs, old_log_probs, advantages)

    :param clip_eps: Ratio clip range ε, must be in ``(0, 1)``. Defaults to ``0.2``
    :type clip_eps: float, optional

    """

    def __init__(self, clip_eps=0.2):
        if not 0 < clip_eps < 1:
            raise ValueError(f"``clip_eps`` [{clip_eps}] must be between (0, 1).")
        self.clip_eps = clip_eps
        self.__name__ = "ppo_clip_loss"

    def ratio(self, log_probs, old_log_probs):
        return torch.exp(log_probs - old_log_probs)

    def clip_fraction(self, log_probs, old_log_probs):
        ratio = self.ratio(log_probs, old_log_probs)
        return ((ratio - 1).abs() > self.clip_eps).to(dtype).mean()

    def __call__(self, log_probs, old_log_probs, advantages):
        self._check_shapes(log_probs, old_log_probs, advantages)
        ratio = self.ratio(log_probs, old_log_probs)
        unclipped = ratio * advantages
        clipped = torch.clamp(ratio, 1 - self.clip_eps, 1 + self.clip_eps) * advantages
        return -torch.min(unclipped, clipped).mean()


class value_loss(LossFunctions):
    """Mean Square Error between value predictions and return targets.

    Example::

        loss_fn = PF.value_loss()
        loss = loss_fn(values, returns)

    """

    def __init__(self):
        self.__name__ = "value_loss"

    def __call__(self, values, returns):
        self._check_shapes(values, returns)
        return nn.functional.mse_loss(values, returns)


class weighted_mse_loss(LossFunctions):
    """Per-component weighted Mean Square Error.
    Each output column is squared-error averaged over the batch and scaled by its weight before summing,
    so that components of different magnitude (meters, unit vectors, millimeter widths) contribute evenly.

    Example::

        loss_fn = PF.weighted_mse_loss(weights=(1.0, 1.0, 0.1, 0.1, 10.0))
        loss = loss_fn(predictions, labels)

    :param weights: One non-negative weight per output column
    :type weights: sequence of float

    """

    def __init__(self, weights):
        weights = torch.as_tensor(weights, dtype=dtype)
        if torch.any(weights < 0):
            raise ValueError("``weights`` cannot be negative.")
        self.weights = weights
        self.__name__ = "weighted_mse_loss"

    def __call__(self, predictions, targets):
        self._check_shapes(predictions, targets)
        if predictions.size(-1) != self.weights.numel():
            raise ValueError(
                f"``weights`` has {self.weights.numel()} entries but predictions have {predictions.size(-1)} columns."
            )
        per_column = ((predictions - targets) ** 2).reshape(-1, predictions.size(-1)).mean(0)
        return (per_column * self.weights.to(predictions.device)).sum()
