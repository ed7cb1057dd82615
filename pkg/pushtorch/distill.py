import copy
import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn as nn
from tqdm import tqdm

from pushtorch import Pose2, utils
from pushtorch import functional as PF
from pushtorch.env import (
    EndEffectorPlacement,
    Keypoints,
    PushEnv,
    object_keypoints,
    pre_observation,
    project_keypoints,
)
from pushtorch.policy import mlp
from pushtorch.trainer import apply_placement, evaluate

log = logging.getLogger(__name__)

dtype = torch.float

STUDENT_OBS_DIM = 16
LABEL_DIM = 5
MAX_WIDTH = 0.04


class DistillationError(RuntimeError):
    pass


def rotation_to_continuous(theta):
    """First column of the planar rotation matrix, ``(cos θ, sin θ)``."""
    return np.array([math.cos(theta), math.sin(theta)])


def continuous_to_rotation(v):
    """Heading of a 2-vector, normalized first.

    Example::

        from pushtorch.distill import continuous_to_rotation

        continuous_to_rotation([2.0, 0.0])
        >>> 0.0

    :raises ValueError: ``‖v‖ ≤ 1e-8``
    """
    v = np.asarray(v, dtype=float)
    norm = float(np.hypot(v[0], v[1]))
    if norm <= 1e-8:
        raise ValueError(f"Rotation vector norm [{norm}] must exceed 1e-8.")
    return math.atan2(v[1] / norm, v[0] / norm)


@dataclass
class DemoSample:
    """Noisy keypoints of the initial and goal object poses labelled with the executed flange pose and width."""

    u_o: Keypoints
    u_g: Keypoints
    pose: Pose2
    width: float

    def __post_init__(self):
        if not 0.0 <= self.width <= MAX_WIDTH:
            raise ValueError(f"``width`` [{self.width}] must be between [0, {MAX_WIDTH}].")

    def features(self):
        return np.concatenate([self.u_o.flatten(), self.u_g.flatten()]).astype(np.float32)

    def label(self):
        return np.concatenate([[self.pose.x, self.pose.y], rotation_to_continuous(self.pose.theta), [self.width]])

    def to_dict(self):
        return {
            "u_o": np.asarray(self.u_o.u).tolist(),
            "u_g": np.asarray(self.u_g.u).tolist(),
            "pose": self.pose.as_array().tolist(),
            "width": self.width,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(Keypoints(np.asarray(d["u_o"])), Keypoints(np.asarray(d["u_g"])), Pose2(*d["pose"]), d["width"])


@dataclass
class DistillConfig:
    """Student regression settings.

    ``loss_weights`` scale the squared errors of ``(x, y, cos, sin, width)``.
    """

    epochs: int = 200
    batch_size: int = 256
    lr: float = 1e-3
    lr_decay: bool = True
    valid_fraction: float = 0.1
    loss_weights: tuple = (1.0, 1.0, 0.1, 0.1, 10.0)
    hidden_sizes: tuple = (256, 256)
    seed: int = 0

    def validate(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("``epochs`` and ``batch_size`` must be at least 1.")
        if self.lr <= 0:
            raise ValueError("``lr`` must be positive.")
        if len(self.loss_weights) != LABEL_DIM:
            raise ValueError(f"``loss_weights`` needs {LABEL_DIM} entries.")
        return self


def keypoint_observation(initial, goal, half_extents, workspace, rng=None, noise=0.0):
    """Projected corners of the initial and goal poses, each perturbed by ``N(0, noise)``."""
    keypoints = []
    for pose in (initial, goal):
        u = project_keypoints(object_keypoints(pose, half_extents), workspace)
        if noise > 0:
            u = u + rng.normal(0.0, noise, u.shape)
        keypoints.append(Keypoints(u))
    return keypoints


def student_observation(env, task):
    """Student input for a freshly reset environment, with the environment's keypoint noise."""
    u_o, u_g = keypoint_observation(
        task.initial,
        task.goal,
        env.domain_cfg.half_extents,
        env.world.terrain.workspace,
        env.rng,
        env.dr.keypoint_noise,
    )
    return np.concatenate([u_o.flatten(), u_g.flatten()]).astype(np.float32)


def collect_demos(expert, domain, n, rng, deterministic=True, generator=None, progress=False, **env_kwargs):
    """Runs ``expert`` placements and keeps the feasible ones as labelled samples.

    Labels are the flange pose and width the environment executed; only the inputs carry keypoint noise, drawn
    from a stream split off ``rng`` so the sequence of tasks does not depend on the noise level. Gives up after
    ``20 * n`` placement attempts.

    :param expert: Placement policy with ``act``
    :type expert: pushtorch.policy.PreContactPolicy

    :param domain: Task family
    :type domain: str

    :param n: Number of samples
    :type n: int

    :param rng: Random generator for tasks and noise
    :type rng: numpy.random.Generator

    :return: Up to ``n`` samples
    :rtype: list of pushtorch.distill.DemoSample
    """
    if n < 0:
        raise ValueError("``n`` cannot be negative.")
    noise_rng = np.random.default_rng(rng.integers(2**32))
    env = PushEnv(domain, rng=rng, **env_kwargs)
    samples = []
    attempts = 0
    with tqdm(total=n, disable=not progress, desc="demos") as bar:
        while len(samples) < n and attempts < 20 * n:
            attempts += 1
            task = env.reset()
            obs = torch.as_tensor(pre_observation(task), dtype=dtype).unsqueeze(0)
            actions, _, _ = expert.act(obs, deterministic=deterministic, generator=generator)
            result = apply_placement(env, actions[0])
            if not result.feasible:
                continue
            u_o, u_g = keypoint_observation(
                task.initial,
                task.goal,
                env.domain_cfg.half_extents,
                env.world.terrain.workspace,
                noise_rng,
                env.dr.keypoint_noise,
            )
            placement = result.placement
            samples.append(DemoSample(u_o, u_g, placement.pose, placement.width))
            bar.update(1)
    if len(samples) < n:
        log.warning("collected %d of %d demonstrations in %d attempts", len(samples), n, attempts)
    return samples


def save_demos(path, samples):
    utils.write_jsonl(path, [s.to_dict() for s in samples])


def load_demos(path):
    return [DemoSample.from_dict(d) for d in utils.read_jsonl(path)]


class StudentPolicy(nn.Module):
    """Placement from keypoints only: 16 normalized coordinates to ``(x, y, cos, sin, width)``.

    Example::

        from pushtorch.distill import StudentPolicy

        student = StudentPolicy()
        placements, _, _ = student.act(torch.rand(1, 16))

    """

    def __init__(self, hidden_sizes=(256, 256)):
        super().__init__()
        self.hidden_sizes = tuple(hidden_sizes)
        self.net = mlp(STUDENT_OBS_DIM, self.hidden_sizes, LABEL_DIM)

    def forward(self, obs):
        return self.net(obs)

    @torch.no_grad()
    def act(self, obs, deterministic=True, generator=None):
        out = self(torch.as_tensor(obs, dtype=dtype).reshape(-1, STUDENT_OBS_DIM)).double().numpy()
        placements = []
        for x, y, c, s, width in out:
            theta = continuous_to_rotation((c, s))
            placements.append(EndEffectorPlacement(Pose2(x, y, theta), float(np.clip(width, 0.0, MAX_WIDTH))))
        return placements, None, None


def _dataset_tensors(samples):
    features = torch.as_tensor(np.stack([s.features() for s in samples]), dtype=dtype)
    labels = torch.as_tensor(np.stack([s.label() for s in samples]), dtype=dtype)
    return features, labels


def train_student(dataset, config=None, progress=False):
    """Regresses a :class:`StudentPolicy` on ``dataset`` with minibatch Adam and a weighted MSE.

    Holds out ``valid_fraction`` of the samples and returns the parameters of the best validation epoch. The
    history starts with the untrained loss at epoch ``0``.

    :return: The student and one row per epoch with ``train_loss`` and ``valid_loss``
    :rtype: tuple of (pushtorch.distill.StudentPolicy, list of dict)

    :raises DistillationError: ``dataset`` is empty
    """
    config = (config or DistillConfig()).validate()
    if len(dataset) == 0:
        raise DistillationError("Cannot train a student on an empty dataset.")
    torch.manual_seed(config.seed)
    generator = torch.Generator().manual_seed(config.seed)
    features, labels = _dataset_tensors(dataset)
    train_idx, valid_idx = utils.valid_split(len(dataset), config.valid_fraction, config.seed)
    if len(valid_idx) == 0:
        valid_idx = train_idx
    x_train, y_train = features[train_idx], labels[train_idx]
    x_valid, y_valid = features[valid_idx], labels[valid_idx]

    student = StudentPolicy(config.hidden_sizes)
    loss_fn = PF.weighted_mse_loss(config.loss_weights)
    optimizer = torch.optim.Adam(student.parameters(), lr=config.lr)
    steps_per_epoch = math.ceil(len(x_train) / config.batch_size)
    scheduler = None
    if config.lr_decay:
        scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(optimizer, T_max=config.epochs * steps_per_epoch)

    def valid_loss():
        with torch.no_grad():
            return float(loss_fn(student(x_valid), y_valid))

    best = valid_loss()
    best_state = copy.deepcopy(student.state_dict())
    history = [{"epoch": 0, "train_loss": float("nan"), "valid_loss": best}]
    for epoch in tqdm(range(1, config.epochs + 1), disable=not progress, desc="distill"):
        order = torch.randperm(len(x_train), generator=generator)
        total, diverged = 0.0, False
        last_state = copy.deepcopy(student.state_dict())
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            loss = loss_fn(student(x_train[idx]), y_train[idx])
            if not torch.isfinite(loss):
                diverged = True
                break
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            if scheduler is not None:
                scheduler.step()
            total += float(loss) * len(idx)
        current = valid_loss() if not diverged else float("nan")
        if diverged or not math.isfinite(current):
            log.error("student training diverged at epoch %d, keeping the last finite parameters", epoch)
            student.load_state_dict(last_state)
            break
        history.append({"epoch": epoch, "train_loss": total / len(x_train), "valid_loss": current})
        if current <= best:
            best = current
            best_state = copy.deepcopy(student.state_dict())
    student.load_state_dict(best_state)
    log.info("student trained on %d samples, best validation loss %.3g", len(x_train), best)
    return student, history


def placement_errors(student, dataset):
    """Position (m) and heading (rad) errors of the student's placements against the labels."""
    features, _ = _dataset_tensors(dataset)
    placements, _, _ = student.act(features)
    position = np.array([np.hypot(p.pose.x - s.pose.x, p.pose.y - s.pose.y) for p, s in zip(placements, dataset)])
    heading = np.array([abs(Pose2(0, 0, p.pose.theta - s.pose.theta).theta) for p, s in zip(placements, dataset)])
    return position, heading


def eval_student_closed_loop(student, post_policy, domain, n_episodes, seed=0, zeta=None, progress=False, **env_kwargs):
    """Student places the arm from noisy keypoints and ``post_policy`` finishes the episode.

    :return: Success statistics; infeasible student placements count as failures
    :rtype: pushtorch.trainer.EvalReport
    """
    return evaluate(
        student,
        post_policy,
        domain,
        n_episodes,
        seed=seed,
        zeta=zeta,
        pre_obs_fn=student_observation,
        progress=progress,
        **env_kwargs,
    )


def save_student(path, student, config=None, history=None):
    utils.save_checkpoint(
        path,
        {
            "student": student.state_dict(),
            "hidden_sizes": student.hidden_sizes,
            "config": asdict(config) if config is not None else None,
            "history": history or [],
        },
    )


def load_student(path):
    payload = utils.load_checkpoint(path)
    student = StudentPolicy(payload["hidden_sizes"])
    student.load_state_dict(payload["student"])
    return student
