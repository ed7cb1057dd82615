import logging
from dataclasses import dataclass, field

import numpy as np
import torch
from tqdm import tqdm

from pushtorch import utils
from pushtorch.curriculum import JointRangeState, narrow_joint_range
from pushtorch.env import (
    INFEASIBLE,
    POST_OBS_DIM,
    PRE_OBS_DIM,
    RUNNING,
    SUCCESS,
    EndEffectorPlacement,
    PushEnv,
    pre_observation,
)
from pushtorch.ppo import PpoConfig, RolloutBatch, gae, ppo_update
from pushtorch.policy import ValueFunction

log = logging.getLogger(__name__)

dtype = torch.float

METRIC_COLUMNS = [
    "iteration",
    "env_steps",
    "success_rate",
    "mean_reward",
    "zeta_pos",
    "zeta_rot",
    "reductions_done",
    "violation_rate",
    "episodes",
    "infeasible_rate",
    "policy_loss",
    "value_loss",
    "dr_active",
]


def apply_placement(env, action):
    """Routes a contact-pairing action or a direct flange placement to the environment."""
    if isinstance(action, EndEffectorPlacement):
        return env.place_end_effector(action.pose, action.width)
    return env.apply_pre_contact(action)


def _as_obs(rows):
    return torch.as_tensor(np.stack(rows), dtype=dtype)


@dataclass
class _Slot:
    """Per-environment bookkeeping between policy steps."""

    placed: bool = False
    obs: np.ndarray = None
    pre_sample: tuple = None
    transitions: list = field(default_factory=list)


class Trainer:
    """Joint training of the placement policy and the post-contact policy.

    One iteration advances every environment by ``horizon`` policy steps, then runs a PPO update of the
    post-contact policy on the collected transitions and a single-step PPO update of the placement policy on
    the episodes that ended. Each placement is credited with ``c4`` if infeasible and otherwise with the
    post-contact reward sum of its episode.

    Example::

        from pushtorch.env import VecEnv
        from pushtorch.curriculum import CurriculumState
        from pushtorch.policy import PreContactPolicy, PostContactPolicy
        from pushtorch.trainer import Trainer

        envs = VecEnv("card", n_envs=8, seed=0)
        trainer = Trainer(envs, PreContactPolicy(), PostContactPolicy(), CurriculumState(), seed=0)
        metrics = trainer.run(10)

    :param envs: Environments
    :type envs: pushtorch.env.VecEnv

    :param pre: Placement policy, learned (:class:`~pushtorch.policy.PreContactPolicy`) or scripted
    :type pre: object with ``act``

    :param post: Post-contact policy
    :type post: pushtorch.policy.PostContactPolicy

    :param curriculum: Residual-limit schedule
    :type curriculum: pushtorch.curriculum.CurriculumState

    :param ppo_config: PPO settings, defaults to :class:`~pushtorch.ppo.PpoConfig`
    :type ppo_config: pushtorch.ppo.PpoConfig, optional
    """

    def __init__(
        self,
        envs,
        pre,
        post,
        curriculum,
        ppo_config=None,
        seed=0,
        metrics_writer=None,
        episode_writer=None,
        progress=True,
    ):
        self.envs = envs
        self.pre = pre
        self.post = post
        self.curriculum = curriculum
        self.ppo_config = (ppo_config or PpoConfig()).validate()
        self.metrics_writer = metrics_writer
        self.episode_writer = episode_writer
        self.progress = progress
        self.generator = torch.Generator().manual_seed(seed)

        self.pre_trainable = isinstance(pre, torch.nn.Module)
        self.post_value = ValueFunction(POST_OBS_DIM, post.config)
        self.post_optimizer = torch.optim.Adam(
            list(post.parameters()) + list(self.post_value.parameters()), lr=self.ppo_config.lr
        )
        if self.pre_trainable:
            self.pre_value = ValueFunction(PRE_OBS_DIM, pre.config)
            self.pre_optimizer = torch.optim.Adam(
                list(pre.parameters()) + list(self.pre_value.parameters()), lr=self.ppo_config.lr
            )

        env0 = envs[0]
        self.horizon = env0.episode_cfg.horizon
        self.max_attempts = env0.episode_cfg.max_placement_attempts
        self.dr = env0.dr
        self.joint_range = JointRangeState(
            gap=self.dr.joint_range_gap, shrink=self.dr.joint_range_shrink, trigger=self.dr.joint_range_trigger
        )
        self.envs.set_joint_range(self.joint_range)
        self.envs.set_zeta(curriculum.zeta)
        self._update_dr()
        self.slots = [_Slot() for _ in envs]
        self.iteration = 0
        self.env_steps = 0
        self.history = []

    # -- collection ------------------------------------------------------------------------------------------

    def _update_dr(self):
        self.dr_active = self.dr.enabled and (self.curriculum.finished or not self.dr.dr_after_curriculum)
        self.envs.set_dr_active(self.dr_active)

    def _pre_act(self, obs_rows):
        obs = _as_obs(obs_rows)
        actions, raw, log_prob = self.pre.act(obs, deterministic=False, generator=self.generator)
        if not self.pre_trainable:
            return actions, [None] * len(actions)
        with torch.no_grad():
            values = self.pre_value(obs)
        samples = [(obs_rows[k], raw[k].numpy(), float(log_prob[k]), float(values[k])) for k in range(len(actions))]
        return actions, samples

    def _place(self, finished, pre_batch):
        """Resets and places every unplaced environment, retrying up to ``max_placement_attempts`` times."""
        for _ in range(self.max_attempts):
            pending = [i for i, slot in enumerate(self.slots) if not slot.placed]
            if not pending:
                return
            obs_rows = []
            for i in pending:
                obs_rows.append(pre_observation(self.envs[i].reset()))
            actions, samples = self._pre_act(obs_rows)
            for i, action, sample in zip(pending, actions, samples):
                env, slot = self.envs[i], self.slots[i]
                result = apply_placement(env, action)
                if result.feasible:
                    slot.placed = True
                    slot.pre_sample = sample
                    slot.obs = env.observe().as_array()
                else:
                    self._finish_episode(env, sample, finished, pre_batch)

    def _finish_episode(self, env, pre_sample, finished, pre_batch):
        finished.append(env.episode_record())
        if pre_sample is not None:
            pre_batch.append(pre_sample + (env.episode_return,))

    def collect(self):
        """Advances every environment by ``horizon`` policy steps.

        :return: post-contact transitions per environment, placement samples, finished episode records
        """
        finished, pre_batch = [], []
        for slot in self.slots:
            slot.transitions = []
        zeta = self.curriculum.zeta
        for _ in range(self.horizon):
            self._place(finished, pre_batch)
            active = [i for i, slot in enumerate(self.slots) if slot.placed]
            if not active:
                continue
            obs = _as_obs([self.slots[i].obs for i in active])
            with torch.no_grad():
                values = self.post_value(obs)
            actions, raw, log_prob = self.post.act(obs, zeta, deterministic=False, generator=self.generator)
            for k, i in enumerate(active):
                env, slot = self.envs[i], self.slots[i]
                next_obs, reward, termination = env.step(actions[k])
                done = termination != RUNNING
                slot.transitions.append(
                    (slot.obs, raw[k].numpy(), float(log_prob[k]), reward, float(values[k]), float(done))
                )
                self.env_steps += 1
                if done:
                    self._finish_episode(env, slot.pre_sample, finished, pre_batch)
                    slot.placed = False
                    slot.pre_sample = None
                    slot.obs = None
                else:
                    slot.obs = next_obs.as_array()
        return finished, pre_batch

    def _post_batch(self):
        columns = [[] for _ in range(8)]
        for slot in self.slots:
            if not slot.transitions:
                continue
            obs, raw, log_prob, rewards, values, dones = zip(*slot.transitions)
            bootstrap = 0.0
            if not dones[-1] and slot.obs is not None:
                with torch.no_grad():
                    bootstrap = float(self.post_value(torch.as_tensor(slot.obs, dtype=dtype).unsqueeze(0)))
            adv, ret = gae(rewards, values, dones, self.ppo_config.gamma, self.ppo_config.lam, bootstrap)
            for column, values_ in zip(columns, (obs, raw, log_prob, rewards, values, dones, adv, ret)):
                column.extend(values_)
        if not columns[0]:
            return None
        return RolloutBatch.from_arrays(*columns)

    def _pre_batch(self, pre_batch):
        if not pre_batch:
            return None
        obs, raw, log_prob, values, rewards = zip(*pre_batch)
        dones = np.ones(len(rewards))
        adv, ret = gae(rewards, values, dones, self.ppo_config.gamma, self.ppo_config.lam)
        return RolloutBatch.from_arrays(obs, raw, log_prob, rewards, values, dones, adv, ret)

    # -- iteration -------------------------------------------------------------------------------------------

    def step(self):
        """Runs one collection and update iteration and returns its metrics row."""
        finished, pre_batch = self.collect()
        policy_loss = value_loss = float("nan")
        batch = self._post_batch()
        if batch is not None:
            stats = ppo_update(batch, self.post, self.post_value, self.post_optimizer, self.ppo_config, self.generator)
            policy_loss, value_loss = stats.mean("policy_loss"), stats.mean("value_loss")
        if self.pre_trainable:
            batch = self._pre_batch(pre_batch)
            if batch is not None:
                ppo_update(batch, self.pre, self.pre_value, self.pre_optimizer, self.ppo_config, self.generator)

        successes = [r["outcome"] == SUCCESS for r in finished]
        if self.curriculum.on_episode_batch(successes):
            self.envs.set_zeta(self.curriculum.zeta)
        was_active = self.dr_active
        self._update_dr()
        if was_active and self.curriculum.finished and self.curriculum.ready:
            before = self.joint_range.narrowings
            narrow_joint_range(self.joint_range, self.curriculum.success_rate)
            if self.joint_range.narrowings != before:
                self.curriculum.window.clear()

        self.iteration += 1
        ticks = sum(r["ticks"] for r in finished)
        zeta = self.curriculum.zeta
        row = {
            "iteration": self.iteration,
            "env_steps": self.env_steps,
            "success_rate": float(np.mean(successes)) if finished else 0.0,
            "mean_reward": float(np.mean([r["reward_sum"] for r in finished])) if finished else 0.0,
            "zeta_pos": float(zeta[0]),
            "zeta_rot": float(zeta[1]),
            "reductions_done": self.curriculum.reductions_done,
            "violation_rate": sum(r["violating_ticks"] for r in finished) / ticks if ticks else 0.0,
            "episodes": len(finished),
            "infeasible_rate": float(np.mean([r["outcome"] == INFEASIBLE for r in finished])) if finished else 0.0,
            "policy_loss": policy_loss,
            "value_loss": value_loss,
            "dr_active": self.dr_active,
        }
        self.history.append(row)
        if self.metrics_writer is not None:
            self.metrics_writer.write(row)
        if self.episode_writer is not None:
            self.episode_writer.write([dict(r, iteration=self.iteration) for r in finished])
        return row

    def run(self, iterations, checkpoint_path=None, checkpoint_interval=0):
        """Runs ``iterations`` more iterations, checkpointing on the interval and on exit."""
        bar = tqdm(range(iterations), disable=not self.progress, desc="train")
        try:
            for _ in bar:
                row = self.step()
                bar.set_postfix(success=f"{row['success_rate']:.2f}", zeta=f"{row['zeta_pos']:.4f}")
                if checkpoint_path and checkpoint_interval and self.iteration % checkpoint_interval == 0:
                    utils.save_checkpoint(checkpoint_path, self.state_dict())
        finally:
            if checkpoint_path:
                utils.save_checkpoint(checkpoint_path, self.state_dict())
        return self.history

    # -- persistence -----------------------------------------------------------------------------------------

    def state_dict(self):
        state = {
            "iteration": self.iteration,
            "env_steps": self.env_steps,
            "post": self.post.state_dict(),
            "post_value": self.post_value.state_dict(),
            "post_optimizer": self.post_optimizer.state_dict(),
            "curriculum": self.curriculum.state_dict(),
            "joint_range": self.joint_range.state_dict(),
            "generator": self.generator.get_state(),
            "envs": self.envs,
            "slots": self.slots,
            "history": list(self.history),
        }
        if self.pre_trainable:
            state.update(
                pre=self.pre.state_dict(),
                pre_value=self.pre_value.state_dict(),
                pre_optimizer=self.pre_optimizer.state_dict(),
            )
        return state

    def load_state_dict(self, state):
        self.iteration = state["iteration"]
        self.env_steps = state["env_steps"]
        self.post.load_state_dict(state["post"])
        self.post_value.load_state_dict(state["post_value"])
        self.post_optimizer.load_state_dict(state["post_optimizer"])
        self.curriculum.load_state_dict(state["curriculum"])
        self.joint_range.load_state_dict(state["joint_range"])
        self.generator.set_state(state["generator"])
        self.envs = state["envs"]
        self.slots = state["slots"]
        self.history = list(state["history"])
        if self.pre_trainable:
            self.pre.load_state_dict(state["pre"])
            self.pre_value.load_state_dict(state["pre_value"])
            self.pre_optimizer.load_state_dict(state["pre_optimizer"])
        self.envs.set_joint_range(self.joint_range)
        self.envs.set_zeta(self.curriculum.zeta)
        self._update_dr()


def joint_train(envs, pre, post, curriculum, iterations, ppo_config=None, seed=0, **kwargs):
    """Builds a :class:`Trainer` and runs it; returns the trainer and its metric rows."""
    trainer = Trainer(envs, pre, post, curriculum, ppo_config, seed, **kwargs)
    history = trainer.run(iterations)
    return trainer, history


@dataclass
class EvalReport:
    success_rate: float
    interval: tuple
    n_episodes: int
    outcomes: dict
    episodes: list

    def summary(self):
        lo, hi = self.interval
        causes = ", ".join(f"{k}={v}" for k, v in sorted(self.outcomes.items()))
        return f"success {self.success_rate:.3f} (95% CI {lo:.3f}-{hi:.3f}) over {self.n_episodes} episodes; {causes}"


def evaluate(
    pre,
    post,
    domain,
    n_episodes,
    dr=False,
    seed=0,
    zeta=None,
    env_fn=None,
    pre_obs_fn=None,
    progress=False,
    **env_kwargs,
):
    """Runs ``n_episodes`` episodes with the mode of every policy distribution.

    An infeasible placement is a failed episode. ``env_fn(seed)`` can replace the default environment and
    ``pre_obs_fn(env, task)`` the placement policy input, which defaults to the pose features of the task.

    :return: success rate with its Wilson 95% interval and per-episode records
    :rtype: pushtorch.trainer.EvalReport
    """
    env = env_fn(seed) if env_fn is not None else PushEnv(domain, seed=seed, **env_kwargs)
    env.dr_active = bool(dr)
    if zeta is not None:
        env.zeta = np.asarray(zeta, dtype=float)
    episodes = []
    for _ in tqdm(range(n_episodes), disable=not progress, desc="eval"):
        task = env.reset()
        pre_obs = pre_obs_fn(env, task) if pre_obs_fn is not None else pre_observation(task)
        actions, _, _ = pre.act(_as_obs([pre_obs]), deterministic=True)
        result = apply_placement(env, actions[0])
        if result.feasible:
            observation = env.observe()
            termination = RUNNING
            while termination == RUNNING:
                obs = torch.as_tensor(observation.as_array(), dtype=dtype).unsqueeze(0)
                post_actions, _, _ = post.act(obs, env.zeta, deterministic=True)
                observation, _, termination = env.step(post_actions[0])
        episodes.append(env.episode_record())
    outcomes = {}
    for record in episodes:
        outcomes[record["outcome"]] = outcomes.get(record["outcome"], 0) + 1
    successes = outcomes.get(SUCCESS, 0)
    rate = successes / n_episodes if n_episodes else 0.0
    return EvalReport(rate, utils.wilson_interval(successes, n_episodes), n_episodes, outcomes, episodes)
