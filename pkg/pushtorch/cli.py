"""Command-line interface: ``pushtorch train | eval | sysid | distill | ablate | demo``."""

import dataclasses
import functools
import json
import logging
import os
import sys

import click
import matplotlib
import numpy as np
import pandas as pd
import torch

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from pushtorch import ConfigError, SimulationError, __version__, utils  # noqa: E402
from pushtorch import pushplot  # noqa: E402
from pushtorch.arm import InfeasibleError, save_arm_config  # noqa: E402
from pushtorch.config import config_hash, dump_config, load_config  # noqa: E402
from pushtorch.curriculum import CurriculumState  # noqa: E402
from pushtorch.distill import (  # noqa: E402
    DistillationError,
    collect_demos,
    eval_student_closed_loop,
    placement_errors,
    save_demos,
    save_student,
    train_student,
)
from pushtorch.env import RUNNING, PushEnv, VecEnv, domain_config, pre_observation  # noqa: E402
from pushtorch.policy import FixedPlacementPolicy, PostContactPolicy, PreContactPolicy  # noqa: E402
from pushtorch.ppo import PpoUpdateError  # noqa: E402
from pushtorch.sysid import (  # noqa: E402
    PARAM_NAMES,
    collect_trajectory,
    fit_joint,
    generate_excitations,
    load_records,
    make_plant,
    save_records,
)
from pushtorch.trainer import METRIC_COLUMNS, Trainer, apply_placement, evaluate  # noqa: E402

log = logging.getLogger(__name__)

HARD_FAULTS = (SimulationError, InfeasibleError, PpoUpdateError, ConfigError, DistillationError, OSError)


def _handle_errors(command):
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except HARD_FAULTS as e:
            log.debug("command failed", exc_info=True)
            raise click.ClickException(f"{type(e).__name__}: {e}")

    return wrapper


def _config_option(f):
    return click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="YAML config")(f)


def _seed_option(f):
    return click.option("--seed", type=int, default=None, help="Root seed, overrides the config")(f)


def _out_option(f):
    return click.option("--out", type=click.Path(file_okay=False), default=None, help="Output root directory")(f)


def _new_run_dir(root, name):
    """Creates a fresh directory under ``root``; an existing run is never written into."""
    path = os.path.join(root, name)
    candidate, k = path, 1
    while os.path.exists(candidate):
        candidate = f"{path}_{k}"
        k += 1
    os.makedirs(candidate)
    return candidate


def _write_manifest(run_dir, command, config):
    manifest = {
        "command": command,
        "argv": sys.argv,
        "config_hash": config_hash(config),
        "seed": config.seed,
        "version": __version__,
        "torch": torch.__version__,
    }
    with open(os.path.join(run_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2)
    dump_config(config, os.path.join(run_dir, "config.yaml"))


def build_policies(config):
    """Placement and post-contact policies of a run; networks are initialised from the run seed."""
    torch.manual_seed(config.seed)
    model, _ = config.arm_model()
    post = PostContactPolicy(config.policy, n_joints=model.n_joints)
    if config.pre_policy:
        pre = PreContactPolicy(config.policy)
    else:
        pre = FixedPlacementPolicy(config.ee_init, domain_config(config.domain).half_extents, model.gripper)
    return pre, post


def build_trainer(config, run_dir, progress=True):
    envs = VecEnv(config.domain, config.n_envs, seed=config.seed, **config.env_kwargs())
    pre, post = build_policies(config)
    metrics = utils.MetricsWriter(os.path.join(run_dir, "metrics.csv"), METRIC_COLUMNS)
    episodes = utils.MetricsWriter(os.path.join(run_dir, "episodes.csv"))
    return Trainer(
        envs,
        pre,
        post,
        CurriculumState(config.curriculum),
        config.ppo,
        config.seed,
        metrics_writer=metrics,
        episode_writer=episodes,
        progress=progress,
    )


def run_training(config, run_dir, resume=None, progress=True):
    trainer = build_trainer(config, run_dir, progress)
    if resume is not None:
        trainer.load_state_dict(utils.load_checkpoint(resume))
        log.info("resumed from %s at iteration %d", resume, trainer.iteration)
    remaining = max(config.iterations - trainer.iteration, 0)
    trainer.run(remaining, os.path.join(run_dir, "checkpoint.pt"), config.checkpoint_interval)
    metrics_path = os.path.join(run_dir, "metrics.csv")
    if os.path.exists(metrics_path):
        fig = pushplot.training_curves(pd.read_csv(metrics_path))
        fig.savefig(os.path.join(run_dir, "training_curves.svg"))
        plt.close(fig)
    return trainer


def _run_config(checkpoint, config_path):
    """Config of a checkpointed run: ``--config`` if given, else the ``config.yaml`` written next to it."""
    if config_path is None:
        sibling = os.path.join(os.path.dirname(os.path.abspath(checkpoint)), "config.yaml")
        config_path = sibling if os.path.exists(sibling) else None
    return load_config(config_path)


def load_policies(checkpoint, config):
    state = utils.load_checkpoint(checkpoint)
    pre, post = build_policies(config)
    post.load_state_dict(state["post"])
    if "pre" in state:
        pre.load_state_dict(state["pre"])
    curriculum = CurriculumState(config.curriculum)
    curriculum.load_state_dict(state["curriculum"])
    return pre, post, curriculum.zeta


@click.group()
@click.version_option(__version__)
@click.option("-v", "--verbose", is_flag=True, help="Log at DEBUG level")
def main(verbose):
    """Learning planar non-prehensile manipulation with a placement policy and a post-contact policy."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO, format="%(asctime)s %(name)s %(levelname)s %(message)s"
    )


@main.command()
@_config_option
@_seed_option
@_out_option
@click.option("--envs", "n_envs", type=int, default=None, help="Number of parallel environments")
@click.option("--domain", type=click.Choice(["card", "bump", "wall"]), default=None)
@click.option("--iterations", type=int, default=None)
@click.option("--no-pre-policy", is_flag=True, help="Place the gripper with a fixed rule instead of a policy")
@click.option("--no-curriculum", is_flag=True, help="Train at the final residual limit from the start")
@click.option("--ee-init", type=click.Choice(FixedPlacementPolicy.MODES), default=None)
@click.option("--resume", type=click.Path(exists=True, dir_okay=False), default=None, help="Checkpoint to continue")
@click.option("--quiet", is_flag=True, help="Hide progress bars")
@_handle_errors
def train(config_path, seed, out, n_envs, domain, iterations, no_pre_policy, no_curriculum, ee_init, resume, quiet):
    """Joint training with the residual curriculum and domain randomization."""
    config = load_config(config_path).override(
        seed=seed,
        out=out,
        n_envs=n_envs,
        domain=domain,
        iterations=iterations,
        ee_init=ee_init,
        pre_policy=False if no_pre_policy else None,
    )
    if no_curriculum:
        config = config.override(curriculum=dataclasses.replace(config.curriculum, enabled=False))
    run_dir = _new_run_dir(config.out, f"train-{config.domain}-seed{config.seed}")
    _write_manifest(run_dir, "train", config)
    trainer = run_training(config, run_dir, resume, progress=not quiet)
    last = trainer.history[-1] if trainer.history else {}
    click.echo(f"{run_dir}: iteration {trainer.iteration}, success {last.get('success_rate', float('nan')):.3f}")


@main.command(name="eval")
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), required=True)
@_config_option
@_seed_option
@_out_option
@click.option("--episodes", "n_episodes", type=int, default=None, help="Evaluation episodes")
@click.option("--dr", is_flag=True, help="Evaluate with domain randomization")
@_handle_errors
def eval_command(checkpoint, config_path, seed, out, n_episodes, dr):
    """Success rate of a checkpoint with its 95% interval and termination causes."""
    config = _run_config(checkpoint, config_path).override(seed=seed, out=out, eval_episodes=n_episodes)
    pre, post, zeta = load_policies(checkpoint, config)
    report = evaluate(
        pre, post, config.domain, config.eval_episodes, dr=dr, seed=config.seed, zeta=zeta, **config.env_kwargs()
    )
    run_dir = _new_run_dir(config.out, f"eval-{config.domain}-seed{config.seed}")
    _write_manifest(run_dir, "eval", config)
    pd.DataFrame(report.episodes).to_csv(os.path.join(run_dir, "episodes.csv"), index=False)
    with open(os.path.join(run_dir, "report.json"), "w") as f:
        json.dump(
            {
                "success_rate": report.success_rate,
                "interval": list(report.interval),
                "n_episodes": report.n_episodes,
                "outcomes": report.outcomes,
                "dr": dr,
            },
            f,
            indent=2,
        )
    click.echo(report.summary())


@main.command()
@_config_option
@_seed_option
@_out_option
@click.option("--joint", "joints", type=int, multiple=True, help="Joints to identify, defaults to all")
@click.option("--traj", "n_traj", type=int, default=None, help="Trajectories per joint")
@click.option("--records", type=click.Path(exists=True, dir_okay=False), default=None, help="Measured trajectory CSV")
@_handle_errors
def sysid(config_path, seed, out, joints, n_traj, records):
    """Fits joint friction, damping and armature with CMA-ES on sinusoid tracking data."""
    config = load_config(config_path).override(seed=seed, out=out)
    if n_traj is not None:
        config = config.override(sysid=dataclasses.replace(config.sysid, n_traj=n_traj))
    model, nominal = config.arm_model()
    run_dir = _new_run_dir(config.out, f"sysid-seed{config.seed}")
    _write_manifest(run_dir, "sysid", config)

    plant = None
    if records is not None:
        data = load_records(records)
    else:
        plant = make_plant(nominal, config.sysid.plant_scale)
        rng = np.random.default_rng(config.seed)
        data = []
        for joint in joints or range(model.n_joints):
            for k, spec in enumerate(generate_excitations(model, joint, config.sysid.n_traj, rng, config.sysid)):
                data.append(collect_trajectory(plant, spec, model, config.sysid, seed=config.seed * 1000 + k))
    save_records(os.path.join(run_dir, "records.csv"), data)

    cma_config = dataclasses.replace(config.cmaes, seed=config.seed)
    fitted, fits = fit_joint(data, nominal, model, config.sysid, cma_config, progress=True)
    save_arm_config(os.path.join(run_dir, "arm_fitted.yaml"), model, fitted)
    rows = []
    for fit in fits:
        for name, value in zip(PARAM_NAMES, fit.params):
            row = {"joint": fit.joint, "parameter": name, "fitted": value, "f_best": fit.f_best}
            row["consistent"] = fit.consistent
            if plant is not None:
                truth = plant.for_joint(fit.joint)[PARAM_NAMES.index(name)]
                row.update(truth=truth, relative_error=abs(value - truth) / truth if truth else abs(value))
            rows.append(row)
    report = pd.DataFrame(rows)
    report.to_csv(os.path.join(run_dir, "sysid_report.csv"), index=False)
    click.echo(report.to_string(index=False))


@main.command()
@click.option(
    "--checkpoint",
    type=click.Path(exists=True, dir_okay=False),
    required=True,
    help="Run with a trained placement policy",
)
@_config_option
@_seed_option
@_out_option
@click.option("--demos", "n_demos", type=int, default=None, help="Demonstrations to collect")
@click.option("--episodes", "n_episodes", type=int, default=None, help="Closed-loop evaluation episodes")
@_handle_errors
def distill(checkpoint, config_path, seed, out, n_demos, n_episodes):
    """Trains a keypoint-only placement student from a trained placement policy."""
    config = _run_config(checkpoint, config_path).override(
        seed=seed, out=out, demo_count=n_demos, eval_episodes=n_episodes
    )
    if not config.pre_policy:
        raise click.ClickException("Distillation needs a run with a learned placement policy.")
    expert, post, zeta = load_policies(checkpoint, config)
    run_dir = _new_run_dir(config.out, f"distill-{config.domain}-seed{config.seed}")
    _write_manifest(run_dir, "distill", config)

    env_kwargs = config.env_kwargs()
    rng = np.random.default_rng(config.seed)
    demos = collect_demos(expert, config.domain, config.demo_count, rng, progress=True, **env_kwargs)
    save_demos(os.path.join(run_dir, "demos.jsonl"), demos)
    student, history = train_student(demos, dataclasses.replace(config.distill, seed=config.seed), progress=True)
    save_student(os.path.join(run_dir, "student.pt"), student, config.distill, history)
    pd.DataFrame(history).to_csv(os.path.join(run_dir, "distill_history.csv"), index=False)

    position, heading = placement_errors(student, demos)
    kwargs = dict(seed=config.seed, zeta=zeta, **env_kwargs)
    student_report = eval_student_closed_loop(student, post, config.domain, config.eval_episodes, **kwargs)
    expert_report = evaluate(expert, post, config.domain, config.eval_episodes, **kwargs)
    with open(os.path.join(run_dir, "report.json"), "w") as f:
        json.dump(
            {
                "demos": len(demos),
                "median_position_error": float(np.median(position)),
                "median_heading_error": float(np.median(heading)),
                "student_success_rate": student_report.success_rate,
                "expert_success_rate": expert_report.success_rate,
            },
            f,
            indent=2,
        )
    click.echo(f"student: {student_report.summary()}")
    click.echo(f"expert: {expert_report.summary()}")


ABLATIONS = {
    "two-policy": {},
    "ee-above": {"pre_policy": False, "ee_init": "above"},
    "ee-at-right": {"pre_policy": False, "ee_init": "at-right"},
    "fixed-zeta-star": {"curriculum": False},
}


@main.command()
@_config_option
@_out_option
@click.option("--domain", type=click.Choice(["card", "bump", "wall"]), default=None)
@click.option("--seeds", type=int, multiple=True, help="Seeds per configuration, defaults to the config's")
@click.option("--iterations", type=int, default=None)
@click.option("--only", type=click.Choice(sorted(ABLATIONS)), multiple=True, help="Run a subset of configurations")
@_handle_errors
def ablate(config_path, out, domain, seeds, iterations, only):
    """Placement decomposition and residual-schedule ablations; writes ``ablation_summary.csv``."""
    base = load_config(config_path).override(out=out, domain=domain, iterations=iterations)
    root = _new_run_dir(base.out, f"ablate-{base.domain}")
    rows = []
    for name in only or ABLATIONS:
        changes = dict(ABLATIONS[name])
        curriculum = changes.pop("curriculum", True)
        for seed in seeds or base.ablation_seeds:
            config = base.override(seed=seed, out=root, **changes)
            if not curriculum:
                config = config.override(curriculum=dataclasses.replace(config.curriculum, enabled=False))
            run_dir = _new_run_dir(root, f"{name}-seed{seed}")
            _write_manifest(run_dir, f"ablate:{name}", config)
            trainer = run_training(config, run_dir, progress=False)
            last = trainer.history[-1] if trainer.history else {}
            report = evaluate(
                trainer.pre,
                trainer.post,
                config.domain,
                config.eval_episodes,
                seed=seed,
                zeta=trainer.curriculum.zeta,
                **config.env_kwargs(),
            )
            rows.append(
                {
                    "configuration": name,
                    "seed": seed,
                    "env_steps": trainer.env_steps,
                    "train_success_rate": last.get("success_rate", float("nan")),
                    "eval_success_rate": report.success_rate,
                    "reductions_done": trainer.curriculum.reductions_done,
                }
            )
            log.info("%s seed %d: %s", name, seed, report.summary())
    summary = pd.DataFrame(rows)
    summary.to_csv(os.path.join(root, "ablation_summary.csv"), index=False)
    click.echo(summary.groupby("configuration")["eval_success_rate"].mean().to_string())


def rollout(env, pre, post, task=None):
    """Runs one deterministic episode with tracing on; returns the trace."""
    env.trace = []
    task = env.reset(task)
    obs = torch.as_tensor(pre_observation(task)).unsqueeze(0)
    actions, _, _ = pre.act(obs, deterministic=True)
    result = apply_placement(env, actions[0])
    if result.feasible:
        observation, termination = env.observe(), RUNNING
        while termination == RUNNING:
            obs = torch.as_tensor(observation.as_array()).unsqueeze(0)
            post_actions, _, _ = post.act(obs, env.zeta, deterministic=True)
            observation, _, termination = env.step(post_actions[0])
    trace, env.trace = env.trace, None
    return trace


@main.command()
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), required=True)
@_config_option
@_seed_option
@_out_option
@click.option("--tasks", "n_tasks", type=int, default=1, help="Number of rollouts to render")
@click.option("--stride", type=int, default=None, help="Control ticks per rendered frame")
@click.option("--gif", is_flag=True, help="Also write an animation")
@_handle_errors
def demo(checkpoint, config_path, seed, out, n_tasks, stride, gif):
    """Renders rollouts of a checkpoint as SVG frames plus a JSON-lines trajectory."""
    config = _run_config(checkpoint, config_path).override(seed=seed, out=out, render_stride=stride)
    if n_tasks <= 0:
        click.echo("no tasks requested")
        return
    pre, post, zeta = load_policies(checkpoint, config)
    env = PushEnv(config.domain, seed=config.seed, **config.env_kwargs())
    env.zeta = zeta
    run_dir = _new_run_dir(config.out, f"demo-{config.domain}-seed{config.seed}")
    _write_manifest(run_dir, "demo", config)
    for k in range(n_tasks):
        trace = rollout(env, pre, post)
        task_dir = os.path.join(run_dir, f"task_{k:03d}")
        os.makedirs(task_dir)
        utils.write_jsonl(os.path.join(task_dir, "trajectory.jsonl"), trace)
        half_extents = env.domain_cfg.half_extents
        frames = pushplot.save_frames(trace, env.world.terrain, half_extents, task_dir, config.render_stride)
        if gif and trace:
            anim = pushplot.animator(trace, env.world.terrain, half_extents, config.render_stride)
            anim.save(os.path.join(task_dir, "rollout.gif"), writer="pillow")
        click.echo(f"task {k}: {env.outcome}, {len(frames)} frames")


if __name__ == "__main__":
    main()
