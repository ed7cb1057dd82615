import logging
import os

import matplotlib.pyplot as plt
import numpy as np
from celluloid import Camera
from matplotlib.patches import Polygon, Rectangle

from pushtorch import Pose2
from pushtorch.env import object_keypoints

log = logging.getLogger(__name__)


def _draw_terrain(ax, terrain):
    for rect in terrain.rectangles():
        ax.add_patch(
            Rectangle(
                (rect.xmin, rect.ymin), rect.xmax - rect.xmin, rect.ymax - rect.ymin, facecolor="0.8", edgecolor="0.4"
            )
        )


def render_frame(record, ax, terrain, half_extents, show_contacts=True):
    """Draws one trajectory record: terrain, goal outline, object, arm links and contact normals.

    Example::

        import matplotlib.pyplot as plt
        import pushtorch.pushplot as pplt

        fig, ax = plt.subplots()
        polygon = pplt.render_frame(env.record(), ax, env.world.terrain, env.domain_cfg.half_extents)
        fig.savefig("frame.svg")

    :param record: One entry of an environment trace, see :meth:`pushtorch.env.PushEnv.record`
    :type record: dict

    :param ax: Target axes
    :type ax: matplotlib.axes.Axes

    :param terrain: Static terrain of the episode
    :type terrain: pushtorch.physics.Terrain

    :param half_extents: Object half extents, used for the goal outline
    :type half_extents: tuple

    :return: The drawn object polygon, its vertices are the recorded corners
    :rtype: matplotlib.patches.Polygon
    """
    _draw_terrain(ax, terrain)
    if "goal" in record:
        goal = object_keypoints(Pose2(*record["goal"]), half_extents)
        ax.add_patch(Polygon(goal, closed=True, fill=False, edgecolor="tab:green", linestyle="--"))
    polygon = Polygon(np.asarray(record["object"]["corners"]), closed=True, facecolor="tab:orange", edgecolor="k")
    ax.add_patch(polygon)
    arm = record.get("arm")
    if arm is not None:
        links = np.asarray(arm["links"])
        ax.plot(links[:, 0], links[:, 1], color="tab:blue", linewidth=2)
    for label, finger in record.get("fingers", {}).items():
        ax.plot(*finger["position"], marker="o", markersize=3, color="tab:blue")
    if show_contacts:
        for contact in record.get("contacts", []):
            p, n = np.asarray(contact["point"]), np.asarray(contact["normal"])
            ax.plot([p[0], p[0] + 0.02 * n[0]], [p[1], p[1] + 0.02 * n[1]], color="tab:red", linewidth=1)
    xmin, xmax, ymin, ymax = terrain.workspace
    ax.set_xlim(xmin, xmax)
    ax.set_ylim(ymin - terrain.table_thickness, ymax)
    ax.set_aspect("equal")
    return polygon


def save_frames(trace, terrain, half_extents, out_dir, stride=10, prefix="frame"):
    """Writes every ``stride``-th record of ``trace`` as an SVG file.

    :return: Paths of the written frames, none for an empty trace
    :rtype: list of str
    """
    if stride < 1:
        raise ValueError("``stride`` must be at least 1.")
    paths = []
    if not trace:
        return paths
    os.makedirs(out_dir, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    for index in range(0, len(trace), stride):
        ax.clear()
        render_frame(trace[index], ax, terrain, half_extents)
        ax.set_title(f"t = {trace[index]['time']:.2f} s")
        path = os.path.join(out_dir, f"{prefix}_{index // stride:05d}.svg")
        fig.savefig(path, format="svg")
        paths.append(path)
    plt.close(fig)
    log.info("wrote %d frames to %s", len(paths), out_dir)
    return paths


def animator(trace, terrain, half_extents, stride=10, interval=40, fig=None, ax=None):
    """Animation of a rollout built with ``celluloid``; save it with ``anim.save("rollout.gif", writer="pillow")``.

    :return: Animation of every ``stride``-th record
    :rtype: matplotlib.animation.ArtistAnimation
    """
    if fig is None or ax is None:
        fig, ax = plt.subplots(figsize=(6, 4))
    camera = Camera(fig)
    for index in range(0, len(trace), stride):
        render_frame(trace[index], ax, terrain, half_extents, show_contacts=False)
        camera.snap()
    return camera.animate(interval=interval)


def training_curves(metrics, fig=None):
    """Success rate and residual limit against environment steps, from a metrics frame.

    Example::

        import pandas as pd
        import pushtorch.pushplot as pplt

        fig = pplt.training_curves(pd.read_csv("runs/card/metrics.csv"))
        fig.savefig("curves.svg")

    """
    if fig is None:
        fig = plt.figure(figsize=(8, 3))
    ax_success, ax_zeta = fig.subplots(1, 2)
    ax_success.plot(metrics["env_steps"], metrics["success_rate"])
    ax_success.set_xlabel("env steps")
    ax_success.set_ylabel("success rate")
    ax_success.set_ylim(0, 1)
    ax_zeta.plot(metrics["env_steps"], metrics["zeta_pos"], label="position (m)")
    ax_zeta.plot(metrics["env_steps"], metrics["zeta_rot"], label="rotation (rad)")
    ax_zeta.set_xlabel("env steps")
    ax_zeta.legend()
    fig.tight_layout()
    return fig
