import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from pushtorch import Pose2, SimulationError

log = logging.getLogger(__name__)

GRAVITY = 9.81
TERRAIN_KINDS = ("flat", "bump", "wall")


@dataclass
class ContactConfig:
    """Parameters of the velocity-level contact solver.

    :param iterations: Projected Gauss-Seidel sweeps per step, defaults to ``16``
    :type iterations: int, optional

    :param baumgarte: Fraction of the excess penetration removed per step, defaults to ``0.2``
    :type baumgarte: float, optional

    :param slop: Penetration allowed without positional correction (m), defaults to ``0.0005``
    :type slop: float, optional

    :param tolerance: Largest impulse change (N·s) in the final sweep that still counts as converged,
        defaults to ``1e-9``
    :type tolerance: float, optional
    """

    iterations: int = 16
    baumgarte: float = 0.2
    slop: float = 0.0005
    tolerance: float = 1e-9

    def validate(self):
        if self.iterations < 1:
            raise ValueError("``iterations`` must be at least 1.")
        if not 0 <= self.baumgarte <= 1:
            raise ValueError(f"``baumgarte`` [{self.baumgarte}] must be between [0, 1].")
        if self.slop < 0 or self.tolerance < 0:
            raise ValueError("``slop`` and ``tolerance`` cannot be negative.")
        return self


@dataclass
class RigidBody2:
    """A box-shaped planar rigid body.

    ``velocity`` holds ``(vx, vy, omega)``. Corners are always listed in the fixed order
    ``(-x-y, +x-y, +x+y, -x+y)`` of the body frame.

    Example::

        from pushtorch import Pose2
        from pushtorch.physics import RigidBody2

        mass = RigidBody2.mass_from_density((0.035, 0.025), density=200, depth=0.05)
        box = RigidBody2.box(Pose2(0.1, 0.025, 0.0), (0.035, 0.025), mass, friction_coeff=0.5)
        print(box.corners())

    """

    pose: Pose2
    velocity: np.ndarray
    mass: float
    inertia: float
    half_extents: tuple
    friction_coeff: float
    name: str = "object"

    def __post_init__(self):
        self.velocity = np.asarray(self.velocity, dtype=float).reshape(3)
        self.half_extents = (float(self.half_extents[0]), float(self.half_extents[1]))
        if self.mass <= 0:
            raise ValueError(f"``mass`` [{self.mass}] must be positive.")
        if self.inertia <= 0:
            raise ValueError(f"``inertia`` [{self.inertia}] must be positive.")
        if self.friction_coeff < 0:
            raise ValueError(f"``friction_coeff`` [{self.friction_coeff}] cannot be negative.")
        if min(self.half_extents) <= 0:
            raise ValueError("``half_extents`` must be positive.")

    @classmethod
    def box(cls, pose, half_extents, mass, friction_coeff, velocity=(0.0, 0.0, 0.0), name="object"):
        """Box with the inertia of a uniform rectangle, :math:`m(w^2+h^2)/12`."""
        hx, hy = half_extents
        inertia = mass * ((2 * hx) ** 2 + (2 * hy) ** 2) / 12.0
        return cls(pose, np.asarray(velocity, dtype=float), mass, inertia, half_extents, friction_coeff, name)

    @staticmethod
    def mass_from_density(half_extents, density, depth):
        """Mass of a box of the given planar extents and out-of-plane ``depth`` (m) at ``density`` (kg/m³)."""
        return density * (2 * half_extents[0]) * (2 * half_extents[1]) * depth

    def local_corners(self):
        hx, hy = self.half_extents
        return np.array([[-hx, -hy], [hx, -hy], [hx, hy], [-hx, hy]])

    def corners(self):
        c, s = math.cos(self.pose.theta), math.sin(self.pose.theta)
        local = self.local_corners()
        return np.column_stack(
            (
                self.pose.x + c * local[:, 0] - s * local[:, 1],
                self.pose.y + s * local[:, 0] + c * local[:, 1],
            )
        )

    def point_velocity(self, point):
        rx, ry = point[0] - self.pose.x, point[1] - self.pose.y
        vx, vy, w = self.velocity
        return np.array([vx - w * ry, vy + w * rx])

    def signed_distance(self, point):
        """Signed distance from ``point`` to the box boundary (negative inside) and the outward normal
        of the closest face, both in world coordinates."""
        c, s = math.cos(self.pose.theta), math.sin(self.pose.theta)
        dx, dy = point[0] - self.pose.x, point[1] - self.pose.y
        lx, ly = c * dx + s * dy, -s * dx + c * dy
        hx, hy = self.half_extents
        ex, ey = abs(lx) - hx, abs(ly) - hy
        if ex <= 0 and ey <= 0:
            if ex >= ey:
                nl = (math.copysign(1.0, lx), 0.0)
                dist = ex
            else:
                nl = (0.0, math.copysign(1.0, ly))
                dist = ey
        else:
            ox, oy = max(ex, 0.0), max(ey, 0.0)
            dist = math.hypot(ox, oy)
            nl = (math.copysign(ox, lx) / dist, math.copysign(oy, ly) / dist)
        normal = np.array([c * nl[0] - s * nl[1], s * nl[0] + c * nl[1]])
        return dist, normal

    def perimeter_point(self, s):
        """Point on the boundary at perimeter fraction ``s`` (wrapped modulo 1), walking counter-clockwise
        from corner ``-x-y``. Returns the point and the outward normal in world coordinates."""
        local, normal = perimeter_point(self.half_extents, s)
        return self.pose.transform_point(local), Pose2(0.0, 0.0, self.pose.theta).transform_point(normal)

    def is_finite(self):
        return bool(np.all(np.isfinite(self.velocity))) and all(
            math.isfinite(v) for v in (self.pose.x, self.pose.y, self.pose.theta)
        )


def perimeter_point(half_extents, s):
    """Body-frame boundary point at perimeter fraction ``s`` of a box, with its outward normal."""
    hx, hy = half_extents
    edges = (
        ((-hx, -hy), (hx, -hy), (0.0, -1.0)),
        ((hx, -hy), (hx, hy), (1.0, 0.0)),
        ((hx, hy), (-hx, hy), (0.0, 1.0)),
        ((-hx, hy), (-hx, -hy), (-1.0, 0.0)),
    )
    lengths = (2 * hx, 2 * hy, 2 * hx, 2 * hy)
    arc = (float(s) % 1.0) * sum(lengths)
    for (start, end, normal), length in zip(edges, lengths):
        if arc <= length:
            frac = arc / length
            point = (start[0] + frac * (end[0] - start[0]), start[1] + frac * (end[1] - start[1]))
            return np.array(point), np.array(normal)
        arc -= length
    start, _, normal = edges[0]
    return np.array(start), np.array(normal)


@dataclass(frozen=True)
class TerrainRect:
    """Static axis-aligned rectangle of the terrain; ``faces`` lists the faces that are exposed."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float
    faces: tuple = ("left", "right", "top")

    def contains(self, point):
        return self.xmin <= point[0] <= self.xmax and self.ymin <= point[1] <= self.ymax

    def penetration(self, point):
        """Depth and outward normal of the nearest exposed face for a point inside the rectangle."""
        candidates = {
            "left": (point[0] - self.xmin, (-1.0, 0.0)),
            "right": (self.xmax - point[0], (1.0, 0.0)),
            "top": (self.ymax - point[1], (0.0, 1.0)),
            "bottom": (point[1] - self.ymin, (0.0, -1.0)),
        }
        depth, normal = min((candidates[f] for f in self.faces), key=lambda c: c[0])
        return max(depth, 0.0), np.array(normal)

    def signed_distance(self, point):
        dx = max(self.xmin - point[0], point[0] - self.xmax)
        dy = max(self.ymin - point[1], point[1] - self.ymax)
        if dx <= 0 and dy <= 0:
            return max(dx, dy)
        return math.hypot(max(dx, 0.0), max(dy, 0.0))


@dataclass
class Terrain:
    """Static terrain: a table whose top surface is ``y = 0`` plus an optional bump or wall feature.

    :param kind: One of ``"flat"``, ``"bump"``, ``"wall"``, defaults to ``"flat"``
    :type kind: str, optional

    :param feature_height: Height of the bump or wall (m); ignored for ``"flat"``
    :type feature_height: float, optional

    :param feature_width: Width of the bump or wall (m); ignored for ``"flat"``
    :type feature_width: float, optional

    :param feature_x: Horizontal center of the bump or wall (m); ignored for ``"flat"``
    :type feature_x: float, optional

    :param friction_coeff: Coulomb friction coefficient of the terrain surface, defaults to ``0.5``
    :type friction_coeff: float, optional

    :param workspace: ``(xmin, xmax, ymin, ymax)`` box outside of which the object counts as dropped.
        It is also the frame of the keypoint camera.
    :type workspace: tuple, optional
    """

    kind: str = "flat"
    feature_height: float = 0.0
    feature_width: float = 0.0
    feature_x: float = 0.0
    friction_coeff: float = 0.5
    table_half_width: float = 0.4
    table_thickness: float = 0.05
    workspace: tuple = (-0.45, 0.45, -0.02, 0.6)

    def __post_init__(self):
        if self.kind not in TERRAIN_KINDS:
            raise ValueError(f"Terrain ``kind`` [{self.kind}] must be one of {TERRAIN_KINDS}.")
        if self.kind != "flat" and (self.feature_height <= 0 or self.feature_width <= 0):
            raise ValueError("``feature_height`` and ``feature_width`` must be positive for bump and wall terrain.")
        if self.friction_coeff < 0:
            raise ValueError("``friction_coeff`` cannot be negative.")
        self.workspace = tuple(float(v) for v in self.workspace)

    def rectangles(self):
        rects = [
            TerrainRect(
                -self.table_half_width,
                self.table_half_width,
                -self.table_thickness,
                0.0,
                ("left", "right", "top"),
            )
        ]
        if self.kind != "flat":
            half = self.feature_width / 2
            rects.append(
                TerrainRect(
                    self.feature_x - half,
                    self.feature_x + half,
                    0.0,
                    self.feature_height,
                    ("left", "right", "top"),
                )
            )
        return rects

    def vertices(self):
        """Exposed convex corners of the terrain."""
        verts = [(-self.table_half_width, 0.0), (self.table_half_width, 0.0)]
        if self.kind != "flat":
            half = self.feature_width / 2
            verts += [
                (self.feature_x - half, self.feature_height),
                (self.feature_x + half, self.feature_height),
            ]
        return [np.array(v) for v in verts]

    def surface_height(self, x):
        if self.kind != "flat" and abs(x - self.feature_x) <= self.feature_width / 2:
            return self.feature_height
        return 0.0

    def signed_distance(self, point):
        return min(rect.signed_distance(point) for rect in self.rectangles())

    def outward_normal(self, point):
        """Normal of the nearest exposed face of the rectangle a point penetrates, or ``None``."""
        for rect in self.rectangles():
            if rect.contains(point):
                return rect.penetration(point)[1]
        return None

    def in_workspace(self, point):
        xmin, xmax, ymin, ymax = self.workspace
        return xmin <= point[0] <= xmax and ymin <= point[1] <= ymax


@dataclass
class KinematicPoint:
    """A point of the gripper that touches the object with infinite mass; moved by the arm, not by contacts."""

    label: str
    position: np.ndarray
    velocity: np.ndarray
    friction_coeff: float = 1.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(2)
        self.velocity = np.asarray(self.velocity, dtype=float).reshape(2)


@dataclass(frozen=True)
class Contact2:
    """A single contact on the object.

    ``normal`` is the unit direction in which the contact pushes the object, ``depth`` the penetration
    along it, and ``other_velocity`` the velocity of the non-object body at ``point``.
    """

    point: np.ndarray
    normal: np.ndarray
    depth: float
    body_pair: tuple
    combined_friction: float
    other_velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))


@dataclass
class ContactSolution:
    normal_impulses: np.ndarray
    tangent_impulses: np.ndarray
    velocity: np.ndarray
    converged: bool
    iterations: int
    residual: float

    def impulse_vectors(self, contacts):
        """World-frame impulse applied to the object by each contact."""
        out = []
        for c, pn, pt in zip(contacts, self.normal_impulses, self.tangent_impulses):
            n = c.normal
            out.append(pn * n + pt * np.array([-n[1], n[0]]))
        return out


@dataclass
class WorldState:
    """Everything the simulator knows: the object, the terrain, the gripper points and the last contact set."""

    object: RigidBody2
    terrain: Terrain
    fingers: tuple = ()
    contacts: tuple = ()
    impulses: ContactSolution = None
    time: float = 0.0
    gravity: float = GRAVITY
    contact_config: ContactConfig = field(default_factory=ContactConfig)


def combined_friction(mu_a, mu_b):
    return math.sqrt(mu_a * mu_b)


def detect_contacts(world):
    """Detects every overlapping feature pair between the object and the terrain or gripper points.

    Box corners are tested against the terrain rectangles, exposed terrain corners and gripper points are
    tested against the box. Touching features (depth 0) count as contacts.

    Example::

        from pushtorch import Pose2
        from pushtorch.physics import RigidBody2, Terrain, WorldState, detect_contacts

        box = RigidBody2.box(Pose2(0.0, 0.025, 0.0), (0.035, 0.025), 0.05, 0.5)
        contacts = detect_contacts(WorldState(box, Terrain()))
        print(len(contacts))
        >>> 2

    :param world: Current world
    :type world: pushtorch.physics.WorldState

    :return: Contacts on the object, empty when nothing touches
    :rtype: list of pushtorch.physics.Contact2
    """
    obj = world.object
    terrain = world.terrain
    contacts = []
    mu_terrain = combined_friction(obj.friction_coeff, terrain.friction_coeff)

    corners = obj.corners()
    for rect in terrain.rectangles():
        for corner in corners:
            if rect.contains(corner):
                depth, normal = rect.penetration(corner)
                contacts.append(Contact2(corner.copy(), normal, depth, (obj.name, "terrain"), mu_terrain))

    for vertex in terrain.vertices():
        dist, out = obj.signed_distance(vertex)
        if dist <= 0:
            contacts.append(Contact2(vertex, -out, -dist, (obj.name, "terrain"), mu_terrain))

    for finger in world.fingers:
        dist, out = obj.signed_distance(finger.position)
        if dist <= 0:
            contacts.append(
                Contact2(
                    finger.position.copy(),
                    -out,
                    -dist,
                    (obj.name, finger.label),
                    combined_friction(obj.friction_coeff, finger.friction_coeff),
                    finger.velocity.copy(),
                )
            )
    return contacts


def solve_contacts(contacts, body, dt, config=None):
    """Resolves contacts on ``body`` with sequential impulses (projected Gauss-Seidel).

    Normal impulses are accumulated and clamped at zero, tangential impulses are clamped to the Coulomb
    cone :math:`|λ_t| ≤ μ λ_n`, and penetration beyond ``slop`` adds a Baumgarte velocity bias.
    Each step first sweeps the normal rows alone, then alternates normal and friction sweeps. Restitution is
    zero.

    :param contacts: Contacts from :func:`detect_contacts`
    :type contacts: list of pushtorch.physics.Contact2

    :param body: The dynamic body, with gravity already applied to its velocity
    :type body: pushtorch.physics.RigidBody2

    :param dt: Time step (s)
    :type dt: float

    :param config: Solver parameters, defaults to :class:`ContactConfig`
    :type config: pushtorch.physics.ContactConfig, optional

    :return: accumulated impulses per contact and the resolved body velocity
    :rtype: pushtorch.physics.ContactSolution
    """
    if dt <= 0:
        raise ValueError(f"``dt`` [{dt}] must be positive.")
    config = config or ContactConfig()
    vx, vy, w = (float(v) for v in body.velocity)
    n_contacts = len(contacts)
    pn = np.zeros(n_contacts)
    pt = np.zeros(n_contacts)
    if n_contacts == 0:
        return ContactSolution(pn, pt, np.array([vx, vy, w]), True, 0, 0.0)

    inv_m, inv_i = 1.0 / body.mass, 1.0 / body.inertia
    cx, cy = body.pose.x, body.pose.y
    rows = []
    for c in contacts:
        rx, ry = c.point[0] - cx, c.point[1] - cy
        nx, ny = float(c.normal[0]), float(c.normal[1])
        tx, ty = -ny, nx
        rn = rx * ny - ry * nx
        rt = rx * ty - ry * tx
        mass_n = 1.0 / (inv_m + inv_i * rn * rn)
        mass_t = 1.0 / (inv_m + inv_i * rt * rt)
        bias = config.baumgarte / dt * max(0.0, c.depth - config.slop)
        ox, oy = float(c.other_velocity[0]), float(c.other_velocity[1])
        rows.append((rx, ry, nx, ny, tx, ty, mass_n, mass_t, bias, c.combined_friction, ox, oy))

    def normal_row(k, row):
        nonlocal vx, vy, w
        rx, ry, nx, ny, _, _, mass_n, _, bias, _, ox, oy = row
        dvx = vx - w * ry - ox
        dvy = vy + w * rx - oy
        vn = dvx * nx + dvy * ny
        old = pn[k]
        pn[k] = max(old + mass_n * (bias - vn), 0.0)
        dp = pn[k] - old
        px, py = dp * nx, dp * ny
        vx += inv_m * px
        vy += inv_m * py
        w += inv_i * (rx * py - ry * px)
        return abs(dp)

    # normal rows settle before any friction row acts
    for _ in range(config.iterations):
        if max(normal_row(k, row) for k, row in enumerate(rows)) <= config.tolerance:
            break

    converged = False
    residual = 0.0
    iteration = 0
    for iteration in range(1, config.iterations + 1):
        residual = 0.0
        for k, row in enumerate(rows):
            residual = max(residual, normal_row(k, row))

        for k, (rx, ry, nx, ny, tx, ty, mass_n, mass_t, bias, mu, ox, oy) in enumerate(rows):
            dvx = vx - w * ry - ox
            dvy = vy + w * rx - oy
            vt = dvx * tx + dvy * ty
            old = pt[k]
            limit = mu * pn[k]
            pt[k] = min(max(old - mass_t * vt, -limit), limit)
            dp = pt[k] - old
            px, py = dp * tx, dp * ty
            vx += inv_m * px
            vy += inv_m * py
            w += inv_i * (rx * py - ry * px)
            residual = max(residual, abs(dp))
        if residual <= config.tolerance:
            converged = True
            break

    if not converged:
        log.debug("contact solver hit %d iterations, last impulse change %.3g", config.iterations, residual)
    return ContactSolution(pn, pt, np.array([vx, vy, w]), converged, iteration, residual)


def _check_finite(world):
    if not world.object.is_finite():
        raise SimulationError(f"Non-finite state in body '{world.object.name}'.")
    for finger in world.fingers:
        if not (np.all(np.isfinite(finger.position)) and np.all(np.isfinite(finger.velocity))):
            raise SimulationError(f"Non-finite state in body '{finger.label}'.")


def step_world(world, dt):
    """Advances the world by ``dt`` with semi-implicit Euler: gravity updates the velocity, contacts are
    resolved on the updated velocity, and the pose integrates the resolved velocity.

    Gripper points are kinematic and are left where the caller put them.

    Example::

        world = WorldState(box, Terrain(), gravity=0.0)
        world.object.velocity[:] = (1.0, 0.0, 0.0)
        world = step_world(world, 0.01)
        print(world.object.pose.x - box.pose.x)
        >>> 0.01

    :param world: Current world
    :type world: pushtorch.physics.WorldState

    :param dt: Time step (s)
    :type dt: float

    :return: The world after one step; the input is not modified
    :rtype: pushtorch.physics.WorldState
    """
    if dt <= 0:
        raise ValueError(f"``dt`` [{dt}] must be positive.")
    _check_finite(world)
    obj = world.object
    velocity = obj.velocity.copy()
    velocity[1] -= world.gravity * dt
    moving = replace(obj, velocity=velocity)
    contacts = detect_contacts(replace(world, object=moving))
    solution = solve_contacts(contacts, moving, dt, world.contact_config)
    v = solution.velocity
    x, y, theta = obj.pose.x + v[0] * dt, obj.pose.y + v[1] * dt, obj.pose.theta + v[2] * dt
    if not all(math.isfinite(c) for c in (x, y, theta, *v)):
        raise SimulationError(f"Non-finite state in body '{obj.name}'.")
    new_obj = replace(obj, pose=Pose2(x, y, theta), velocity=v)
    return replace(world, object=new_obj, contacts=tuple(contacts), impulses=solution, time=world.time + dt)


def finger_reactions(world, dt):
    """Force (N) each gripper point received from the object during the last step, keyed by label."""
    forces = {finger.label: np.zeros(2) for finger in world.fingers}
    if world.impulses is None:
        return forces
    for contact, impulse in zip(world.contacts, world.impulses.impulse_vectors(world.contacts)):
        label = contact.body_pair[1]
        if label in forces:
            forces[label] -= impulse / dt
    return forces


def mechanical_energy(world):
    """Kinetic plus gravitational potential energy of the object (J)."""
    obj = world.object
    vx, vy, w = obj.velocity
    return 0.5 * obj.mass * (vx * vx + vy * vy) + 0.5 * obj.inertia * w * w + obj.mass * world.gravity * obj.pose.y


def world_record(world):
    """JSON-serializable snapshot of the world: body poses and velocities plus a contact summary."""
    obj = world.object
    impulses = world.impulses
    contacts = []
    for k, c in enumerate(world.contacts):
        contacts.append(
            {
                "bodies": list(c.body_pair),
                "point": [float(c.point[0]), float(c.point[1])],
                "normal": [float(c.normal[0]), float(c.normal[1])],
                "depth": float(c.depth),
                "normal_impulse": float(impulses.normal_impulses[k]) if impulses is not None else 0.0,
                "tangent_impulse": float(impulses.tangent_impulses[k]) if impulses is not None else 0.0,
            }
        )
    return {
        "time": float(world.time),
        "object": {
            "pose": [obj.pose.x, obj.pose.y, obj.pose.theta],
            "velocity": [float(v) for v in obj.velocity],
            "corners": obj.corners().tolist(),
        },
        "fingers": {
            f.label: {"position": f.position.tolist(), "velocity": f.velocity.tolist()} for f in world.fingers
        },
        "contacts": contacts,
        "n_contacts": len(contacts),
        "max_depth": max((c["depth"] for c in contacts), default=0.0),
    }
