import math
from dataclasses import dataclass

import numpy as np

# fmt: off
__version__ = '0.1.0'
# fmt: on


def wrap_angle(theta):
    """Wrap an angle (or an array of angles) to the interval :math:`(-π, π]`.

    Example::

        from pushtorch import wrap_angle

        wrap_angle(3 * math.pi / 2)
        >>> -1.5707963267948966

        wrap_angle(-math.pi)
        >>> 3.141592653589793

    :param theta: Angle in radians
    :type theta: float or numpy.ndarray

    :return: Wrapped angle
    :rtype: float or numpy.ndarray
    """
    if isinstance(theta, np.ndarray):
        wrapped = np.remainder(theta + np.pi, 2 * np.pi) - np.pi
        return np.where(wrapped <= -np.pi, wrapped + 2 * np.pi, wrapped)
    wrapped = math.remainder(theta, 2 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2 * math.pi
    return wrapped


def rotation(theta):
    """2x2 rotation matrix for angle ``theta``."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


class SimulationError(RuntimeError):
    """Raised when a body or joint state becomes non-finite.
    The message names the offending body."""


class ConfigError(ValueError):
    """Raised for unknown keys, wrong types or out-of-range values in a configuration file."""


@dataclass(frozen=True)
class Pose2:
    """Planar pose: position ``(x, y)`` in meters and heading ``theta`` in radians.

    ``theta`` is wrapped to :math:`(-π, π]` on construction, so every pose produced by an
    update is already normalized.

    Example::

        from pushtorch import Pose2

        base = Pose2(0.0, 0.4, 0.0)
        tool = Pose2(0.1, 0.0, math.pi / 2)
        print(base.compose(tool))
        >>> Pose2(x=0.1, y=0.4, theta=1.5707963267948966)

    """

    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        x, y, theta = float(self.x), float(self.y), float(self.theta)
        if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(theta)):
            raise ValueError(f"Pose2 coordinates must be finite, got ({x}, {y}, {theta}).")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "theta", wrap_angle(theta))

    @property
    def position(self):
        return np.array([self.x, self.y])

    def compose(self, other):
        """Returns ``self ⊕ other``: ``other`` expressed in this pose's frame, mapped to the parent frame."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )

    def inverse(self):
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2(-c * self.x - s * self.y, s * self.x - c * self.y, -self.theta)

    def transform_point(self, point):
        """Map a point given in this pose's frame to the parent frame."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        px, py = point[0], point[1]
        return np.array([self.x + c * px - s * py, self.y + s * px + c * py])

    def as_array(self):
        return np.array([self.x, self.y, self.theta])

    def features(self):
        """``(x, y, cos θ, sin θ)``, a continuous encoding used as network input."""
        return np.array([self.x, self.y, math.cos(self.theta), math.sin(self.theta)])
