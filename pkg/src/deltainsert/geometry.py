"""4-DoF pose algebra: poses, relative poses, yaw wrapping, planar distance.

Poses are (x, y, z, psi) in the robot base frame, SI units. The relative pose
between a goal and a current pose is the component-wise base-frame difference
with the yaw difference wrapped, so that ``apply(p, delta(g, p)) == g``.

Linear fields are snapped to a lattice of 2**-30 m (about 1 nm). Every lattice
value below 8 km is an exact double and sums and differences of lattice values
are exact, so the round trip above holds bit-for-bit for x, y and z.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi
LATTICE = 2.0 ** -30
_INV_LATTICE = 2.0 ** 30
_LATTICE_LIMIT = 2.0 ** 22  # meters; keeps lattice values exact in float64


def quantize(v: float) -> float:
    """Snap a length in meters onto the pose lattice."""
    v = float(v)
    if not math.isfinite(v):
        raise ValueError(f"lengths must be finite, got {v!r}")
    if abs(v) >= _LATTICE_LIMIT:
        raise ValueError(f"length {v!r} outside the representable range")
    return round(v * _INV_LATTICE) * LATTICE


def wrap_angle(a: float) -> float:
    """Map an angle to the half-open interval (-pi, pi]; +pi is kept as +pi."""
    a = float(a)
    if not math.isfinite(a):
        raise ValueError(f"cannot wrap non-finite angle {a!r}")
    if -math.pi < a <= math.pi:
        return a
    w = math.fmod(a + math.pi, TWO_PI)
    if w <= 0.0:
        w += TWO_PI
    return w - math.pi


def wrap_angles(a: np.ndarray) -> np.ndarray:
    """Vectorised :func:`wrap_angle`."""
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError("cannot wrap non-finite angles")
    inside = (a > -math.pi) & (a <= math.pi)
    w = np.fmod(a + math.pi, TWO_PI)
    w = np.where(w <= 0.0, w + TWO_PI, w) - math.pi
    return np.where(inside, a, w)




@dataclass(frozen=True)
class Pose4:
    """Gripper pose: position in meters, yaw ``psi`` in radians."""

    x: float
    y: float
    z: float
    psi: float = 0.0

    def __post_init__(self):
        for name in ("x", "y", "z"):
            object.__setattr__(self, name, quantize(getattr(self, name)))
        object.__setattr__(self, "psi", wrap_angle(self.psi))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.psi])

    @classmethod
    def from_array(cls, a) -> "Pose4":
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]))

    def replace(self, **kw) -> "Pose4":
        d = {"x": self.x, "y": self.y, "z": self.z, "psi": self.psi}
        d.update(kw)
        return Pose4(**d)


@dataclass(frozen=True)
class DeltaPose:
    """Relative pose from a current pose to a goal pose."""

    dx: float
    dy: float
    dz: float
    dpsi: float = 0.0

    def __post_init__(self):
        for name in ("dx", "dy", "dz"):
            object.__setattr__(self, name, quantize(getattr(self, name)))
        object.__setattr__(self, "dpsi", wrap_angle(self.dpsi))

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dz, self.dpsi])

    @classmethod
    def from_array(cls, a) -> "DeltaPose":
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]))


ZERO_DELTA = DeltaPose(0.0, 0.0, 0.0, 0.0)


def delta(goal: Pose4, current: Pose4) -> DeltaPose:
    """Relative pose that takes ``current`` to ``goal``."""
    return DeltaPose(goal.x - current.x, goal.y - current.y, goal.z - current.z,
                     wrap_angle(goal.psi - current.psi))


def apply(current: Pose4, d: DeltaPose) -> Pose4:
    """Inverse of :func:`delta`: ``current + d`` with the yaw re-wrapped."""
    return Pose4(current.x + d.dx, current.y + d.dy, current.z + d.dz,
                 wrap_angle(current.psi + d.dpsi))


def planar_distance(d: DeltaPose) -> float:
    return math.hypot(d.dx, d.dy)


def rotation(psi: float) -> np.ndarray:
    c, s = math.cos(psi), math.sin(psi)
    return np.array([[c, -s], [s, c]])
