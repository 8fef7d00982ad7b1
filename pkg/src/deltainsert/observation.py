"""Gripper-locked orthographic height rasters standing in for the two wrist cameras.

Each raster point-samples the scene height field on a W x W grid of cell
centers spanning ``fov_side`` meters, laid out in the gripper frame: rows run
along the gripper y axis, columns along the gripper x axis. The second raster
is the same grid shifted by ``CAMERA_B_OFFSET`` along the gripper x axis.
Because orthographic rasters carry no height cue, the gripper height is kept
as a separate scalar.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Pose4
from .world import SceneState, height_at

DEFAULT_WIDTH = 32
DEFAULT_FOV = 0.16
CAMERA_B_OFFSET = 0.03
HEIGHT_SCALE = 0.05
# 1 / HEIGHT_SCALE; multiplying lattice heights by 20 and dividing back is exact.
FEATURE_GAIN = 20.0


@dataclass(frozen=True, eq=False)
class Observation:
    raster_a: np.ndarray
    raster_b: np.ndarray
    gripper_height: float
    fov_side: float = DEFAULT_FOV

    def __post_init__(self):
        a = np.asarray(self.raster_a, dtype=float)
        b = np.asarray(self.raster_b, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape != b.shape:
            raise ValueError("rasters must be square and share one shape")
        object.__setattr__(self, "raster_a", a)
        object.__setattr__(self, "raster_b", b)
        object.__setattr__(self, "gripper_height", float(self.gripper_height))

    @property
    def width(self) -> int:
        return self.raster_a.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Observation):
            return NotImplemented
        return (self.gripper_height == other.gripper_height
                and self.fov_side == other.fov_side
                and np.array_equal(self.raster_a, other.raster_a)
                and np.array_equal(self.raster_b, other.raster_b))


def _grid(width: int, fov: float) -> np.ndarray:
    cell = fov / width
    return (np.arange(width) + 0.5) * cell - 0.5 * fov


def sample_points(gripper: np.ndarray, width: int = DEFAULT_WIDTH, fov: float = DEFAULT_FOV):
    """World sample points for a batch of gripper poses.

    ``gripper`` is an (n, 4) array of poses; returns x, y of shape (n, 2, W, W).
    """
    g = np.atleast_2d(np.asarray(gripper, float))
    ticks = _grid(width, fov)
    gu = np.broadcast_to(ticks[None, :], (width, width))  # column -> gripper x
    gv = np.broadcast_to(ticks[:, None], (width, width))  # row -> gripper y
    offsets = np.array([0.0, CAMERA_B_OFFSET])
    c = np.cos(g[:, 3])[:, None, None, None]
    s = np.sin(g[:, 3])[:, None, None, None]
    u = gu[None, None] + offsets[None, :, None, None]
    v = np.broadcast_to(gv[None, None], u.shape)
    x = g[:, 0, None, None, None] + c * u - s * v
    y = g[:, 1, None, None, None] + s * u + c * v
    return x, y


def render_batch(scene: SceneState, gripper: np.ndarray, width: int = DEFAULT_WIDTH,
                 fov: float = DEFAULT_FOV) -> np.ndarray:
    """Rasters for many gripper poses at once, shape (n, 2, W, W)."""
    x, y = sample_points(gripper, width, fov)
    return height_at(scene, x, y)


def render(scene: SceneState, gripper: Pose4, width: int = DEFAULT_WIDTH,
           fov: float = DEFAULT_FOV) -> Observation:
    r = render_batch(scene, gripper.as_array()[None], width, fov)[0]
    return Observation(r[0], r[1], gripper.z, fov)


def features(obs: Observation) -> np.ndarray:
    """Flat feature vector: raster a, raster b, then gripper height, all over HEIGHT_SCALE."""
    return np.concatenate([obs.raster_a.ravel(), obs.raster_b.ravel(),
                           [obs.gripper_height]]) * FEATURE_GAIN


def features_batch(rasters: np.ndarray, heights: np.ndarray) -> np.ndarray:
    n = rasters.shape[0]
    out = np.empty((n, rasters[0].size + 1))
    out[:, :-1] = rasters.reshape(n, -1)
    out[:, -1] = heights
    return out * FEATURE_GAIN


def unflatten(vec: np.ndarray, fov: float = DEFAULT_FOV) -> Observation:
    """Inverse of :func:`features`."""
    vec = np.asarray(vec, float) / FEATURE_GAIN
    n = (vec.size - 1) // 2
    width = math.isqrt(n)
    if width * width != n or vec.size != 2 * n + 1:
        raise ValueError(f"feature length {vec.size} is not 2*W*W + 1")
    return Observation(vec[:n].reshape(width, width), vec[n:2 * n].reshape(width, width),
                       float(vec[-1]), fov)


def feature_length(width: int = DEFAULT_WIDTH) -> int:
    return 2 * width * width + 1
