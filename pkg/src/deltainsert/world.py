"""Kinematic insertion scene: socket block, plug, distractors and contact clamping.

Heights are measured from the table; a pose's ``z`` is the height of the plug
bottom. The block top acts as a floor at ``block_top`` everywhere the plug can
reach, with a single opening (the hole) centered on the socket pose. Below the
block top the plug footprint must stay inside the opening, which is the
nominal hole cross-section grown by ``clearance`` on every side.

Contact is quasi-static: commanded motions are split into substeps of at most
1 mm / 1 degree and each substep is clamped so the achieved pose never
penetrates the block.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .geometry import Pose4, quantize, rotation, wrap_angle, wrap_angles

SUBSTEP_TRANSLATION = 1e-3
SUBSTEP_ROTATION = math.radians(1.0)
# Containment slack absorbing lattice snapping of clamped poses.
CONTAINMENT_EPS = 1e-8
# Spacing used when scanning a sliding substep for the moment it drops into the hole.
ENTRY_SCAN_STEP = 1e-5
ENTRY_SCAN_ANGLE = math.radians(0.01)
SUCCESS_TOL = 1e-9


@dataclass(frozen=True)
class CrossSection:
    """Plug or hole outline: a circle (``radius``) or a ``width`` x ``height`` rectangle."""

    kind: str
    radius: float = 0.0
    width: float = 0.0
    height: float = 0.0

    def __post_init__(self):
        if self.kind == "circle":
            if not self.radius > 0:
                raise ValueError("circle radius must be positive")
        elif self.kind == "rectangle":
            if not (self.width > 0 and self.height > 0):
                raise ValueError("rectangle width and height must be positive")
        else:
            raise ValueError(f"unknown cross-section kind {self.kind!r}")

    @classmethod
    def circle(cls, radius: float) -> "CrossSection":
        return cls("circle", radius=radius)

    @classmethod
    def rectangle(cls, width: float, height: float) -> "CrossSection":
        return cls("rectangle", width=width, height=height)

    @property
    def bounding_radius(self) -> float:
        if self.kind == "circle":
            return self.radius
        return 0.5 * math.hypot(self.width, self.height)

    def as_dict(self) -> dict:
        if self.kind == "circle":
            return {"kind": "circle", "radius": self.radius}
        return {"kind": "rectangle", "width": self.width, "height": self.height}


@dataclass(frozen=True)
class SocketSpec:
    hole: CrossSection
    clearance: float = 0.0005
    psi_tol: float = math.radians(3.0)
    block_half_extent: float = 0.025
    block_top: float = 0.02
    hole_depth: float = 0.0125
    insertion_depth: float = 0.008

    def __post_init__(self):
        for name in ("clearance", "block_half_extent", "block_top", "hole_depth",
                     "insertion_depth"):
            object.__setattr__(self, name, quantize(getattr(self, name)))
        if not self.clearance > 0:
            raise ValueError("clearance must be positive")
        if not (self.hole_depth > 0 and self.block_top > 0):
            raise ValueError("hole_depth and block_top must be positive")
        if self.hole_depth > self.block_top:
            raise ValueError("hole deeper than the block is tall")
        if not 0 < self.insertion_depth <= self.hole_depth:
            raise ValueError("insertion_depth must lie in (0, hole_depth]")
        if not self.psi_tol > 0:
            raise ValueError("psi_tol must be positive")
        if self.hole.kind == "circle":
            reach = self.hole.radius + self.clearance
        else:
            reach = 0.5 * max(self.hole.width, self.hole.height) + self.clearance
        if reach >= self.block_half_extent:
            raise ValueError("hole does not fit inside the block footprint")

    @property
    def hole_floor(self) -> float:
        return self.block_top - self.hole_depth

    @property
    def block_radius(self) -> float:
        return self.block_half_extent * math.sqrt(2.0)


@dataclass(frozen=True)
class Distractor:
    """Oriented box resting on the table; only seen by the cameras."""

    x: float
    y: float
    half_x: float
    half_y: float
    top: float
    psi: float = 0.0

    def __post_init__(self):
        for name in ("x", "y", "half_x", "half_y", "top"):
            object.__setattr__(self, name, quantize(getattr(self, name)))

    @property
    def radius(self) -> float:
        return math.hypot(self.half_x, self.half_y)


@dataclass(frozen=True)
class ContactEvents:
    surface_contact: bool = False
    wall_contact: bool = False
    clamped_axes: frozenset = frozenset()

    def merge(self, other: "ContactEvents") -> "ContactEvents":
        return ContactEvents(self.surface_contact or other.surface_contact,
                             self.wall_contact or other.wall_contact,
                             self.clamped_axes | other.clamped_axes)

    @property
    def any(self) -> bool:
        return self.surface_contact or self.wall_contact


NO_CONTACT = ContactEvents()


@dataclass(frozen=True)
class SceneConfig:
    """Recipe for random scenes sharing one socket/plug geometry."""

    name: str
    socket: SocketSpec
    plug: Optional[CrossSection] = None
    nominal: tuple = (0.5, 0.0, 0.0)
    randomize_xy: tuple = (0.08, 0.08)
    randomize_psi: float = math.radians(30.0)
    workspace: tuple = (0.3, 0.7, -0.2, 0.2)
    distractor_count: tuple = (1, 3)
    distractor_half_size: tuple = (0.008, 0.02)
    distractor_height: tuple = (0.005, 0.025)
    distractor_distance: tuple = (0.07, 0.12)
    distractor_jitter: float = 0.01

    def __post_init__(self):
        xmin, xmax, ymin, ymax = self.workspace
        r = self.socket.block_radius
        nx, ny, _ = self.nominal
        dx, dy = self.randomize_xy
        if dx < 0 or dy < 0 or self.randomize_psi < 0:
            raise ValueError("randomization ranges must be non-negative")
        if xmax - xmin < 2 * r or ymax - ymin < 2 * r:
            raise ValueError("workspace is smaller than the socket block")
        if nx - dx - r < xmin or nx + dx + r > xmax or ny - dy - r < ymin or ny + dy + r > ymax:
            raise ValueError("socket randomization range leaves the workspace")
        lo, hi = self.distractor_count
        if not 0 <= lo <= hi:
            raise ValueError("invalid distractor count range")
        if self.distractor_distance[0] < r + self.distractor_half_size[1] * math.sqrt(2):
            raise ValueError("distractor ring overlaps the socket block")

    @property
    def plug_section(self) -> CrossSection:
        return self.plug if self.plug is not None else self.socket.hole


@dataclass(frozen=True)
class SceneState:
    socket_spec: SocketSpec
    socket_pose: tuple  # (x, y, psi) on the table
    plug: CrossSection
    distractors: tuple = ()
    goal: Pose4 = field(default=None)
    name: str = ""

    def __post_init__(self):
        sx, sy, spsi = self.socket_pose
        pose = (quantize(sx), quantize(sy), wrap_angle(spsi))
        object.__setattr__(self, "socket_pose", pose)
        object.__setattr__(self, "distractors", tuple(self.distractors))
        spec = self.socket_spec
        goal = Pose4(pose[0], pose[1], spec.block_top - spec.insertion_depth, pose[2])
        if self.goal is not None and self.goal != goal:
            raise ValueError("goal pose inconsistent with socket pose")
        object.__setattr__(self, "goal", goal)
        if _plug_margin(self) < 0:
            raise ValueError("plug does not fit into the hole")

    @cached_property
    def max_height(self) -> float:
        return max([self.socket_spec.block_top] + [d.top for d in self.distractors])

    @cached_property
    def _psi_limit(self) -> float:
        return _rect_psi_limit(self)


# --------------------------------------------------------------------------
# containment

def _opening(spec: SocketSpec):
    if spec.hole.kind == "circle":
        return spec.hole.radius + spec.clearance, None
    return 0.5 * spec.hole.width + spec.clearance, 0.5 * spec.hole.height + spec.clearance


def _rect_extents(plug: CrossSection, th):
    a, b = 0.5 * plug.width, 0.5 * plug.height
    c, s = np.abs(np.cos(th)), np.abs(np.sin(th))
    return a * c + b * s, a * s + b * c


def _corners(plug: CrossSection, th):
    a, b = 0.5 * plug.width, 0.5 * plug.height
    c, s = np.cos(th), np.sin(th)
    out = []
    for sa, sb in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
        out.append((sa * a * c - sb * b * s, sa * a * s + sb * b * c))
    return out


def inside_socket_frame(scene: SceneState, u, v, th):
    """Vectorised containment test with plug center (u, v) and yaw ``th`` in the socket frame."""
    spec, plug = scene.socket_spec, scene.plug
    u, v, th = np.asarray(u, float), np.asarray(v, float), np.asarray(th, float)
    A, B = _opening(spec)
    if spec.hole.kind == "circle":
        if plug.kind == "circle":
            return np.hypot(u, v) + plug.radius <= A + CONTAINMENT_EPS
        ok = np.ones(np.broadcast(u, v, th).shape, dtype=bool)
        for cx, cy in _corners(plug, th):
            ok &= np.hypot(u + cx, v + cy) <= A + CONTAINMENT_EPS
        return ok
    if plug.kind == "circle":
        ex = ey = plug.radius
        ang_ok = True
    else:
        ex, ey = _rect_extents(plug, th)
        ang_ok = np.abs(th) <= spec.psi_tol + 1e-12
    return ((np.abs(u) + ex <= A + CONTAINMENT_EPS)
            & (np.abs(v) + ey <= B + CONTAINMENT_EPS) & ang_ok)


def to_socket_frame(scene: SceneState, x, y, psi):
    sx, sy, spsi = scene.socket_pose
    c, s = math.cos(spsi), math.sin(spsi)
    dx, dy = np.asarray(x, float) - sx, np.asarray(y, float) - sy
    return c * dx + s * dy, -s * dx + c * dy, wrap_angles(np.asarray(psi, float) - spsi)


def from_socket_frame(scene: SceneState, u, v, th):
    sx, sy, spsi = scene.socket_pose
    c, s = math.cos(spsi), math.sin(spsi)
    return sx + c * u - s * v, sy + s * u + c * v, wrap_angle(th + spsi)


def footprint_inside(plug: CrossSection, plug_pose: Pose4, scene: SceneState) -> bool:
    """Whether the plug outline at ``plug_pose`` lies inside the hole opening."""
    if plug != scene.plug:
        scene = replace(scene, plug=plug)
    u, v, th = to_socket_frame(scene, plug_pose.x, plug_pose.y, plug_pose.psi)
    return bool(inside_socket_frame(scene, u, v, th))


def _plug_margin(scene: SceneState) -> float:
    spec, plug = scene.socket_spec, scene.plug
    A, B = _opening(spec)
    if spec.hole.kind == "circle":
        return A - plug.bounding_radius
    if plug.kind == "circle":
        return min(A, B) - plug.radius
    return min(A - 0.5 * plug.width, B - 0.5 * plug.height)


def _rect_psi_limit(scene: SceneState) -> float:
    """Largest |yaw| at which a rectangular plug still fits a rectangular hole."""
    spec, plug = scene.socket_spec, scene.plug
    A, B = _opening(spec)
    # strict fit, so a plug clamped to the limit keeps the containment slack for rounding
    def ok(t):
        ex, ey = _rect_extents(plug, t)
        return ex <= A and ey <= B

    if ok(spec.psi_tol):
        return spec.psi_tol
    lo, hi = 0.0, spec.psi_tol
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return lo


def _project_inside(scene: SceneState, u: float, v: float, th: float):
    """Closest admissible in-hole placement to the commanded (u, v, th)."""
    spec, plug = scene.socket_spec, scene.plug
    A, B = _opening(spec)
    if spec.hole.kind == "circle" and plug.kind == "circle":
        lim = A - plug.radius
        r = math.hypot(u, v)
        if r > lim:
            u, v = u * lim / r, v * lim / r
        return u, v, th
    if spec.hole.kind == "rectangle":
        if plug.kind == "circle":
            ex = ey = plug.radius
        else:
            lim = scene._psi_limit
            th = min(max(th, -lim), lim)
            ex, ey = (float(e) for e in _rect_extents(plug, th))
        mx, my = max(A - ex, 0.0), max(B - ey, 0.0)
        return min(max(u, -mx), mx), min(max(v, -my), my), th
    # rectangular plug in a round hole: shrink toward the hole center
    if bool(inside_socket_frame(scene, u, v, th)):
        return u, v, th
    lo, hi = 0.0, 1.0
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if bool(inside_socket_frame(scene, u * mid, v * mid, th)) else (lo, mid)
    return u * lo, v * lo, th


# --------------------------------------------------------------------------
# motion

def is_penetrating(scene: SceneState, p: Pose4) -> bool:
    spec = scene.socket_spec
    if p.z >= spec.block_top:
        return False
    if p.z < spec.hole_floor:
        return True
    return not footprint_inside(scene.plug, p, scene)


def substep_count(start: Pose4, target: Pose4) -> int:
    trans = math.sqrt((target.x - start.x) ** 2 + (target.y - start.y) ** 2
                      + (target.z - start.z) ** 2)
    rot = abs(wrap_angle(target.psi - start.psi))
    n = max(trans / SUBSTEP_TRANSLATION, rot / SUBSTEP_ROTATION)
    return max(1, math.ceil(n - 1e-9))


def _lerp(start: Pose4, target: Pose4, dpsi: float, t: float):
    return (start.x + t * (target.x - start.x), start.y + t * (target.y - start.y),
            start.z + t * (target.z - start.z), start.psi + t * dpsi)


def _clamp_in_hole(scene, x, y, z, psi, events_axes):
    """Clamp a commanded in-hole placement; returns the pose and contact flags."""
    spec = scene.socket_spec
    u, v, th = (float(a) for a in to_socket_frame(scene, x, y, psi))
    pu, pv, pth = _project_inside(scene, u, v, th)
    wall = (pu, pv, pth) != (u, v, th)
    if wall:
        x2, y2, psi2 = from_socket_frame(scene, pu, pv, pth)
    else:
        x2, y2, psi2 = x, y, psi
    surface = z < spec.hole_floor
    pose = Pose4(x2, y2, max(z, spec.hole_floor), psi2)
    if wall:
        if abs(pose.x - x) > 1e-12:
            events_axes.add("x")
        if abs(pose.y - y) > 1e-12:
            events_axes.add("y")
        if abs(wrap_angle(pose.psi - psi)) > 1e-12:
            events_axes.add("psi")
        if not events_axes & {"x", "y", "psi"}:
            # the projection moved the plug by less than the reporting threshold
            wall = False
    if surface:
        events_axes.add("z")
    return pose, surface, wall


def _entry_fraction(scene: SceneState, c0, c1) -> Optional[float]:
    """First fraction of the commanded segment ``c0 -> c1`` at which the plug drops in.

    Dropping in needs the commanded height below the block top while the
    footprint fits the opening. Returns None when the plug keeps sliding.
    """
    top = scene.socket_spec.block_top
    z0, z1 = c0[2], c1[2]
    if z0 >= top and z1 >= top:
        return None
    t_lo = 0.0 if z0 < top else (z0 - top) / (z0 - z1)
    # cheap rejection: the segment never comes near the hole center
    sx, sy, _ = scene.socket_pose
    reach = _opening_reach(scene) + scene.plug.bounding_radius
    px, py = c0[0] - sx, c0[1] - sy
    dx, dy = c1[0] - c0[0], c1[1] - c0[1]
    L2 = dx * dx + dy * dy
    t_star = 0.0 if L2 == 0 else min(max(-(px * dx + py * dy) / L2, 0.0), 1.0)
    if math.hypot(px + t_star * dx, py + t_star * dy) > reach:
        return None
    dpsi = c1[3] - c0[3]
    n = max(2, math.ceil(max(math.sqrt(L2) / ENTRY_SCAN_STEP,
                             abs(dpsi) / ENTRY_SCAN_ANGLE) * (1.0 - t_lo)) + 1)
    t = np.linspace(t_lo, 1.0, n)
    x = c0[0] + t * dx
    y = c0[1] + t * dy
    psi = c0[3] + t * dpsi
    zc = z0 + t * (z1 - z0)
    u, v, th = to_socket_frame(scene, x, y, psi)
    ok = inside_socket_frame(scene, u, v, th) & (zc < top)
    if not ok.any():
        return None
    return float(t[int(np.argmax(ok))])


def _opening_reach(scene: SceneState) -> float:
    A, B = _opening(scene.socket_spec)
    return A if B is None else math.hypot(A, B)


def resolve_path(scene: SceneState, start: Pose4, target: Pose4):
    """Achieved pose and contact events after every substep of ``start -> target``."""
    if is_penetrating(scene, start):
        raise ValueError(f"start pose {start} penetrates the socket block")
    spec = scene.socket_spec
    top = spec.block_top
    n = substep_count(start, target)
    dpsi = wrap_angle(target.psi - start.psi)
    achieved = start
    prev_cmd = _lerp(start, target, dpsi, 0.0)
    out = []
    for i in range(1, n + 1):
        cmd = _lerp(start, target, dpsi, i / n) if i < n else (
            target.x, target.y, target.z, start.psi + dpsi)
        x, y, z, psi = cmd
        axes: set = set()
        surface = wall = False
        if z >= top:
            achieved = Pose4(x, y, z, psi)
        elif achieved.z < top:
            achieved, surface, wall = _clamp_in_hole(scene, x, y, z, psi, axes)
        else:
            t_in = _entry_fraction(scene, prev_cmd, cmd)
            if t_in is None:
                achieved = Pose4(x, y, top, psi)
                surface = True
                axes.add("z")
            else:
                achieved, surface, wall = _clamp_in_hole(scene, x, y, z, psi, axes)
        prev_cmd = cmd
        out.append((achieved, ContactEvents(surface, wall, frozenset(axes))))
    return out


def resolve_motion(scene: SceneState, start: Pose4, target: Pose4):
    """Execute ``start -> target`` under contact clamping.

    Returns the achieved pose and the union of contact events over all
    substeps.
    """
    top = scene.socket_spec.block_top
    if start.z >= top and target.z >= top:
        return target, NO_CONTACT
    path = resolve_path(scene, start, target)
    events = NO_CONTACT
    for _, ev in path:
        events = events.merge(ev)
    return path[-1][0], events


def goal_pose(scene: SceneState) -> Pose4:
    return scene.goal


def is_success(scene: SceneState, p: Pose4) -> bool:
    spec = scene.socket_spec
    return (p.z <= spec.block_top - spec.insertion_depth + SUCCESS_TOL
            and footprint_inside(scene.plug, p, scene))


def insertion_depth_of(scene: SceneState, p: Pose4) -> float:
    return max(0.0, scene.socket_spec.block_top - p.z)


# --------------------------------------------------------------------------
# scene generation

def _sample_distractors(cfg: SceneConfig, socket_xy, rng: np.random.Generator, count: int):
    spec = cfg.socket
    out = []
    lo_d, hi_d = cfg.distractor_distance
    for _ in range(count):
        for _attempt in range(50):
            ang = rng.uniform(-math.pi, math.pi)
            dist = rng.uniform(lo_d, hi_d)
            hx, hy = rng.uniform(*cfg.distractor_half_size, size=2)
            d = Distractor(socket_xy[0] + dist * math.cos(ang), socket_xy[1] + dist * math.sin(ang),
                           float(hx), float(hy), float(rng.uniform(*cfg.distractor_height)),
                           float(rng.uniform(-math.pi / 2, math.pi / 2)))
            if math.hypot(d.x - socket_xy[0], d.y - socket_xy[1]) <= spec.block_radius + d.radius:
                continue
            if any(math.hypot(d.x - o.x, d.y - o.y) <= d.radius + o.radius for o in out):
                continue
            out.append(d)
            break
    return tuple(out)


def make_scene(config: SceneConfig, rng: np.random.Generator) -> SceneState:
    """Random scene: socket placed uniformly in the configured ranges, distractors around it."""
    nx, ny, npsi = config.nominal
    dx, dy = config.randomize_xy
    sx = nx + (rng.uniform(-dx, dx) if dx > 0 else 0.0)
    sy = ny + (rng.uniform(-dy, dy) if dy > 0 else 0.0)
    dpsi = config.randomize_psi
    spsi = npsi + (rng.uniform(-dpsi, dpsi) if dpsi > 0 else 0.0)
    lo, hi = config.distractor_count
    count = int(rng.integers(lo, hi + 1))
    distractors = _sample_distractors(config, (sx, sy), rng, count)
    return SceneState(config.socket, (sx, sy, spsi), config.plug_section, distractors,
                      name=config.name)


def jitter_distractors(scene: SceneState, rng: np.random.Generator,
                       amount: float = 0.01) -> SceneState:
    """Nudge every distractor by up to ``amount`` while keeping it off the block."""
    spec = scene.socket_spec
    sx, sy, _ = scene.socket_pose
    moved = []
    for d in scene.distractors:
        for _attempt in range(20):
            jx, jy = rng.uniform(-amount, amount, size=2)
            jpsi = rng.uniform(-0.3, 0.3)
            nd = replace(d, x=d.x + float(jx), y=d.y + float(jy), psi=d.psi + float(jpsi))
            if math.hypot(nd.x - sx, nd.y - sy) > spec.block_radius + nd.radius:
                moved.append(nd)
                break
        else:
            moved.append(d)
    return replace(scene, distractors=tuple(moved), goal=None)


class PerturbationSkipped(ValueError):
    """Raised when a socket perturbation is requested while the plug is inserted."""


def perturb_socket(scene: SceneState, rng: np.random.Generator, max_shift: float,
                   max_rot: float, current_plug: Pose4) -> SceneState:
    """Shift and rotate the socket (and jitter the distractors) mid-episode.

    Only allowed while the plug bottom is at or above the block top.
    """
    if current_plug.z < scene.socket_spec.block_top:
        raise PerturbationSkipped("plug is inside the hole; socket perturbation skipped")
    shift_x = quantize(rng.uniform(-max_shift, max_shift)) if max_shift > 0 else 0.0
    shift_y = quantize(rng.uniform(-max_shift, max_shift)) if max_shift > 0 else 0.0
    rot = float(rng.uniform(-max_rot, max_rot)) if max_rot > 0 else 0.0
    sx, sy, spsi = scene.socket_pose
    moved = replace(scene, socket_pose=(sx + shift_x, sy + shift_y, spsi + rot), goal=None,
                    distractors=tuple(replace(d, x=d.x + shift_x, y=d.y + shift_y)
                                      for d in scene.distractors))
    moved = jitter_distractors(moved, rng)
    # the plug sits above the block top, so the moved block cannot intersect it
    assert not is_penetrating(moved, current_plug)
    return moved


# --------------------------------------------------------------------------
# height field

def height_at(scene: SceneState, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Scene height (meters above the table) at world points."""
    spec = scene.socket_spec
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    sx, sy, spsi = scene.socket_pose
    c, s = math.cos(spsi), math.sin(spsi)
    dx, dy = x - sx, y - sy
    u = c * dx + s * dy
    v = -s * dx + c * dy
    h = spec.block_half_extent
    on_block = (np.abs(u) <= h) & (np.abs(v) <= h)
    A, B = _opening(spec)
    if B is None:
        in_hole = u * u + v * v <= A * A
    else:
        in_hole = (np.abs(u) <= A) & (np.abs(v) <= B)
    out = np.where(on_block & ~in_hole, spec.block_top, 0.0)
    for d in scene.distractors:
        cd, sd = math.cos(d.psi), math.sin(d.psi)
        ex, ey = x - d.x, y - d.y
        du = cd * ex + sd * ey
        dv = -sd * ex + cd * ey
        hit = (np.abs(du) <= d.half_x) & (np.abs(dv) <= d.half_y)
        out = np.where(hit, np.maximum(out, d.top), out)
    return out


# --------------------------------------------------------------------------
# plain-dict round trip (SI units), used by trace files

def socket_to_dict(spec: SocketSpec) -> dict:
    d = asdict(spec)
    d["hole"] = spec.hole.as_dict()
    return d


def socket_from_dict(d: dict) -> SocketSpec:
    d = dict(d)
    d["hole"] = CrossSection(**d["hole"])
    return SocketSpec(**d)


def scene_to_dict(scene: SceneState) -> dict:
    return {"name": scene.name, "socket": socket_to_dict(scene.socket_spec),
            "socket_pose": list(scene.socket_pose), "plug": scene.plug.as_dict(),
            "distractors": [asdict(d) for d in scene.distractors]}


def scene_from_dict(d: dict) -> SceneState:
    return SceneState(socket_from_dict(d["socket"]), tuple(d["socket_pose"]),
                      CrossSection(**d["plug"]), tuple(Distractor(**x) for x in d["distractors"]),
                      name=d.get("name", ""))
