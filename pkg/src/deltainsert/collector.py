"""Automatic dataset generation: free-space sweeps plus a clamped wiggle near the socket.

Every record is labeled with ``delta(goal, current)``, so a record is correct
no matter how poor the motion that produced it was.

Dataset file layout (UTF-8 text, one line each)::

    deltainsert-dataset 1 <W> <fov_side>
    <episode> <step> <provenance> <contact> <current x y z psi> <goal x y z psi>
        <label dx dy dz dpsi> <gripper_height> <raster_a> <raster_b>

Fields are separated by single spaces and floats use ``repr`` so they parse
back exactly. A raster is its row-major cells as comma-separated runs
``value*count`` (``*count`` omitted when 1).
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .geometry import DeltaPose, Pose4, delta, wrap_angle
from .observation import DEFAULT_FOV, DEFAULT_WIDTH, Observation, render_batch
from .world import (SceneConfig, SceneState, jitter_distractors, make_scene, resolve_path)

FREE_SPACE = "free_space"
CLOSE_CONTACT = "close_contact"
PROVENANCES = (FREE_SPACE, CLOSE_CONTACT)
DATASET_MAGIC = "deltainsert-dataset"
DATASET_VERSION = 1


@dataclass(frozen=True, eq=False)
class DatasetRecord:
    episode_id: int
    step: int
    observation: Observation
    current: Pose4
    goal: Pose4
    label: DeltaPose
    provenance: str
    contact: bool = False

    def __eq__(self, other):
        if not isinstance(other, DatasetRecord):
            return NotImplemented
        return (self.episode_id == other.episode_id and self.step == other.step
                and self.provenance == other.provenance and self.contact == other.contact
                and self.current == other.current and self.goal == other.goal
                and self.label == other.label and self.observation == other.observation)


@dataclass(frozen=True)
class CollectionConfig:
    free_xy: float = 0.08
    free_psi: float = math.radians(40.0)
    free_z: tuple = (0.01, 0.12)        # above the goal height
    contact_xy: float = 0.01
    contact_psi: float = math.radians(10.0)
    contact_z_above_top: float = 0.01
    wiggle_step: float = 0.002
    wiggle_psi: float = math.radians(2.0)
    wiggle_restart: int = 60            # walk steps before restarting from a fresh pose
    free_records: int = 800             # per scene
    contact_records: int = 200          # per scene
    capture_every: int = 4              # 1 mm substeps at 5 cm/s -> 12.5 Hz
    jitter_every: int = 25              # free-space targets between distractor shuffles
    width: int = DEFAULT_WIDTH
    fov: float = DEFAULT_FOV

    def __post_init__(self):
        if min(self.free_xy, self.free_psi, self.contact_xy, self.contact_psi,
               self.contact_z_above_top, self.wiggle_step, self.wiggle_psi) <= 0:
            raise ValueError("collection boxes and steps must be positive")
        lo, hi = self.free_z
        if not 0 < lo < hi:
            raise ValueError("free-space z range must satisfy 0 < low < high")
        if min(self.capture_every, self.jitter_every, self.wiggle_restart) < 1:
            raise ValueError("cadence settings must be at least 1")
        if self.free_records < 0 or self.contact_records < 0:
            raise ValueError("record counts must be non-negative")


def _make_records(scene: SceneState, poses: Sequence[Pose4], contacts: Sequence[bool],
                  provenance: str, episode_id: int, first_step: int,
                  config: CollectionConfig) -> list:
    if not poses:
        return []
    arr = np.array([p.as_array() for p in poses])
    rasters = render_batch(scene, arr, config.width, config.fov)
    goal = scene.goal
    return [DatasetRecord(episode_id, first_step + i,
                          Observation(rasters[i, 0], rasters[i, 1], p.z, config.fov),
                          p, goal, delta(goal, p), provenance, bool(c))
            for i, (p, c) in enumerate(zip(poses, contacts))]


def _free_target(goal: Pose4, config: CollectionConfig, rng: np.random.Generator) -> Pose4:
    dx, dy = rng.uniform(-config.free_xy, config.free_xy, size=2)
    dz = rng.uniform(*config.free_z)
    dpsi = rng.uniform(-config.free_psi, config.free_psi)
    return Pose4(goal.x + dx, goal.y + dy, goal.z + dz, goal.psi + dpsi)


def collect_free_space(scene: SceneState, config: CollectionConfig, rng: np.random.Generator,
                       n_records: Optional[int] = None, episode_id: int = 0) -> list:
    """Sweep between random poses in the box around the goal, capturing along the way."""
    n_records = config.free_records if n_records is None else n_records
    records: list = []
    pose = _free_target(scene.goal, config, rng)
    substep = 0
    targets = 0
    while len(records) < n_records:
        if targets and targets % config.jitter_every == 0:
            scene = jitter_distractors(scene, rng)
        target = _free_target(scene.goal, config, rng)
        targets += 1
        poses, contacts = [], []
        for achieved, events in resolve_path(scene, pose, target):
            substep += 1
            if substep % config.capture_every == 0:
                poses.append(achieved)
                contacts.append(events.any)
        pose = target
        room = n_records - len(records)
        records.extend(_make_records(scene, poses[:room], contacts[:room], FREE_SPACE,
                                     episode_id, len(records), config))
    return records


def _contact_start(scene: SceneState, config: CollectionConfig,
                   rng: np.random.Generator) -> Pose4:
    g = scene.goal
    top = scene.socket_spec.block_top
    dx, dy = rng.uniform(-config.contact_xy, config.contact_xy, size=2)
    z = top + rng.uniform(0.0, config.contact_z_above_top)
    return Pose4(g.x + dx, g.y + dy, z, g.psi + rng.uniform(-config.contact_psi, config.contact_psi))


def collect_close_contact(scene: SceneState, config: CollectionConfig, rng: np.random.Generator,
                          n_records: Optional[int] = None, episode_id: int = 0) -> list:
    """Clamped random walk around the goal, pressing down while it wiggles.

    Vertical steps are drawn from [-2s, +s] for wiggle step s, so the plug keeps
    settling onto the surface and slips into the hole whenever it happens to line
    up. The walk restarts from a fresh pose every ``wiggle_restart`` steps so it
    does not sit at the bottom of the hole for the rest of the run.
    """
    n_records = config.contact_records if n_records is None else n_records
    g = scene.goal
    top = scene.socket_spec.block_top
    z_lo, z_hi = g.z, top + config.contact_z_above_top
    s, r = config.wiggle_step, config.contact_xy
    records: list = []
    pose = _contact_start(scene, config, rng)
    steps = 0
    while len(records) < n_records:
        if steps and steps % config.wiggle_restart == 0:
            pose = _contact_start(scene, config, rng)
        steps += 1
        dx, dy = rng.uniform(-s, s, size=2)
        dz = rng.uniform(-2 * s, s)
        dpsi = rng.uniform(-config.wiggle_psi, config.wiggle_psi)
        rel_psi = wrap_angle(pose.psi + dpsi - g.psi)
        rel_psi = min(max(rel_psi, -config.contact_psi), config.contact_psi)
        target = Pose4(min(max(pose.x + dx, g.x - r), g.x + r),
                       min(max(pose.y + dy, g.y - r), g.y + r),
                       min(max(pose.z + dz, z_lo), z_hi), g.psi + rel_psi)
        path = resolve_path(scene, pose, target)
        pose = path[-1][0]
        room = n_records - len(records)
        path = path[:room]
        records.extend(_make_records(scene, [p for p, _ in path], [e.any for _, e in path],
                                     CLOSE_CONTACT, episode_id, len(records), config))
    return records


def collect_dataset(scene_configs: Sequence[SceneConfig], scenes_per_config: int,
                    config: CollectionConfig, rng: np.random.Generator,
                    include_contact: bool = True) -> list:
    """Collect over several random placements of every scene configuration.

    Each placement gets its own child generator, and its records carry the
    placement index as ``episode_id``.
    """
    records: list = []
    placements = [(c, i) for c in scene_configs for i in range(scenes_per_config)]
    children = rng.spawn(len(placements))
    for eid, ((cfg, _), child) in enumerate(zip(placements, children)):
        scene = make_scene(cfg, child)
        free_rng, contact_rng = child.spawn(2)
        records.extend(collect_free_space(scene, config, free_rng, episode_id=eid))
        if include_contact:
            got = collect_close_contact(scene, config, contact_rng, episode_id=eid)
            base = config.free_records
            records.extend(DatasetRecord(r.episode_id, base + r.step, r.observation, r.current,
                                         r.goal, r.label, r.provenance, r.contact) for r in got)
    return records


# --------------------------------------------------------------------------
# files

def _fmt(v: float) -> str:
    return repr(float(v))


def _encode_raster(a: np.ndarray) -> str:
    flat = a.ravel()
    out = []
    i, n = 0, flat.size
    while i < n:
        j = i + 1
        while j < n and flat[j] == flat[i]:
            j += 1
        count = j - i
        out.append(_fmt(flat[i]) if count == 1 else f"{_fmt(flat[i])}*{count}")
        i = j
    return ",".join(out)


def _decode_raster(text: str, width: int) -> np.ndarray:
    values = []
    for run in text.split(","):
        v, _, c = run.partition("*")
        values.extend([float(v)] * (int(c) if c else 1))
    if len(values) != width * width:
        raise ValueError(f"raster has {len(values)} cells, expected {width * width}")
    return np.array(values).reshape(width, width)


def dataset_header(width: int, fov: float) -> str:
    return f"{DATASET_MAGIC} {DATASET_VERSION} {width} {_fmt(fov)}"


def encode_record(r: DatasetRecord) -> str:
    o = r.observation
    parts = [str(r.episode_id), str(r.step), r.provenance, "1" if r.contact else "0"]
    parts += [_fmt(v) for v in r.current.as_array()]
    parts += [_fmt(v) for v in r.goal.as_array()]
    parts += [_fmt(v) for v in r.label.as_array()]
    parts += [_fmt(o.gripper_height), _encode_raster(o.raster_a), _encode_raster(o.raster_b)]
    return " ".join(parts)


def write_dataset(records: Iterable[DatasetRecord], path, width: int = DEFAULT_WIDTH,
                  fov: float = DEFAULT_FOV) -> None:
    records = list(records)
    for r in records:
        if r.observation.width != width or r.observation.fov_side != fov:
            raise ValueError("record raster geometry does not match the file header")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dataset_header(width, fov) + "\n")
        for r in records:
            fh.write(encode_record(r) + "\n")


class DatasetFormatError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _finite(values, line):
    for v in values:
        if not math.isfinite(v):
            raise DatasetFormatError(line, "non-finite value")
    return values


def decode_record(text: str, width: int, fov: float, line: int = 0) -> DatasetRecord:
    parts = text.split(" ")
    if len(parts) != 19:
        raise DatasetFormatError(line, f"expected 19 fields, found {len(parts)}")
    try:
        eid, step = int(parts[0]), int(parts[1])
        prov = parts[2]
        if prov not in PROVENANCES:
            raise ValueError(f"unknown provenance {prov!r}")
        if parts[3] not in ("0", "1"):
            raise ValueError("contact flag must be 0 or 1")
        nums = _finite([float(v) for v in parts[4:17]], line)
        ra = _decode_raster(parts[17], width)
        rb = _decode_raster(parts[18], width)
        _finite(ra.ravel(), line)
        _finite(rb.ravel(), line)
        current = Pose4(*nums[0:4])
        goal = Pose4(*nums[4:8])
        label = DeltaPose(*nums[8:12])
    except DatasetFormatError:
        raise
    except ValueError as exc:
        raise DatasetFormatError(line, str(exc)) from None
    if label != delta(goal, current):
        raise DatasetFormatError(line, "label does not equal delta(goal, current)")
    return DatasetRecord(eid, step, Observation(ra, rb, nums[12], fov), current, goal, label,
                         prov, parts[3] == "1")


def parse_dataset_header(text: str, line: int = 1):
    parts = text.split(" ")
    if len(parts) != 4 or parts[0] != DATASET_MAGIC:
        raise DatasetFormatError(line, "not a dataset file header")
    try:
        version, width, fov = int(parts[1]), int(parts[2]), float(parts[3])
    except ValueError:
        raise DatasetFormatError(line, "malformed header fields") from None
    if version != DATASET_VERSION:
        raise DatasetFormatError(line, f"unsupported dataset version {version}")
    if width < 1 or not fov > 0:
        raise DatasetFormatError(line, "invalid raster geometry in header")
    return width, fov


def read_dataset(path) -> list:
    text = Path(path).read_text(encoding="utf-8")
    if not text:
        raise DatasetFormatError(1, "empty file")
    if not text.endswith("\n"):
        raise DatasetFormatError(text.count("\n") + 1, "truncated line")
    lines = text[:-1].split("\n")
    width, fov = parse_dataset_header(lines[0])
    return [decode_record(t, width, fov, n) for n, t in enumerate(lines[1:], start=2)]


# --------------------------------------------------------------------------
# summaries

@dataclass
class DatasetStats:
    total: int
    counts: dict
    fractions: dict
    contact_fraction: float
    histograms: dict = field(default_factory=dict)
    bin_edges: dict = field(default_factory=dict)


HIST_RANGES = {"dx": (-0.1, 0.1), "dy": (-0.1, 0.1), "dz": (-0.15, 0.05),
               "dpsi": (-math.pi, math.pi)}


def dataset_stats(records: Sequence[DatasetRecord], bins: int = 20) -> DatasetStats:
    """Provenance split, contact share and per-axis label histograms.

    Histogram ranges are fixed and wider than the collection boxes; labels
    outside a range are counted in the outermost bins.
    """
    n = len(records)
    counts = Counter(r.provenance for r in records)
    counts = {p: counts.get(p, 0) for p in PROVENANCES}
    fractions = {p: (c / n if n else 0.0) for p, c in counts.items()}
    contact = sum(r.contact for r in records) / n if n else 0.0
    labels = np.array([r.label.as_array() for r in records]).reshape(-1, 4)
    hists, edges = {}, {}
    for i, name in enumerate(("dx", "dy", "dz", "dpsi")):
        lo, hi = HIST_RANGES[name]
        e = np.linspace(lo, hi, bins + 1)
        h, _ = np.histogram(np.clip(labels[:, i], lo, hi), bins=e)
        hists[name] = h.tolist()
        edges[name] = e.tolist()
    return DatasetStats(n, counts, fractions, contact, hists, edges)
