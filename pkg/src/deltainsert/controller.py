"""Coarse-to-fine insertion controller, the direct-motion baseline and the episode loop."""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import DeltaPose, Pose4, apply, delta, planar_distance
from .observation import DEFAULT_FOV, DEFAULT_WIDTH, render
from .world import (ContactEvents, PerturbationSkipped, SceneState, is_penetrating, is_success,
                    perturb_socket, resolve_motion, scene_from_dict, scene_to_dict)


class Phase(enum.Enum):
    COARSE_ALIGNMENT = "coarse"
    FINE_VERTICAL = "vertical"
    CLOSE_CONTACT = "contact"


@dataclass(frozen=True)
class ControllerParams:
    H: float = 0.06
    d_z: float = 0.005
    xy_thresh: float = 0.02
    psi_thresh: float = math.radians(20.0)
    dz_thresh: float = 0.01
    phase2_margin: float = 0.01
    noise_bound: float = 0.003

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not value > 0:
                raise ValueError(f"controller parameter {name} must be positive")
        if self.noise_bound >= self.xy_thresh:
            raise ValueError("noise_bound must be smaller than xy_thresh")


def select_phase(dp: DeltaPose, p: Pose4, g: Pose4, params: ControllerParams) -> Phase:
    if (planar_distance(dp) > params.xy_thresh or abs(dp.dpsi) > params.psi_thresh
            or dp.dz > params.dz_thresh):
        return Phase.COARSE_ALIGNMENT
    if g.z + params.phase2_margin < p.z:
        return Phase.FINE_VERTICAL
    return Phase.CLOSE_CONTACT


def next_waypoint(p: Pose4, dp: DeltaPose, phase: Phase, rng: np.random.Generator,
                  params: ControllerParams) -> Pose4:
    g = apply(p, dp)
    if phase is Phase.COARSE_ALIGNMENT:
        return Pose4(g.x, g.y, g.z + params.H, g.psi)
    if phase is Phase.FINE_VERTICAL:
        return Pose4(g.x, g.y, p.z - params.d_z, g.psi)
    n1, n2 = rng.uniform(-params.noise_bound, params.noise_bound, size=2)
    return Pose4(g.x + n1, g.y + n2, p.z - params.d_z, g.psi)


def next_waypoint_direct(p: Pose4, dp: DeltaPose) -> Pose4:
    """Baseline executor: go straight to the predicted goal."""
    return apply(p, dp)


def proximity(scene: SceneState, p: Pose4) -> float:
    """Larger of the planar and vertical distances to the goal."""
    g = scene.goal
    return max(math.hypot(g.x - p.x, g.y - p.y), abs(g.z - p.z))


@dataclass(frozen=True)
class Perturbation:
    steps: tuple = ()
    max_shift: float = 0.02
    max_rot: float = 0.0


@dataclass
class StepRecord:
    index: int
    pose: Pose4
    predicted: DeltaPose
    phase: Optional[Phase]
    waypoint: Pose4
    achieved: Pose4
    events: ContactEvents
    socket_pose: tuple


@dataclass
class EpisodeTrace:
    scene: SceneState
    start: Pose4
    executor: str
    steps: list = field(default_factory=list)
    outcome: str = "timeout"
    min_proximity: float = math.inf
    reached_1cm: bool = False
    reached_5mm: bool = False
    perturbations_applied: int = 0
    perturbations_skipped: int = 0
    final_scene: Optional[SceneState] = None

    @property
    def success(self) -> bool:
        return self.outcome == "success"

    @property
    def surface_contact(self) -> bool:
        return any(s.events.surface_contact for s in self.steps)

    @property
    def wall_contact(self) -> bool:
        return any(s.events.wall_contact for s in self.steps)

    @property
    def phases(self) -> list:
        return [s.phase for s in self.steps]


EXECUTORS = ("coarse_to_fine", "direct")


def run_episode(scene: SceneState, predictor, executor: str, params: ControllerParams,
                max_steps: int, rng: np.random.Generator, start: Pose4,
                perturbation: Optional[Perturbation] = None,
                width: int = DEFAULT_WIDTH, fov: float = DEFAULT_FOV,
                on_perturbation: Optional[Callable[[str], None]] = None) -> EpisodeTrace:
    """Closed loop: observe, predict the delta-pose, pick a waypoint, move, repeat.

    ``predictor`` is anything with an ``episode(rng)`` method returning a
    callable ``(observation, true_delta) -> DeltaPose``. The generator is split
    into independent streams for the predictor, the controller noise and the
    socket perturbations so paired runs stay aligned when one part changes.
    """
    if executor not in EXECUTORS:
        raise ValueError(f"unknown executor {executor!r}")
    if is_penetrating(scene, start):
        raise ValueError("initial plug pose penetrates the socket block")
    pred_rng, ctrl_rng, pert_rng = rng.spawn(3)
    policy = predictor.episode(pred_rng)
    trace = EpisodeTrace(scene=scene, start=start, executor=executor)
    pert_steps = set(perturbation.steps) if perturbation else set()
    p = start

    def note(pose: Pose4) -> None:
        d = proximity(scene, pose)
        trace.min_proximity = min(trace.min_proximity, d)
        trace.reached_1cm |= d < 0.01
        trace.reached_5mm |= d < 0.005

    note(p)
    for k in range(max_steps):
        if is_success(scene, p):
            trace.outcome = "success"
            break
        if k in pert_steps:
            try:
                scene = perturb_socket(scene, pert_rng, perturbation.max_shift,
                                       perturbation.max_rot, p)
                trace.perturbations_applied += 1
            except PerturbationSkipped as exc:
                trace.perturbations_skipped += 1
                if on_perturbation is not None:
                    on_perturbation(f"step {k}: {exc}")
        obs = render(scene, p, width, fov)
        dp = policy(obs, delta(scene.goal, p))
        if executor == "direct":
            phase = None
            waypoint = next_waypoint_direct(p, dp)
        else:
            phase = select_phase(dp, p, apply(p, dp), params)
            waypoint = next_waypoint(p, dp, phase, ctrl_rng, params)
        achieved, events = resolve_motion(scene, p, waypoint)
        trace.steps.append(StepRecord(k, p, dp, phase, waypoint, achieved, events,
                                      scene.socket_pose))
        p = achieved
        note(p)
    else:
        if is_success(scene, p):
            trace.outcome = "success"
    trace.final_scene = scene
    return trace


# --------------------------------------------------------------------------
# trace files
#
#   deltainsert-trace 1
#   scene <json>                      initial scene, SI units
#   meta <json>                       executor, start pose, outcome and tallies
#   <index> <phase> <pose x4> <predicted x4> <waypoint x4> <achieved x4>
#       <surface 0|1> <wall 0|1> <clamped axes|-> <socket x y psi>
#
# Floats are written with repr so they parse back exactly; ``phase`` is "-"
# for the direct executor.

TRACE_MAGIC = "deltainsert-trace"
TRACE_VERSION = 1
_STEP_FIELDS = 24


class TraceFormatError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _floats(values) -> list:
    return [repr(float(v)) for v in values]


def encode_step(s: StepRecord) -> str:
    parts = [str(s.index), s.phase.value if s.phase is not None else "-"]
    for item in (s.pose, s.predicted, s.waypoint, s.achieved):
        parts += _floats(item.as_array())
    ev = s.events
    parts += ["1" if ev.surface_contact else "0", "1" if ev.wall_contact else "0",
              ",".join(sorted(ev.clamped_axes)) or "-"]
    parts += _floats(s.socket_pose)
    return " ".join(parts)


def trace_meta(trace: EpisodeTrace) -> dict:
    return {"executor": trace.executor, "start": [float(v) for v in trace.start.as_array()],
            "outcome": trace.outcome, "steps": len(trace.steps),
            "min_proximity": trace.min_proximity, "reached_1cm": trace.reached_1cm,
            "reached_5mm": trace.reached_5mm,
            "perturbations_applied": trace.perturbations_applied,
            "perturbations_skipped": trace.perturbations_skipped}


def write_trace(trace, path) -> None:
    """Write an ``EpisodeTrace`` or a ``TraceFile`` read back from disk."""
    meta = trace.meta if isinstance(trace, TraceFile) else trace_meta(trace)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{TRACE_MAGIC} {TRACE_VERSION}\n")
        fh.write("scene " + json.dumps(scene_to_dict(trace.scene), sort_keys=True) + "\n")
        fh.write("meta " + json.dumps(meta, sort_keys=True) + "\n")
        for s in trace.steps:
            fh.write(encode_step(s) + "\n")


def decode_step(text: str, line: int) -> StepRecord:
    parts = text.split(" ")
    if len(parts) != _STEP_FIELDS:
        raise TraceFormatError(line, f"expected {_STEP_FIELDS} fields, found {len(parts)}")
    try:
        index = int(parts[0])
        phase = None if parts[1] == "-" else Phase(parts[1])
        nums = [float(v) for v in parts[2:18]]
        socket = tuple(float(v) for v in parts[21:24])
        if not all(math.isfinite(v) for v in nums + list(socket)):
            raise ValueError("non-finite value")
        if parts[18] not in ("0", "1") or parts[19] not in ("0", "1"):
            raise ValueError("contact flags must be 0 or 1")
        axes = frozenset() if parts[20] == "-" else frozenset(parts[20].split(","))
        if not axes <= {"x", "y", "z", "psi"}:
            raise ValueError(f"unknown clamped axes {parts[20]!r}")
        events = ContactEvents(parts[18] == "1", parts[19] == "1", axes)
        return StepRecord(index, Pose4(*nums[0:4]), DeltaPose(*nums[4:8]), phase,
                          Pose4(*nums[8:12]), Pose4(*nums[12:16]), events, socket)
    except ValueError as exc:
        raise TraceFormatError(line, str(exc)) from None


@dataclass
class TraceFile:
    scene: SceneState
    meta: dict
    steps: list


def read_trace(path) -> TraceFile:
    text = open(path, encoding="utf-8").read()
    if not text.endswith("\n"):
        raise TraceFormatError(text.count("\n") + 1, "truncated line")
    lines = text[:-1].split("\n")
    if lines[0] != f"{TRACE_MAGIC} {TRACE_VERSION}":
        raise TraceFormatError(1, "not a version-1 trace file")
    if len(lines) < 3:
        raise TraceFormatError(len(lines) + 1, "missing scene or meta line")
    try:
        tag, _, body = lines[1].partition(" ")
        if tag != "scene":
            raise ValueError("expected a scene line")
        scene = scene_from_dict(json.loads(body))
    except (ValueError, KeyError, TypeError) as exc:
        raise TraceFormatError(2, f"bad scene: {exc}") from None
    try:
        tag, _, body = lines[2].partition(" ")
        if tag != "meta":
            raise ValueError("expected a meta line")
        meta = json.loads(body)
        Pose4(*meta["start"])
    except (ValueError, KeyError, TypeError) as exc:
        raise TraceFormatError(3, f"bad meta: {exc}") from None
    steps = [decode_step(t, n) for n, t in enumerate(lines[3:], start=4)]
    if meta.get("steps") != len(steps):
        raise TraceFormatError(len(lines) + 1,
                               f"trace declares {meta.get('steps')} steps, found {len(steps)}")
    return TraceFile(scene, meta, steps)


def check_step(scene: SceneState, s: StepRecord, params: ControllerParams) -> list:
    """Problems found when re-deriving one recorded step; empty when consistent."""
    problems = []
    g = apply(s.pose, s.predicted)
    if s.phase is None:
        if s.waypoint != g:
            problems.append("direct waypoint differs from pose + prediction")
    else:
        phase = select_phase(s.predicted, s.pose, g, params)
        if phase is not s.phase:
            problems.append(f"phase {s.phase.value} but the rule gives {phase.value}")
        elif phase is Phase.CLOSE_CONTACT:
            if (abs(s.waypoint.x - g.x) > params.noise_bound + 1e-12
                    or abs(s.waypoint.y - g.y) > params.noise_bound + 1e-12
                    or s.waypoint.z != Pose4(0, 0, s.pose.z - params.d_z, 0).z
                    or s.waypoint.psi != g.psi):
                problems.append("close-contact waypoint outside the noise bound")
        elif s.waypoint != next_waypoint(s.pose, s.predicted, phase, None, params):
            problems.append("waypoint differs from the phase formula")
    achieved, events = resolve_motion(scene, s.pose, s.waypoint)
    if achieved != s.achieved:
        problems.append(f"achieved pose {tuple(achieved.as_array())} replays differently "
                        f"from the recorded {tuple(s.achieved.as_array())}")
    if events != s.events:
        problems.append("contact events differ on replay")
    return problems
