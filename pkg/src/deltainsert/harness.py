"""Evaluation campaigns, adaptation, ablations, replay, reports and the JSON config schema.

Per-episode randomness: episode ``e`` of scene ``s`` under master seed ``m``
draws from ``SeedSequence([m, s, e])``, spawned into three children used for
the scene placement, the start pose and the closed loop respectively. Two
campaigns that differ only in predictor or executor therefore see the same
scenes and start poses.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .collector import CollectionConfig, collect_free_space
from .controller import (EXECUTORS, ControllerParams, EpisodeTrace, Perturbation, Phase,
                         check_step, read_trace, run_episode, write_trace)
from .geometry import Pose4
from .observation import DEFAULT_FOV, DEFAULT_WIDTH, features
from .predictor import (ZERO_NOISE, LearnedPredictor, NoiseSpec, OraclePredictor,
                        PredictionModel, knn_from_arrays, load_model, refit, ridge_from_arrays)
from .world import (CrossSection, SceneConfig, SceneState, SocketSpec, is_penetrating,
                    make_scene)

DEG = math.pi / 180.0
CM = 0.01

NOISE_PROFILES = {
    "zero": ZERO_NOISE,
    "full": NoiseSpec(0.0015, 0.005, 0.002, 2 * DEG, near_radius=0.05, xy_correlation=0.995),
    "coarse": NoiseSpec(0.004, 0.008, 0.002, 2 * DEG, near_radius=0.05, xy_correlation=0.995),
}


def standard_suite(clearance: float = 0.0005) -> tuple:
    """Five socket geometries: two round and three rectangular profiles."""
    holes = [("round", CrossSection.circle(0.005)),
             ("rectangle", CrossSection.rectangle(0.012, 0.006)),
             ("square", CrossSection.rectangle(0.008, 0.008)),
             ("stick", CrossSection.rectangle(0.016, 0.004)),
             ("pin", CrossSection.circle(0.003))]
    return tuple(SceneConfig(name, SocketSpec(hole, clearance=clearance)) for name, hole in holes)


@dataclass(frozen=True)
class PredictorSpec:
    kind: str = "oracle"                 # oracle | model
    noise: NoiseSpec = ZERO_NOISE
    model_path: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("oracle", "model"):
            raise ValueError(f"unknown predictor kind {self.kind!r}")
        if self.kind == "model" and not self.model_path:
            raise ValueError("a model predictor needs a model path")


def build_predictor(spec: PredictorSpec):
    if spec.kind == "oracle":
        return OraclePredictor(spec.noise)
    if not Path(spec.model_path).is_file():
        raise FileNotFoundError(f"model file {spec.model_path} does not exist")
    return LearnedPredictor(load_model(spec.model_path))


@dataclass(frozen=True)
class EvalConfig:
    scenes: tuple = field(default_factory=standard_suite)
    episodes_per_scene: int = 40
    offset_xy: tuple = (0.03, 0.06)
    offset_psi: tuple = (15 * DEG, 40 * DEG)
    start_height: tuple = (0.04, 0.08)       # above the goal
    predictor: PredictorSpec = PredictorSpec()
    executor: str = "coarse_to_fine"
    perturbation: Optional[Perturbation] = None
    seed: int = 0
    max_steps: int = 100
    params: ControllerParams = ControllerParams()
    width: int = DEFAULT_WIDTH
    fov: float = DEFAULT_FOV

    def __post_init__(self):
        object.__setattr__(self, "scenes", tuple(self.scenes))
        if not self.scenes:
            raise ValueError("the scene suite is empty")
        if self.episodes_per_scene < 1:
            raise ValueError("episodes_per_scene must be at least 1")
        for name in ("offset_xy", "offset_psi", "start_height"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise ValueError(f"{name} range must satisfy 0 <= low <= high")
        if self.start_height[0] <= 0:
            raise ValueError("start height must keep the plug above the goal")
        if self.executor not in EXECUTORS:
            raise ValueError(f"unknown executor {self.executor!r}")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")

    @property
    def episodes(self) -> int:
        return self.episodes_per_scene * len(self.scenes)


def extreme_offset_config(base: EvalConfig) -> EvalConfig:
    """Starts 10 cm from the goal, outside the free-space collection box."""
    return replace(base, offset_xy=(0.10, 0.10))


def episode_rngs(seed: int, scene_index: int, episode: int):
    children = np.random.SeedSequence([seed, scene_index, episode]).spawn(3)
    return tuple(np.random.default_rng(c) for c in children)


def sample_start(scene: SceneState, config: EvalConfig, rng: np.random.Generator,
                 attempts: int = 100) -> Pose4:
    g = scene.goal
    for _ in range(attempts):
        r = rng.uniform(*config.offset_xy)
        a = rng.uniform(-math.pi, math.pi)
        yaw = rng.uniform(*config.offset_psi) * (1.0 if rng.random() < 0.5 else -1.0)
        z = g.z + rng.uniform(*config.start_height)
        p = Pose4(g.x + r * math.cos(a), g.y + r * math.sin(a), z, g.psi + yaw)
        if not is_penetrating(scene, p):
            return p
    raise RuntimeError(f"no feasible start pose after {attempts} attempts")


@dataclass(frozen=True)
class EpisodeResult:
    scene: str
    scene_index: int
    episode: int
    success: bool
    steps: int
    min_proximity: float
    reached_1cm: bool
    reached_5mm: bool
    surface_contact_events: int
    wall_contact_events: int
    perturbations_applied: int
    perturbations_skipped: int

    @property
    def contact(self) -> bool:
        return self.surface_contact_events > 0 or self.wall_contact_events > 0


def summarize_trace(trace: EpisodeTrace, scene_name: str, scene_index: int,
                    episode: int) -> EpisodeResult:
    return EpisodeResult(scene_name, scene_index, episode, trace.success, len(trace.steps),
                         trace.min_proximity, trace.reached_1cm, trace.reached_5mm,
                         sum(s.events.surface_contact for s in trace.steps),
                         sum(s.events.wall_contact for s in trace.steps),
                         trace.perturbations_applied, trace.perturbations_skipped)


@dataclass
class EvalReport:
    episodes: list
    scene_names: tuple
    notes: list = field(default_factory=list)

    def subset(self, scene: Optional[str] = None) -> list:
        return [e for e in self.episodes if scene is None or e.scene == scene]

    def _rate(self, attr, scene=None) -> float:
        eps = self.subset(scene)
        return sum(getattr(e, attr) for e in eps) / len(eps) if eps else 0.0

    def success_rate(self, scene=None) -> float:
        return self._rate("success", scene)

    def reach_1cm_rate(self, scene=None) -> float:
        return self._rate("reached_1cm", scene)

    def reach_5mm_rate(self, scene=None) -> float:
        return self._rate("reached_5mm", scene)

    def summary(self, scene=None) -> dict:
        return _summary_row("scene" if scene else "all", scene or "*", "", self.subset(scene))

    def rows(self) -> list:
        out = [self.summary()]
        out += [self.summary(name) for name in self.scene_names]
        out += [_summary_row("episode", e.scene, e.episode, [e]) for e in self.episodes]
        return out


def run_eval(config: EvalConfig, predictor=None, trace_sink: Optional[Callable] = None,
             on_note: Optional[Callable[[str], None]] = None) -> EvalReport:
    """Run every episode of the campaign and collect its outcomes.

    ``predictor`` overrides ``config.predictor`` (handy for in-memory models);
    ``trace_sink(scene_index, episode, trace)`` receives every full trace.
    """
    if predictor is None:
        predictor = build_predictor(config.predictor)
    report = EvalReport([], tuple(c.name for c in config.scenes))
    for si, scene_cfg in enumerate(config.scenes):
        for e in range(config.episodes_per_scene):
            scene_rng, start_rng, run_rng = episode_rngs(config.seed, si, e)
            scene = make_scene(scene_cfg, scene_rng)
            start = sample_start(scene, config, start_rng)

            def note(msg, si=si, e=e):
                text = f"{scene_cfg.name} episode {e}: {msg}"
                report.notes.append(text)
                if on_note is not None:
                    on_note(text)

            trace = run_episode(scene, predictor, config.executor, config.params,
                                config.max_steps, run_rng, start, config.perturbation,
                                config.width, config.fov, on_perturbation=note)
            if trace_sink is not None:
                trace_sink(si, e, trace)
            report.episodes.append(summarize_trace(trace, scene_cfg.name, si, e))
    return report


def run_perturbation_eval(config: EvalConfig, predictor=None, trace_sink=None,
                          on_note=None) -> EvalReport:
    if config.perturbation is None or not config.perturbation.steps:
        raise ValueError("perturbation evaluation needs a non-empty perturbation schedule")
    return run_eval(config, predictor, trace_sink, on_note)


# --------------------------------------------------------------------------
# adaptation and data-amount ablation

ADAPT_SAMPLES = 3000  # about four minutes of capture at 12.5 Hz


def dataset_arrays(records) -> tuple:
    feats = np.array([features(r.observation) for r in records], dtype=np.float64)
    labels = np.array([r.label.as_array() for r in records], dtype=np.float64)
    return feats.reshape(len(records), -1), labels.reshape(len(records), 4)


def adapt(scene: SceneState, base_model: PredictionModel, n_samples: int = ADAPT_SAMPLES,
          rng: Optional[np.random.Generator] = None,
          collection: CollectionConfig = CollectionConfig()) -> PredictionModel:
    """Collect free-space data on a new scene and refit on the union with the base data."""
    if n_samples < 1:
        raise ValueError("adaptation needs at least one sample")
    rng = np.random.default_rng(0) if rng is None else rng
    records = collect_free_space(scene, collection, rng, n_records=n_samples)
    return refit(base_model, *dataset_arrays(records))


def subsample_indices(n: int, fraction: float, seed: int) -> np.ndarray:
    """First ceil(fraction * n) entries of one seeded permutation, so smaller
    fractions are nested inside larger ones."""
    if not 0 < fraction <= 1:
        raise ValueError("fractions must lie in (0, 1]")
    perm = np.random.default_rng(np.random.SeedSequence([seed, n])).permutation(n)
    return np.sort(perm[:math.ceil(fraction * n - 1e-9)])


@dataclass(frozen=True)
class AblationRow:
    fraction: float
    records: int
    report: EvalReport

    @property
    def success_rate(self) -> float:
        return self.report.success_rate()


def fit_model(feats, labels, kind: str = "knn", k: int = 5, weighting: str = "uniform",
              lam: float = 1e-3) -> PredictionModel:
    if kind == "knn":
        return knn_from_arrays(feats, labels, k, weighting)
    if kind == "ridge":
        return ridge_from_arrays(feats, labels, lam)
    raise ValueError(f"unknown model kind {kind!r}")


def ablation_data_amount(config: EvalConfig, feats: np.ndarray, labels: np.ndarray,
                         fractions: Sequence[float], kind: str = "knn", k: int = 5,
                         weighting: str = "uniform", lam: float = 1e-3,
                         seed: int = 0) -> list:
    """Refit on nested random subsets of the dataset and evaluate each model."""
    rows = []
    for f in fractions:
        idx = subsample_indices(len(feats), f, seed)
        if kind == "knn" and len(idx) < k:
            raise ValueError(f"fraction {f} leaves {len(idx)} records, fewer than k={k}")
        model = fit_model(feats[idx], labels[idx], kind, k, weighting, lam)
        rows.append(AblationRow(f, len(idx), run_eval(config, LearnedPredictor(model))))
    return rows


# --------------------------------------------------------------------------
# replay

@dataclass
class ReplayResult:
    lines: list
    divergences: list

    @property
    def consistent(self) -> bool:
        return not self.divergences


def _fmt_pose(a) -> str:
    return "({:+.4f} {:+.4f} {:+.4f} {:+6.1f}deg)".format(a[0], a[1], a[2], a[3] / DEG)


def replay(trace_path, socket: Optional[SocketSpec] = None,
           params: ControllerParams = ControllerParams()) -> ReplayResult:
    """Step table for a trace file plus every place where re-simulation disagrees.

    Passing ``socket`` replays the trace against a different socket geometry.
    """
    tf = read_trace(trace_path)
    try:
        scene = tf.scene if socket is None else replace(tf.scene, socket_spec=socket, goal=None)
    except ValueError as exc:
        return ReplayResult([], [f"scene rejected by the replay world: {exc}"])
    lines = [f"scene {scene.name or '?'}  executor {tf.meta['executor']}  "
             f"outcome {tf.meta['outcome']}  steps {len(tf.steps)}"]
    problems = []
    prev = Pose4(*tf.meta["start"])
    for s in tf.steps:
        here = replace(scene, socket_pose=s.socket_pose, goal=None)
        ev = s.events
        flags = ("S" if ev.surface_contact else "-") + ("W" if ev.wall_contact else "-")
        phase = s.phase.value if isinstance(s.phase, Phase) else "direct"
        lines.append(f"{s.index:4d} {phase:8s} pred {_fmt_pose(s.predicted.as_array())} "
                     f"cmd {_fmt_pose(s.waypoint.as_array())} "
                     f"got {_fmt_pose(s.achieved.as_array())} {flags}")
        if s.pose != prev:
            problems.append(f"step {s.index}: starts away from the previous achieved pose")
        problems += [f"step {s.index}: {p}" for p in check_step(here, s, params)]
        prev = s.achieved
    return ReplayResult(lines, problems)


# --------------------------------------------------------------------------
# reports
#
# One table, one row per aggregate ("all", then each scene) followed by one
# row per episode. CSV writes floats with six decimals; JSON stores the same
# values rounded to six decimals. Empty cells / nulls mark undefined means.

REPORT_FORMAT = "deltainsert-report"
REPORT_VERSION = 1
REPORT_FIELDS = ("level", "scene", "episode", "episodes", "successes", "success_rate",
                 "reach_1cm_rate", "reach_5mm_rate", "mean_steps", "mean_steps_to_success",
                 "mean_min_proximity", "surface_contact_events", "wall_contact_events",
                 "contact_episodes", "perturbations_applied", "perturbations_skipped")
_INT_FIELDS = {"episodes", "successes", "surface_contact_events", "wall_contact_events",
               "contact_episodes", "perturbations_applied", "perturbations_skipped"}
_TEXT_FIELDS = {"level", "scene", "episode"}
FLOAT_DIGITS = 6


def _mean(values) -> Optional[float]:
    values = list(values)
    return sum(values) / len(values) if values else None


def _summary_row(level: str, scene: str, episode, eps: list) -> dict:
    n = len(eps)
    wins = [e for e in eps if e.success]
    return {
        "level": level, "scene": scene, "episode": str(episode), "episodes": n,
        "successes": len(wins),
        "success_rate": len(wins) / n if n else 0.0,
        "reach_1cm_rate": sum(e.reached_1cm for e in eps) / n if n else 0.0,
        "reach_5mm_rate": sum(e.reached_5mm for e in eps) / n if n else 0.0,
        "mean_steps": _mean(e.steps for e in eps),
        "mean_steps_to_success": _mean(e.steps for e in wins),
        "mean_min_proximity": _mean(e.min_proximity for e in eps),
        "surface_contact_events": sum(e.surface_contact_events for e in eps),
        "wall_contact_events": sum(e.wall_contact_events for e in eps),
        "contact_episodes": sum(e.contact for e in eps),
        "perturbations_applied": sum(e.perturbations_applied for e in eps),
        "perturbations_skipped": sum(e.perturbations_skipped for e in eps),
    }


def _rounded(row: dict) -> dict:
    out = {}
    for k in REPORT_FIELDS:
        v = row[k]
        if k not in _INT_FIELDS and k not in _TEXT_FIELDS and v is not None:
            v = round(float(v), FLOAT_DIGITS)
        out[k] = v
    return out


def rows_csv(rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_FIELDS)
    for row in rows:
        cells = []
        for k in REPORT_FIELDS:
            v = row[k]
            if v is None:
                cells.append("")
            elif k in _INT_FIELDS or k in _TEXT_FIELDS:
                cells.append(str(v))
            else:
                cells.append(f"{v:.{FLOAT_DIGITS}f}")
        w.writerow(cells)
    return buf.getvalue()


def rows_json(rows: list, notes=()) -> str:
    doc = {"format": REPORT_FORMAT, "version": REPORT_VERSION,
           "rows": [_rounded(r) for r in rows], "notes": list(notes)}
    return json.dumps(doc, indent=1) + "\n"


def report_csv(report: EvalReport) -> str:
    return rows_csv(report.rows())


def report_json(report: EvalReport) -> str:
    return rows_json(report.rows(), report.notes)


def write_rows(rows: list, fmt: str, path, notes=()) -> None:
    """Write already-summarized report rows, e.g. ones returned by ``parse_report``."""
    if fmt == "csv":
        text = rows_csv(rows)
    elif fmt == "json":
        text = rows_json(rows, notes)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    Path(path).write_text(text, encoding="utf-8")


def emit_report(report: EvalReport, fmt: str, path) -> None:
    if not report.episodes:
        raise ValueError("refusing to emit a report without episodes")
    write_rows(report.rows(), fmt, path, report.notes)


def _typed(k: str, v):
    if k in _TEXT_FIELDS:
        return "" if v is None else str(v)
    if v is None or v == "":
        return None
    if k in _INT_FIELDS:
        return int(v)
    return float(v)


def parse_report(path) -> list:
    """Rows of an emitted report (either format) as typed dicts."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        if doc.get("format") != REPORT_FORMAT or doc.get("version") != REPORT_VERSION:
            raise ValueError("not a version-1 report")
        raw = doc["rows"]
    else:
        reader = csv.DictReader(io.StringIO(text))
        if tuple(reader.fieldnames or ()) != REPORT_FIELDS:
            raise ValueError("unexpected report columns")
        raw = list(reader)
    return [{k: _typed(k, r[k]) for k in REPORT_FIELDS} for r in raw]
