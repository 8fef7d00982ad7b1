"""Command line: collect, train, eval, perturb-eval, adapt, ablate and replay.

Every verb reads one JSON config file (``--config``); lengths in the file and
on the command line are centimeters and angles are degrees. Exit status is 0
on success, 1 for usage or configuration errors and 2 when a check fails
(replay divergence or a missed ``--expect-success`` floor).
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness
from .collector import CollectionConfig, collect_dataset, dataset_stats, read_dataset, write_dataset
from .controller import ControllerParams, Perturbation, write_trace
from .harness import CM, DEG, EvalConfig, PredictorSpec
from .predictor import NoiseSpec, load_model, save_model
from .world import CrossSection, SceneConfig, SocketSpec, make_scene

EXIT_OK, EXIT_USAGE, EXIT_CHECK = 0, 1, 2


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# config file -> SI objects

def _take(d: dict, allowed: set, where: str) -> dict:
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(extra))}")
    return d


def _pair(v, scale, where):
    if not (isinstance(v, (list, tuple)) and len(v) == 2):
        raise ConfigError(f"{where} must be a [low, high] pair")
    return (float(v[0]) * scale, float(v[1]) * scale)


def parse_section(d: dict) -> CrossSection:
    _take(d, {"kind", "radius_cm", "width_cm", "height_cm"}, "hole")
    if d.get("kind") == "circle":
        return CrossSection.circle(float(d["radius_cm"]) * CM)
    if d.get("kind") == "rectangle":
        return CrossSection.rectangle(float(d["width_cm"]) * CM, float(d["height_cm"]) * CM)
    raise ConfigError("hole kind must be circle or rectangle")


_SCENE_KEYS = {"name", "hole", "plug", "clearance_cm", "psi_tol_deg", "block_half_extent_cm",
               "block_top_cm", "hole_depth_cm", "insertion_depth_cm", "nominal_cm",
               "nominal_yaw_deg", "randomize_xy_cm", "randomize_yaw_deg", "distractors",
               "distractor_height_cm"}


def parse_scene(d: dict) -> SceneConfig:
    _take(d, _SCENE_KEYS, "scene")
    spec_kw = {"hole": parse_section(d["hole"])}
    for key, name, scale in (("clearance_cm", "clearance", CM), ("psi_tol_deg", "psi_tol", DEG),
                             ("block_half_extent_cm", "block_half_extent", CM),
                             ("block_top_cm", "block_top", CM), ("hole_depth_cm", "hole_depth", CM),
                             ("insertion_depth_cm", "insertion_depth", CM)):
        if key in d:
            spec_kw[name] = float(d[key]) * scale
    kw = {"name": str(d.get("name", "scene")), "socket": SocketSpec(**spec_kw)}
    if "plug" in d:
        kw["plug"] = parse_section(d["plug"])
    if "nominal_cm" in d or "nominal_yaw_deg" in d:
        x, y = _pair(d.get("nominal_cm", [50, 0]), CM, "nominal_cm")
        kw["nominal"] = (x, y, float(d.get("nominal_yaw_deg", 0)) * DEG)
    if "randomize_xy_cm" in d:
        kw["randomize_xy"] = _pair(d["randomize_xy_cm"], CM, "randomize_xy_cm")
    if "randomize_yaw_deg" in d:
        kw["randomize_psi"] = float(d["randomize_yaw_deg"]) * DEG
    if "distractors" in d:
        lo, hi = d["distractors"]
        kw["distractor_count"] = (int(lo), int(hi))
    if "distractor_height_cm" in d:
        kw["distractor_height"] = _pair(d["distractor_height_cm"], CM, "distractor_height_cm")
    return SceneConfig(**kw)


def parse_scenes(v, clearance_cm=None) -> tuple:
    if v == "standard":
        return harness.standard_suite() if clearance_cm is None else \
            harness.standard_suite(float(clearance_cm) * CM)
    if isinstance(v, list) and v:
        return tuple(parse_scene(s) for s in v)
    raise ConfigError('"scenes" must be "standard" or a non-empty list of scene objects')


_NOISE_KEYS = {"kind", "profile", "sigma_xy_near_cm", "sigma_xy_far_cm", "sigma_z_cm",
               "sigma_yaw_deg", "near_radius_cm", "xy_correlation", "path"}


def parse_predictor(d: dict, base: Path) -> PredictorSpec:
    _take(d, _NOISE_KEYS, "predictor")
    kind = d.get("kind", "oracle")
    if kind == "model":
        return PredictorSpec("model", model_path=str((base / d["path"]).resolve()))
    if kind != "oracle":
        raise ConfigError("predictor kind must be oracle or model")
    if "profile" in d:
        if d["profile"] not in harness.NOISE_PROFILES:
            raise ConfigError(f"unknown noise profile {d['profile']!r}; choose from "
                              f"{', '.join(harness.NOISE_PROFILES)}")
        return PredictorSpec("oracle", harness.NOISE_PROFILES[d["profile"]])
    return PredictorSpec("oracle", NoiseSpec(
        float(d.get("sigma_xy_near_cm", 0)) * CM, float(d.get("sigma_xy_far_cm", 0)) * CM,
        float(d.get("sigma_z_cm", 0)) * CM, float(d.get("sigma_yaw_deg", 0)) * DEG,
        float(d.get("near_radius_cm", 1)) * CM, float(d.get("xy_correlation", 0))))


_COLLECT_KEYS = {"scenes_per_config", "free_records", "contact_records", "free_xy_cm",
                 "free_yaw_deg", "free_z_cm", "contact_xy_cm", "contact_yaw_deg",
                 "wiggle_step_cm", "wiggle_yaw_deg", "capture_every", "jitter_every"}


def parse_collection(d: dict) -> tuple:
    _take(d, _COLLECT_KEYS, "collection")
    kw = {}
    for key, name, scale in (("free_xy_cm", "free_xy", CM), ("free_yaw_deg", "free_psi", DEG),
                             ("contact_xy_cm", "contact_xy", CM),
                             ("contact_yaw_deg", "contact_psi", DEG),
                             ("wiggle_step_cm", "wiggle_step", CM),
                             ("wiggle_yaw_deg", "wiggle_psi", DEG)):
        if key in d:
            kw[name] = float(d[key]) * scale
    if "free_z_cm" in d:
        kw["free_z"] = _pair(d["free_z_cm"], CM, "free_z_cm")
    for key in ("free_records", "contact_records", "capture_every", "jitter_every"):
        if key in d:
            kw[key] = int(d[key])
    return CollectionConfig(**kw), int(d.get("scenes_per_config", 16))


_TOP_KEYS = {"seed", "scenes", "clearance_cm", "episodes_per_scene", "offset_xy_cm",
             "offset_yaw_deg", "start_height_cm", "max_steps", "executor", "predictor",
             "perturbation", "collection", "model", "adapt", "ablation", "preset"}


def load_config(path) -> dict:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    _take(raw, _TOP_KEYS, "config")
    raw["_base"] = path.parent
    return raw


def eval_config(raw: dict) -> EvalConfig:
    kw = {"scenes": parse_scenes(raw.get("scenes", "standard"), raw.get("clearance_cm")),
          "seed": int(raw.get("seed", 0))}
    if "episodes_per_scene" in raw:
        kw["episodes_per_scene"] = int(raw["episodes_per_scene"])
    if "offset_xy_cm" in raw:
        kw["offset_xy"] = _pair(raw["offset_xy_cm"], CM, "offset_xy_cm")
    if "offset_yaw_deg" in raw:
        kw["offset_psi"] = _pair(raw["offset_yaw_deg"], DEG, "offset_yaw_deg")
    if "start_height_cm" in raw:
        kw["start_height"] = _pair(raw["start_height_cm"], CM, "start_height_cm")
    if "max_steps" in raw:
        kw["max_steps"] = int(raw["max_steps"])
    if "executor" in raw:
        kw["executor"] = str(raw["executor"])
    if "predictor" in raw:
        kw["predictor"] = parse_predictor(raw["predictor"], raw.get("_base", Path(".")))
    if "perturbation" in raw:
        p = _take(raw["perturbation"], {"steps", "max_shift_cm", "max_rot_deg"}, "perturbation")
        kw["perturbation"] = Perturbation(tuple(int(s) for s in p.get("steps", ())),
                                          float(p.get("max_shift_cm", 2)) * CM,
                                          float(p.get("max_rot_deg", 0)) * DEG)
    cfg = EvalConfig(**kw)
    if raw.get("preset") == "extreme_offset":
        cfg = harness.extreme_offset_config(cfg)
    elif raw.get("preset") not in (None, "standard"):
        raise ConfigError(f"unknown preset {raw['preset']!r}")
    return cfg


def model_options(raw: dict) -> dict:
    m = _take(raw.get("model", {}), {"kind", "k", "weighting", "lambda"}, "model")
    return {"kind": m.get("kind", "knn"), "k": int(m.get("k", 5)),
            "weighting": m.get("weighting", "uniform"), "lam": float(m.get("lambda", 1e-3))}


# --------------------------------------------------------------------------
# verbs

def _apply_overrides(raw: dict, args) -> dict:
    if getattr(args, "seed", None) is not None:
        raw["seed"] = args.seed
    if getattr(args, "episodes", None) is not None:
        raw["episodes_per_scene"] = args.episodes
    if getattr(args, "max_steps", None) is not None:
        raw["max_steps"] = args.max_steps
    if getattr(args, "executor", None):
        raw["executor"] = args.executor
    if getattr(args, "model", None):
        raw["predictor"] = {"kind": "model", "path": str(Path(args.model).resolve())}
    if getattr(args, "profile", None):
        raw["predictor"] = {"kind": "oracle", "profile": args.profile}
    return raw


def cmd_collect(args, raw) -> int:
    cc, per = parse_collection(raw.get("collection", {}))
    scenes = parse_scenes(raw.get("scenes", "standard"), raw.get("clearance_cm"))
    rng = np.random.default_rng(np.random.SeedSequence([int(raw.get("seed", 0))]))
    records = collect_dataset(scenes, per, cc, rng, include_contact=not args.free_only)
    write_dataset(records, args.out, cc.width, cc.fov)
    st = dataset_stats(records)
    print(f"wrote {st.total} records to {args.out} "
          f"(free {st.counts['free_space']}, contact {st.counts['close_contact']}, "
          f"contact-flagged {st.contact_fraction:.3f})")
    return EXIT_OK


def cmd_train(args, raw) -> int:
    opts = model_options(raw)
    if args.kind:
        opts["kind"] = args.kind
    if args.k is not None:
        opts["k"] = args.k
    records = read_dataset(args.data)
    if args.free_only:
        records = [r for r in records if r.provenance == "free_space"]
    feats, labels = harness.dataset_arrays(records)
    model = harness.fit_model(feats, labels, **opts)
    save_model(model, args.out)
    print(f"wrote {opts['kind']} model on {model.size} records to {args.out}")
    return EXIT_OK


def _write_outputs(report, args) -> None:
    if args.report:
        fmt = "csv" if str(args.report).endswith(".csv") else "json"
        harness.emit_report(report, fmt, args.report)


def _print_summary(report) -> None:
    print(f"{'scene':10s} {'n':>4s} {'success':>8s} {'<1cm':>6s} {'<5mm':>6s}")
    for name in (None,) + tuple(report.scene_names):
        row = report.summary(name)
        print(f"{row['scene']:10s} {row['episodes']:4d} {row['success_rate']:8.3f} "
              f"{row['reach_1cm_rate']:6.3f} {row['reach_5mm_rate']:6.3f}")


def _trace_sink(args):
    if not args.traces:
        return None
    out = Path(args.traces)
    out.mkdir(parents=True, exist_ok=True)

    def sink(si, e, trace):
        write_trace(trace, out / f"scene{si:02d}_ep{e:04d}.trace")

    return sink


def _check_floor(report, args) -> int:
    if args.expect_success is not None and report.success_rate() < args.expect_success:
        print(f"success rate {report.success_rate():.3f} below the expected "
              f"{args.expect_success:.3f}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def cmd_eval(args, raw) -> int:
    cfg = eval_config(raw)
    if args.verb == "perturb-eval":
        report = harness.run_perturbation_eval(cfg, trace_sink=_trace_sink(args),
                                               on_note=lambda m: print("note:", m))
    else:
        report = harness.run_eval(cfg, trace_sink=_trace_sink(args))
    _print_summary(report)
    _write_outputs(report, args)
    return _check_floor(report, args)


def cmd_adapt(args, raw) -> int:
    a = _take(raw.get("adapt", {}), {"scene", "samples"}, "adapt")
    if "scene" not in a:
        raise ConfigError('adapt needs an "adapt": {"scene": ...} entry')
    scene_cfg = parse_scene(a["scene"])
    n = args.samples if args.samples is not None else int(a.get("samples", harness.ADAPT_SAMPLES))
    seed = int(raw.get("seed", 0))
    scene_rng, collect_rng = (np.random.default_rng(c)
                              for c in np.random.SeedSequence([seed]).spawn(2))
    scene = make_scene(scene_cfg, scene_rng)
    model = harness.adapt(scene, load_model(args.model), n, collect_rng)
    save_model(model, args.out)
    print(f"adapted model on {model.size} records written to {args.out}")
    return EXIT_OK


def cmd_ablate(args, raw) -> int:
    cfg = eval_config(raw)
    ab = _take(raw.get("ablation", {}), {"fractions"}, "ablation")
    fractions = args.fractions or ab.get("fractions", [1.0, 0.5, 0.12])
    feats, labels = harness.dataset_arrays(read_dataset(args.data))
    rows = harness.ablation_data_amount(cfg, feats, labels, [float(f) for f in fractions],
                                        seed=cfg.seed, **model_options(raw))
    print(f"{'fraction':>8s} {'records':>8s} {'success':>8s} {'<1cm':>6s} {'<5mm':>6s}")
    for r in rows:
        print(f"{r.fraction:8.3f} {r.records:8d} {r.success_rate:8.3f} "
              f"{r.report.reach_1cm_rate():6.3f} {r.report.reach_5mm_rate():6.3f}")
    if args.report:
        path = Path(args.report)
        for r in rows:
            tag = f"{r.fraction:g}".replace(".", "p")
            harness.emit_report(r.report, "csv" if path.suffix == ".csv" else "json",
                                path.with_name(f"{path.stem}_{tag}{path.suffix}"))
    return EXIT_OK


def cmd_replay(args, raw) -> int:
    socket = None
    if raw is not None and isinstance(raw.get("scenes"), list):
        socket = parse_scene(raw["scenes"][0]).socket
    result = harness.replay(args.trace, socket)
    for line in result.lines:
        print(line)
    for d in result.divergences:
        print("DIVERGENCE", d)
    print(f"{len(result.divergences)} divergence(s)")
    return EXIT_OK if result.consistent else EXIT_CHECK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="deltainsert", description="Peg-in-hole delta-pose benchmark.")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="JSON config (cm / degrees)")
        sp.add_argument("--seed", type=int, help="override the master seed")

    sp = sub.add_parser("collect", help="collect a dataset")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--free-only", action="store_true", help="skip close-contact collection")

    sp = sub.add_parser("train", help="fit a k-NN or ridge model on a dataset")
    common(sp, config_required=False)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--kind", choices=("knn", "ridge"))
    sp.add_argument("--k", type=int)
    sp.add_argument("--free-only", action="store_true", help="drop close-contact records")

    for verb, text in (("eval", "run an evaluation campaign"),
                       ("perturb-eval", "evaluate with scheduled socket shifts")):
        sp = sub.add_parser(verb, help=text)
        common(sp)
        sp.add_argument("--model", help="model file (overrides the config predictor)")
        sp.add_argument("--profile", choices=tuple(harness.NOISE_PROFILES),
                        help="oracle noise profile (overrides the config predictor)")
        sp.add_argument("--executor", choices=("coarse_to_fine", "direct"))
        sp.add_argument("--episodes", type=int, help="episodes per scene")
        sp.add_argument("--max-steps", type=int)
        sp.add_argument("--report", help="write a .csv or .json report")
        sp.add_argument("--traces", help="directory receiving one trace file per episode")
        sp.add_argument("--expect-success", type=float,
                        help="exit with status 2 if the success rate falls below this")

    sp = sub.add_parser("adapt", help="refit a model with free-space data from a new scene")
    common(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--samples", type=int)

    sp = sub.add_parser("ablate", help="data-amount ablation")
    common(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--fractions", type=float, nargs="+")
    sp.add_argument("--episodes", type=int, help="episodes per scene")
    sp.add_argument("--report", help="report path stem (.csv or .json)")

    sp = sub.add_parser("replay", help="print and verify a trace file")
    sp.add_argument("trace")
    sp.add_argument("--config", help="replay against the first scene of this config instead")
    return p


VERBS = {"collect": cmd_collect, "train": cmd_train, "eval": cmd_eval,
         "perturb-eval": cmd_eval, "adapt": cmd_adapt, "ablate": cmd_ablate,
         "replay": cmd_replay}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = load_config(args.config) if args.config else ({} if args.verb != "replay" else None)
        if raw is not None:
            raw = _apply_overrides(raw, args)
        return VERBS[args.verb](args, raw)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError, TypeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
