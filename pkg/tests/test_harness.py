import math
from dataclasses import replace

import numpy as np
import pytest

from deltainsert.collector import CollectionConfig, collect_dataset
from deltainsert.controller import Perturbation, write_trace
from deltainsert.harness import (ADAPT_SAMPLES, EvalConfig, PredictorSpec, ablation_data_amount,
                                 adapt, dataset_arrays, emit_report, episode_rngs,
                                 extreme_offset_config, parse_report, replay, run_eval,
                                 run_perturbation_eval, sample_start, standard_suite,
                                 subsample_indices, NOISE_PROFILES)
from deltainsert.predictor import knn_from_arrays
from deltainsert.world import CrossSection, SocketSpec, make_scene

DEG = math.pi / 180
SUITE = standard_suite()
SMALL = EvalConfig(episodes_per_scene=4, seed=3)


@pytest.fixture(scope="module")
def oracle_report():
    return run_eval(SMALL)


class TestEval:
    def test_oracle_all_succeed(self, oracle_report):
        assert oracle_report.success_rate() == 1.0
        assert len(oracle_report.episodes) == 20

    def test_report_invariants(self):
        rep = run_eval(replace(SMALL, predictor=PredictorSpec(noise=NOISE_PROFILES["coarse"])))
        for name in (None,) + rep.scene_names:
            s, r1, r5 = rep.success_rate(name), rep.reach_1cm_rate(name), rep.reach_5mm_rate(name)
            assert 0 <= r5 <= r1 <= 1 and 0 <= s <= 1
        for e in rep.episodes:
            if e.success:
                assert e.reached_1cm and e.reached_5mm

    def test_start_offsets_in_range(self):
        for si, cfg in enumerate(SUITE):
            for e in range(20):
                scene_rng, start_rng, _ = episode_rngs(0, si, e)
                scene = make_scene(cfg, scene_rng)
                p = sample_start(scene, SMALL, start_rng)
                g = scene.goal
                assert 0.03 - 1e-8 <= math.hypot(p.x - g.x, p.y - g.y) <= 0.06 + 1e-8
                yaw = abs(math.remainder(p.psi - g.psi, 2 * math.pi))
                assert 15 * DEG - 1e-9 <= yaw <= 40 * DEG + 1e-9

    def test_paired_seeds(self):
        a = run_eval(SMALL)
        b = run_eval(replace(SMALL, executor="direct"))
        assert [(e.scene, e.episode) for e in a.episodes] == [(e.scene, e.episode) for e in b.episodes]

    def test_byte_identical_reports(self, oracle_report, tmp_path):
        again = run_eval(SMALL)
        for fmt in ("csv", "json"):
            emit_report(oracle_report, fmt, tmp_path / f"a.{fmt}")
            emit_report(again, fmt, tmp_path / f"b.{fmt}")
            assert (tmp_path / f"a.{fmt}").read_bytes() == (tmp_path / f"b.{fmt}").read_bytes()

    def test_missing_model_file(self, tmp_path):
        cfg = replace(SMALL, predictor=PredictorSpec("model", model_path=str(tmp_path / "no.bin")))
        with pytest.raises(FileNotFoundError):
            run_eval(cfg)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            EvalConfig(episodes_per_scene=0)
        with pytest.raises(ValueError):
            EvalConfig(scenes=())
        with pytest.raises(ValueError):
            EvalConfig(offset_xy=(0.06, 0.03))
        with pytest.raises(ValueError):
            EvalConfig(executor="teleport")

    def test_extreme_preset_reports(self):
        rep = run_eval(extreme_offset_config(replace(SMALL, episodes_per_scene=2)))
        assert len(rep.episodes) == 10


class TestPerturbation:
    def test_requires_schedule(self):
        with pytest.raises(ValueError):
            run_perturbation_eval(SMALL)

    def test_null_shift_equals_plain_eval(self, oracle_report):
        cfg = replace(SMALL, perturbation=Perturbation(steps=(2,), max_shift=0.0))
        rep = run_perturbation_eval(cfg)
        strip = lambda r: [(e.success, e.steps, e.min_proximity) for e in r.episodes]
        assert strip(rep) == strip(oracle_report)

    def test_skipped_when_inserted(self):
        # a shift at every step must hit the steps where the plug is partly inserted
        cfg = replace(SMALL, perturbation=Perturbation(steps=tuple(range(100)), max_shift=0.0002))
        notes = []
        rep = run_perturbation_eval(cfg, on_note=notes.append)
        skipped = sum(e.perturbations_skipped for e in rep.episodes)
        assert skipped > 0 and len(notes) == skipped == len(rep.notes)
        for e in rep.episodes:
            assert e.perturbations_applied + e.perturbations_skipped == e.steps

    def test_counts_reported(self):
        cfg = replace(SMALL, perturbation=Perturbation(steps=(2,), max_shift=0.02))
        rep = run_perturbation_eval(cfg)
        assert rep.summary()["perturbations_applied"] + rep.summary()["perturbations_skipped"] == 20


class TestReports:
    def test_round_trip_and_cross_format(self, oracle_report, tmp_path):
        emit_report(oracle_report, "csv", tmp_path / "r.csv")
        emit_report(oracle_report, "json", tmp_path / "r.json")
        a, b = parse_report(tmp_path / "r.csv"), parse_report(tmp_path / "r.json")
        assert a == b
        top = a[0]
        assert top["level"] == "all" and top["episodes"] == 20
        assert top["success_rate"] == round(oracle_report.success_rate(), 6)
        assert [r["scene"] for r in a[1:6]] == [c.name for c in SUITE]

    def test_empty_report_rejected(self, tmp_path):
        from deltainsert.harness import EvalReport
        with pytest.raises(ValueError):
            emit_report(EvalReport([], ()), "csv", tmp_path / "r.csv")

    def test_unknown_format(self, oracle_report, tmp_path):
        with pytest.raises(ValueError):
            emit_report(oracle_report, "xml", tmp_path / "r.xml")


class TestReplay:
    def traces(self, tmp_path, executor="coarse_to_fine"):
        paths = []

        def sink(si, e, trace):
            p = tmp_path / f"{executor}-{si}-{e}.trace"
            write_trace(trace, p)
            paths.append(p)
        run_eval(replace(SMALL, episodes_per_scene=1, executor=executor,
                         predictor=PredictorSpec(noise=NOISE_PROFILES["full"])), trace_sink=sink)
        return paths

    @pytest.mark.parametrize("executor", ["coarse_to_fine", "direct"])
    def test_self_consistent(self, tmp_path, executor):
        for p in self.traces(tmp_path, executor):
            res = replay(p)
            assert res.consistent, res.divergences
            assert len(res.lines) > 1

    def test_other_world_diverges(self, tmp_path):
        p = self.traces(tmp_path)[0]
        res = replay(p, socket=SocketSpec(CrossSection.circle(0.005), clearance=0.002))
        assert not res.consistent
        res = replay(p, socket=SocketSpec(CrossSection.circle(0.002), clearance=0.0005))
        assert not res.consistent and "rejected" in res.divergences[0]

    def test_truncated(self, tmp_path):
        from deltainsert.controller import TraceFormatError
        p = self.traces(tmp_path)[0]
        text = p.read_text()
        p.write_text(text[:-20])
        with pytest.raises(TraceFormatError) as exc:
            replay(p)
        assert exc.value.line == text.count("\n")


@pytest.fixture(scope="module")
def tiny_data():
    cfg = CollectionConfig(free_records=150, contact_records=40, width=8)
    recs = collect_dataset([SUITE[0]], 2, cfg, np.random.default_rng(1))
    return dataset_arrays(recs)


class TestAdaptAndAblation:
    def test_subsets_are_nested(self):
        a = subsample_indices(1000, 0.12, 4)
        b = subsample_indices(1000, 0.5, 4)
        c = subsample_indices(1000, 1.0, 4)
        assert len(a) == 120 and len(b) == 500 and len(c) == 1000
        assert set(a) <= set(b) <= set(c)
        with pytest.raises(ValueError):
            subsample_indices(10, 0.0, 0)

    def test_full_fraction_reproduces_base(self, tiny_data):
        feats, labels = tiny_data
        cfg = EvalConfig(scenes=SUITE[:1], episodes_per_scene=3, width=8, max_steps=30)
        rows = ablation_data_amount(cfg, feats, labels, [1.0, 0.5])
        base = run_eval(cfg, __import__("deltainsert.predictor").predictor.LearnedPredictor(
            knn_from_arrays(feats, labels, 5)))
        assert [e.steps for e in rows[0].report.episodes] == [e.steps for e in base.episodes]
        assert [r.records for r in rows] == [len(feats), math.ceil(len(feats) / 2)]

    def test_fraction_below_k_rejected(self, tiny_data):
        feats, labels = tiny_data
        cfg = EvalConfig(scenes=SUITE[:1], episodes_per_scene=1, width=8)
        with pytest.raises(ValueError):
            ablation_data_amount(cfg, feats, labels, [0.001], k=5)

    def test_adapt_appends(self, tiny_data):
        feats, labels = tiny_data
        base = knn_from_arrays(feats, labels, 5)
        scene = make_scene(SUITE[1], np.random.default_rng(0))
        adapted = adapt(scene, base, 50, np.random.default_rng(0), CollectionConfig(width=8))
        assert adapted.size == base.size + 50 and adapted.k == base.k
        with pytest.raises(ValueError):
            adapt(scene, base, 0)

    def test_default_adapt_budget(self):
        assert ADAPT_SAMPLES == 3000
