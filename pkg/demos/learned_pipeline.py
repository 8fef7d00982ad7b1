"""Collect data, fit k-NN, evaluate, then replay one episode from its trace.

A deliberately small run on the round scene (about a minute). Output files
go to a temporary directory that is printed at the start.

    python demos/learned_pipeline.py
"""
import tempfile
from pathlib import Path

import numpy as np

from deltainsert.collector import CollectionConfig, collect_dataset, dataset_stats, write_dataset
from deltainsert.controller import write_trace
from deltainsert.harness import EvalConfig, PredictorSpec, emit_report, replay, run_eval, standard_suite
from deltainsert.predictor import fit_knn, save_model

out = Path(tempfile.mkdtemp(prefix="deltainsert-demo-"))
print("writing to", out)
scene = standard_suite()[0]

records = collect_dataset([scene], 4, CollectionConfig(free_records=800, contact_records=200),
                          np.random.default_rng(7))
stats = dataset_stats(records)
print(f"collected {len(records)} records: {stats.counts}")
write_dataset(records, out / "data.txt")

model = fit_knn(records, k=5)
save_model(model, out / "model.bin")

traces = []


def keep(si, e, trace):
    path = out / f"episode-{e}.trace"
    write_trace(trace, path)
    traces.append(path)


cfg = EvalConfig(scenes=(scene,), episodes_per_scene=10, seed=7,
                 predictor=PredictorSpec("model", model_path=str(out / "model.bin")))
report = run_eval(cfg, trace_sink=keep)
emit_report(report, "csv", out / "report.csv")
print(f"success {report.success_rate():.2f}, reached 1 cm {report.reach_1cm_rate():.2f}")

result = replay(traces[0])
print("\n".join(result.lines[:8]))
print(f"... {len(result.lines)} lines, {len(result.divergences)} divergence(s)")
