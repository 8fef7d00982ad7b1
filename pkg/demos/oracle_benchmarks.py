"""Compare noise profiles and executors with the oracle predictor.

The oracle reads the true delta pose and adds profile noise, so this shows
what the controller can do with a predictor of known quality. Runs five
episodes per scene for each row; takes about ten seconds.

    python demos/oracle_benchmarks.py
"""
from dataclasses import replace

from deltainsert.controller import Perturbation
from deltainsert.harness import NOISE_PROFILES, EvalConfig, PredictorSpec, run_eval

base = EvalConfig(episodes_per_scene=5, seed=1)
rows = [
    ("zero noise", base),
    ("full profile", replace(base, predictor=PredictorSpec(noise=NOISE_PROFILES["full"]))),
    ("coarse profile", replace(base, predictor=PredictorSpec(noise=NOISE_PROFILES["coarse"]))),
    ("full, direct executor", replace(base, executor="direct",
                                      predictor=PredictorSpec(noise=NOISE_PROFILES["full"]))),
    ("zero noise, socket shift", replace(base, perturbation=Perturbation(steps=(3,)))),
]

print(f"{'campaign':<26}{'success':>9}{'<1 cm':>8}{'<5 mm':>8}{'contact':>9}")
for name, cfg in rows:
    rep = run_eval(cfg)
    contact = sum(e.contact for e in rep.episodes) / len(rep.episodes)
    print(f"{name:<26}{rep.success_rate():>9.2f}{rep.reach_1cm_rate():>8.2f}"
          f"{rep.reach_5mm_rate():>8.2f}{contact:>9.2f}")
