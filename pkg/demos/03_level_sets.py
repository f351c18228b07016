"""Classifying design points by whether their PTR measure clears alpha.

Runs BPT-LSE and baselines on Himmelblau's function and prints the F1
score and the size of the unclassified set as the budget is spent.
"""

import numpy as np

from ptrbo.harness import config_from_dict, metric_at, run_experiment

cfg = config_from_dict({
    "benchmark": "himmelblau",
    "overrides": {"grid_size": 20},
    "algorithms": ["bpt-lse", "p-lse", "p-stable-lse", "random"],
    "T": 80,
    "trials": 3,
    "seed": 0,
})
print(f"h = {cfg.h}, alpha = {cfg.alpha}")
traces = run_experiment(cfg)

checkpoints = [5, 10, 20, 40, 80]
print("algorithm      " + "".join(f"t={t:<12}" for t in checkpoints))
for spec in cfg.algorithms:
    f1 = [np.mean(metric_at(traces, spec.name, "f1", t)) for t in checkpoints]
    nu = [np.mean(metric_at(traces, spec.name, "n_U", t)) for t in checkpoints]
    print(f"{spec.name:<15}" + "".join(f"{a:.2f}/{b:<9.0f}" for a, b in zip(f1, nu)))
print("(F1 / mean number of unclassified points; runs stop once every point is classified)")
