"""
Classical segmentation baselines
================================

Threshold, TLIS and the spatial filter on the noisy benchmark: mask
accuracy, profile error and the regression rate each one implies.

    python3 demos/02_classical_baselines.py
"""

import numpy as np

from slabrate.evalharness import evaluate_classical
from slabrate.slabsynth import BenchmarkConfig, generate_benchmark

ds = generate_benchmark(BenchmarkConfig(frame_counts={"A": 20, "B": 20, "C": 20, "D": 20}))

print(f"{'flux':4s} {'method':9s} {'min acc':>8s} {'mean spatial':>13s} {'rate':>7s} {'truth':>7s} {'err':>6s}")
for name, seq in ds.items():
    for method in ("threshold", "tlis", "spatial"):
        ev = evaluate_classical(seq, method)
        se = np.mean([f.spatial_error for f in ev.frames])
        rate = ev.rate.rate_mm_s if ev.rate is not None else float("nan")
        err = ev.rate_error if ev.rate is not None else float("nan")
        print(f"{name:4s} {method:9s} {ev.min_accuracy:8.4f} {se:13.4f} {rate:7.3f} "
              f"{ev.truth_rate_mm_s:7.3f} {err:6.1%}")

# Threshold mistakes wax blobs for fuel (worst on B), TLIS deletes whatever
# the last frame still shows, and the spatial filter smears the surface.
