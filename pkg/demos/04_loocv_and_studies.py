"""
Cross-validation by flux and the single-flux studies
====================================================

Leave one flux out, train on the rest, and test on the held-out burn. Then
train one network per flux (in colour and in grayscale) and test each on
every flux. Everything here runs at toy scale so it finishes quickly; the
same calls at 128 x 128 with base 8 are what the acceptance tests use.

    python3 demos/04_loocv_and_studies.py [out_dir]
"""

import sys
from pathlib import Path

from slabrate.evalharness import run_flux_study, run_loocv
from slabrate.neuralseg import AugmentConfig, Augmenter, TrainConfig, UNetConfig
from slabrate.report import write_report
from slabrate.slabsynth import BenchmarkConfig, generate_benchmark

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/04")
ds = generate_benchmark(BenchmarkConfig(width_px=256, height_px=64, frame_counts={k: 6 for k in "ABCD"}))
unet = UNetConfig(depth=2, base_channels=4, height=32, width=32)
train = TrainConfig(max_epochs=40, patience=10)
aug = Augmenter(AugmentConfig(vflip_p=0.0, max_rotation_deg=0.0))

# The fold that holds out D never sees saturated frames, so it should
# trail the other three.
folds = run_loocv(ds, unet, train, aug, samples=5)
for f in folds:
    ev = f.evaluation
    print(f"{f.spec.name}: min accuracy {ev.min_accuracy:.3f}, worst spatial error {ev.max_spatial_error:.3f}")
write_report(out / "loocv", [(f.spec.name, f.evaluation) for f in folds], accuracy_plot="loocv_accuracy.svg")

for mode in ("rgb", "grayscale"):
    study = run_flux_study(ds, unet, train, mode, aug, samples=5)
    print(f"\n{mode}: mean spatial error, rows = training flux, columns = test flux")
    table = study.table("mean_spatial_error")
    tests = sorted({t for _, t in table})
    print("      " + "".join(f"{t:>8s}" for t in tests))
    for m in study.models:
        print(f"{m:6s}" + "".join(f"{table[(m, t)]:8.3f}" for t in tests))
    write_report(out / mode, [(m, ev) for (m, _), ev in study.cells.items()])
