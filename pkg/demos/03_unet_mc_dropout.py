"""
U-Net with Monte-Carlo dropout
==============================

Train a small U-Net on part of the benchmark, predict the rest with 20
dropout samples, and turn the entropy maps into rate error bars.

The defaults train for a few minutes on one CPU core. Pass ``--quick``
for a smoke run that finishes in seconds (and segments poorly).

    python3 demos/03_unet_mc_dropout.py [--quick] [out_dir]
"""

import sys
from pathlib import Path

import numpy as np

from slabrate.evalharness import evaluate_unet, train_model
from slabrate.neuralseg import AugmentConfig, Augmenter, TrainConfig, UNetConfig, save_checkpoint
from slabrate.regression import rate_uncertainty
from slabrate.report import write_report
from slabrate.slabsynth import BenchmarkConfig, generate_benchmark

quick = "--quick" in sys.argv
args = [a for a in sys.argv[1:] if a != "--quick"]
out = Path(args[0] if args else "demo_out/03")

frames = 6 if quick else 20
ds = generate_benchmark(BenchmarkConfig(frame_counts={k: frames for k in "ABCD"}))

unet = UNetConfig(depth=2 if quick else 4, base_channels=4 if quick else 8, height=32 if quick else 128,
                  width=32 if quick else 128)
train = TrainConfig(max_epochs=2 if quick else 30, patience=10)
# Flips only: the fuel always sits at the bottom of the chamber.
aug = Augmenter(AugmentConfig(vflip_p=0.0, max_rotation_deg=0.0))

model = train_model(ds, list(ds), unet, train, aug, val_fraction=0.2)
print(f"trained {model.history.epochs} epochs, best epoch {model.history.best_epoch}")
out.mkdir(parents=True, exist_ok=True)
save_checkpoint(out / "model.ckpt", model.params, history=model.history)

results = []
for name, seq in ds.items():
    ev = evaluate_unet(model.params, seq, samples=20, seed=0)
    results.append(("all", ev))
    if ev.rate is None:
        print(f"{name}: no rate could be fitted")
        continue
    r = ev.rate
    print(f"{name}: min accuracy {ev.min_accuracy:.4f}, worst spatial error {ev.max_spatial_error:.2e}, "
          f"rate {r.rate_mm_s:.3f} [{r.rate_lower:.3f}, {r.rate_upper:.3f}] mm/s, "
          f"truth {ev.truth_rate_mm_s:.3f}")
    if r.bounds_note:
        print(f"   no error bar: {r.bounds_note}")
    u = ev.uncertainty[len(ev.uncertainty) // 2]
    fuel = ev.masks[len(ev.masks) // 2].astype(bool)
    fuel_u = u[fuel].mean() if fuel.any() else float("nan")
    back_u = u[~fuel].mean() if (~fuel).any() else float("nan")
    print(f"   mid-burn entropy: fuel {fuel_u:.4f}, background {back_u:.4f}, "
          f"map mean {u.mean():.4f}, max {u.max():.3f} (ln 2 = {np.log(2):.3f})")
    # When the fuel plateau sits above the map mean, the uncertain set covers
    # the whole slab. Normalizing by the fuel-pixel count keeps only the band
    # around the surface.
    alt = rate_uncertainty(ev.masks, ev.uncertainty, seq.times, seq.mm_per_px, norm="fuel")
    print(f"   fuel-normalized bounds [{alt.rate_lower:.3f}, {alt.rate_upper:.3f}] mm/s")

for p in write_report(out, results):
    print("wrote", p)
