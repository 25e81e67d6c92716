"""
The command line, end to end
============================

The same pipeline through the ``slabrate`` command: synthesize a
noise-free dataset, segment it, compute rates, and compare with the
programmed truth. Each step writes a ``run.json`` that can be passed back
as ``--config`` to repeat it.

    python3 demos/05_command_line.py [out_dir]
"""

import csv
import sys
from pathlib import Path

from slabrate.cli import main

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/05")
out.mkdir(parents=True, exist_ok=True)
cfg = out / "run.ini"
cfg.write_text("""
[run]
seed = 1
[synth]
frames = 12
noise = false
profile = tilted
""")


def run(*argv):
    print("$ slabrate", " ".join(argv))
    status = main(list(argv))
    if status:
        sys.exit(status)


run("synth", "--config", str(cfg), "--out", str(out / "data"))
run("segment", "--config", str(cfg), "--dataset", str(out / "data"), "--method", "threshold",
    "--out", str(out / "masks"))
run("rate", "--config", str(cfg), "--masks", str(out / "masks"), "--out", str(out / "rates"))

with open(out / "rates" / "rates.csv", newline="") as fh:
    for row in csv.DictReader(fh):
        with open(out / "data" / row["sequence"] / "truth_rate.csv", newline="") as t:
            truth = float(next(csv.DictReader(t))["rate_mm_s"])
        rate = float(row["rate_mm_s"])
        print(f"{row['sequence']}: measured {rate:.5f} mm/s, programmed {truth:.5f}, "
              f"relative error {abs(rate - truth) / truth:.1e}")

# Repeat the segmentation from its own record.
run("segment", "--config", str(out / "masks" / "run.json"), "--method", "threshold", "--out", str(out / "again"))
