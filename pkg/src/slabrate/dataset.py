"""On-disk dataset layout.

A dataset root holds one directory per oxidizer flux (``A``, ``B``, ...).
Each sequence directory contains::

    A1.png A2.png ...      frames, named <letter><index>
    manifest.csv           label,time_s,flux_kg_m2s,width,height,mm_per_px
    truth/A1.png ...       optional ground-truth masks
    truth_rate.csv         optional programmed regression rate

Mask directories written by segmentation or prediction reuse the same
manifest so that downstream steps can find times and scales.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .imgcore import ImageFrame, load_frame, load_mask, save_frame, save_mask

MANIFEST = "manifest.csv"
MANIFEST_FIELDS = ["label", "time_s", "flux_kg_m2s", "width", "height", "mm_per_px"]
TRUTH_DIR = "truth"
TRUTH_RATE = "truth_rate.csv"

# flux letter -> (G in kg/m^2-s, frame count)
FLUX_SEQUENCES = {
    "A": (5.91, 37),
    "B": (9.58, 36),
    "C": (18.59, 39),
    "D": (22.19, 38),
}


class ManifestError(ValueError):
    pass


@dataclass
class ManifestRow:
    label: str
    time_s: float
    flux_kg_m2s: float
    width: int
    height: int
    mm_per_px: float


@dataclass
class Sequence:
    """Frames of one burn, ordered by capture time."""

    name: str
    flux_kg_m2s: float
    mm_per_px: float
    frames: list[ImageFrame]
    truth_masks: list[np.ndarray] | None = None
    truth_rate_mm_s: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return np.array([f.time_s for f in self.frames])

    @property
    def labels(self) -> list[str]:
        return [f.label for f in self.frames]

    @property
    def native_shape(self) -> tuple[int, int]:
        return self.frames[0].shape

    def __len__(self):
        return len(self.frames)


def read_manifest(directory) -> list[ManifestRow]:
    path = Path(directory) / MANIFEST
    if not path.is_file():
        raise ManifestError(f"missing manifest: {path}")
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(MANIFEST_FIELDS) - set(reader.fieldnames):
            raise ManifestError(f"{path}: header must contain {MANIFEST_FIELDS}")
        for rec in reader:
            try:
                rows.append(ManifestRow(rec["label"], float(rec["time_s"]), float(rec["flux_kg_m2s"]),
                                        int(rec["width"]), int(rec["height"]), float(rec["mm_per_px"])))
            except (TypeError, ValueError) as exc:
                raise ManifestError(f"{path}: bad row {rec}: {exc}") from exc
    if not rows:
        raise ManifestError(f"{path}: no frames listed")
    times = [r.time_s for r in rows]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ManifestError(f"{path}: times must be strictly increasing")
    return rows


def write_manifest(directory, rows: list[ManifestRow]) -> None:
    with open(Path(directory) / MANIFEST, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_FIELDS)
        for r in rows:
            w.writerow([r.label, repr(float(r.time_s)), repr(float(r.flux_kg_m2s)), r.width, r.height,
                        repr(float(r.mm_per_px))])


def manifest_rows(seq: Sequence) -> list[ManifestRow]:
    h, w = seq.native_shape
    return [ManifestRow(f.label, f.time_s, seq.flux_kg_m2s, w, h, seq.mm_per_px) for f in seq.frames]


def save_sequence(seq: Sequence, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for f in seq.frames:
        save_frame(f, directory / f"{f.label}.png")
    write_manifest(directory, manifest_rows(seq))
    if seq.truth_masks is not None:
        (directory / TRUTH_DIR).mkdir(exist_ok=True)
        for f, m in zip(seq.frames, seq.truth_masks):
            save_mask(m, directory / TRUTH_DIR / f"{f.label}.png")
    if seq.truth_rate_mm_s is not None:
        with open(directory / TRUTH_RATE, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sequence", "flux_kg_m2s", "rate_mm_s"])
            w.writerow([seq.name, repr(float(seq.flux_kg_m2s)), repr(float(seq.truth_rate_mm_s))])
    return directory


def read_truth_rate(directory) -> float | None:
    path = Path(directory) / TRUTH_RATE
    if not path.is_file():
        return None
    with open(path, newline="") as fh:
        rec = next(csv.DictReader(fh))
    return float(rec["rate_mm_s"])


def load_sequence(directory, with_truth: bool = True) -> Sequence:
    directory = Path(directory)
    rows = read_manifest(directory)
    frames = [load_frame(directory / f"{r.label}.png", time_s=r.time_s, label=r.label,
                         flux_kg_m2s=r.flux_kg_m2s, expect_shape=(r.height, r.width)) for r in rows]
    truth = None
    if with_truth and (directory / TRUTH_DIR).is_dir():
        truth = [load_mask(directory / TRUTH_DIR / f"{r.label}.png", expect_shape=(r.height, r.width))
                 for r in rows]
    return Sequence(name=directory.name, flux_kg_m2s=rows[0].flux_kg_m2s, mm_per_px=rows[0].mm_per_px,
                    frames=frames, truth_masks=truth, truth_rate_mm_s=read_truth_rate(directory))


def load_mask_sequence(directory):
    """Masks written by a segmentation step: ``(rows, masks)`` in manifest order."""
    directory = Path(directory)
    rows = read_manifest(directory)
    masks = [load_mask(directory / f"{r.label}.png", expect_shape=(r.height, r.width)) for r in rows]
    return rows, masks


def sequence_dirs(root) -> list[Path]:
    """Sequence directories below ``root`` (or ``root`` itself if it is one)."""
    root = Path(root)
    if (root / MANIFEST).is_file():
        return [root]
    dirs = sorted(p for p in root.iterdir() if p.is_dir() and (p / MANIFEST).is_file())
    if not dirs:
        raise ManifestError(f"no sequence directories with {MANIFEST} under {root}")
    return dirs


def load_dataset(root, with_truth: bool = True) -> dict[str, Sequence]:
    return {d.name: load_sequence(d, with_truth) for d in sequence_dirs(root)}


def save_dataset(dataset: dict[str, Sequence], root) -> Path:
    root = Path(root)
    for name, seq in dataset.items():
        save_sequence(seq, root / name)
    return root
