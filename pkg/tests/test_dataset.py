import shutil

import numpy as np
import pytest

from slabrate.dataset import (ManifestError, load_dataset, load_mask_sequence, load_sequence, read_manifest,
                              save_dataset, sequence_dirs)
from slabrate.imgcore import ImageError
from slabrate.slabsynth import BenchmarkConfig, generate_benchmark


@pytest.fixture
def ds(tmp_path):
    data = generate_benchmark(BenchmarkConfig(width_px=40, height_px=24, frame_counts={"A": 4, "B": 3}))
    save_dataset(data, tmp_path / "data")
    return data, tmp_path / "data"


def test_round_trip(ds):
    data, root = ds
    back = load_dataset(root)
    assert list(back) == ["A", "B"]
    for k in data:
        a, b = data[k], back[k]
        assert a.labels == b.labels
        assert np.array_equal(a.times, b.times)
        assert all(np.array_equal(x.pixels, y.pixels) for x, y in zip(a.frames, b.frames))
        assert all(np.array_equal(x, y) for x, y in zip(a.truth_masks, b.truth_masks))
        assert b.truth_rate_mm_s == a.truth_rate_mm_s and b.flux_kg_m2s == a.flux_kg_m2s


def test_without_truth(ds):
    _, root = ds
    seq = load_sequence(root / "A", with_truth=False)
    assert seq.truth_masks is None


def test_sequence_dirs(ds, tmp_path):
    _, root = ds
    assert [p.name for p in sequence_dirs(root)] == ["A", "B"]
    assert sequence_dirs(root / "A") == [root / "A"]
    (tmp_path / "empty").mkdir()
    with pytest.raises(ManifestError):
        sequence_dirs(tmp_path / "empty")


def test_missing_manifest(tmp_path):
    with pytest.raises(ManifestError):
        read_manifest(tmp_path)


def test_bad_manifests(ds):
    _, root = ds
    path = root / "A" / "manifest.csv"
    lines = path.read_text().splitlines()
    path.write_text("\n".join([lines[0], lines[2], lines[1]] + lines[3:]) + "\n")
    with pytest.raises(ManifestError, match="increasing"):
        read_manifest(root / "A")
    path.write_text("label,time_s\nA1,0\n")
    with pytest.raises(ManifestError, match="header"):
        read_manifest(root / "A")
    path.write_text(lines[0] + "\n")
    with pytest.raises(ManifestError, match="no frames"):
        read_manifest(root / "A")
    path.write_text(lines[0] + "\nA1,zero,1,40,24,0.25\n")
    with pytest.raises(ManifestError):
        read_manifest(root / "A")


def test_size_mismatch_detected(ds):
    _, root = ds
    path = root / "A" / "manifest.csv"
    path.write_text(path.read_text().replace(",40,24,", ",41,24,"))
    with pytest.raises(ImageError):
        load_sequence(root / "A")


def test_mask_sequence(ds):
    _, root = ds
    # the truth dir has no manifest of its own; copy one in to use it as a mask directory
    shutil.copy(root / "A" / "manifest.csv", root / "A" / "truth" / "manifest.csv")
    rows, masks = load_mask_sequence(root / "A" / "truth")
    assert [r.label for r in rows] == ["A1", "A2", "A3", "A4"]
    assert all(m.dtype == np.uint8 and set(np.unique(m)) <= {0, 1} for m in masks)
