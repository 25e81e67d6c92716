import numpy as np
import pytest

from oracles import otsu_oracle
from slabrate.classicseg import (DegenerateHistogramError, box_mean, otsu_threshold, quantize, segment_sequence,
                                 segment_threshold, spatial_filter, spatial_filter_segment, tlis)
from slabrate.imgcore import ImageError, ImageFrame
from slabrate.slabsynth import BurnScenario, generate


def naive_box(img, k):
    before = (k - 1) // 2
    p = np.pad(img, ((before, k - 1 - before), (before, k - 1 - before)), mode="edge")
    out = np.empty_like(img)
    for i in range(img.shape[0]):
        for j in range(img.shape[1]):
            out[i, j] = p[i:i + k, j:j + k].sum() / (k * k)
    return out


@pytest.mark.parametrize("seed", range(50))
def test_otsu_matches_exhaustive_oracle(seed):
    r = np.random.default_rng(seed)
    img = r.integers(0, 256, (32, 32)) / 255.0
    k, var = otsu_oracle(quantize(img))
    res = otsu_threshold(img)
    assert res.level == k
    assert res.threshold == k / 255
    assert res.between_class_variance == pytest.approx(float(var) / 255 ** 2, rel=1e-12)


def test_otsu_two_populations_lowest_tie():
    img = np.zeros((4, 4))
    img[:2] = 1.0
    res = otsu_threshold(img)
    assert res.level == 1 and res.threshold == 1 / 255
    assert 0.0 < res.threshold < 1.0


def test_otsu_threshold_inside_range(rng):
    for _ in range(20):
        img = rng.uniform(0.2, 0.7, (10, 10))
        res = otsu_threshold(img)
        q = quantize(img)
        assert q.min() < res.level <= q.max()


def test_otsu_constant_is_degenerate():
    with pytest.raises(DegenerateHistogramError):
        otsu_threshold(np.full((5, 5), 0.4))


def test_segment_two_levels(rng):
    img = np.where(rng.random((12, 12)) > 0.5, 0.9, 0.1)
    assert np.array_equal(segment_threshold(img), (img == 0.9).astype(np.uint8))


def test_segment_invert(rng):
    img = np.where(rng.random((12, 12)) > 0.5, 0.9, 0.1)
    assert np.array_equal(segment_threshold(img, invert=True), (img == 0.1).astype(np.uint8))


def test_segment_rgb_uses_grayscale():
    px = np.zeros((4, 4, 3))
    px[:2, :, 0] = 1.0  # bright red rows: gray 0.2989
    mask = segment_threshold(ImageFrame(px))
    assert mask[:2].all() and not mask[2:].any()


def test_segment_noise_free_synthetic_is_exact():
    g = generate(BurnScenario(width_px=96, height_px=64, frame_times_s=(0.0, 1.0, 2.0), seed=3))
    for f, t in zip(g.frames, g.truth_masks):
        assert np.array_equal(segment_threshold(f), t)


def test_tlis_last_empty_is_identity(rng):
    ms = [(rng.random((6, 6)) > 0.5).astype(np.uint8) for _ in range(3)] + [np.zeros((6, 6), np.uint8)]
    out = tlis(ms)
    for a, b in zip(ms, out):
        assert np.array_equal(a, b)


def test_tlis_removes_last_mask_pixels(rng):
    ms = [(rng.random((6, 6)) > 0.5).astype(np.uint8) for _ in range(4)]
    out = tlis(ms)
    for o in out:
        assert not np.any(o[ms[-1] == 1])
    assert not out[-1].any()


def test_tlis_self_subtraction(rng):
    m = (rng.random((6, 6)) > 0.5).astype(np.uint8)
    out = tlis([m.copy(), m])
    assert not out[0].any()


def test_tlis_errors():
    with pytest.raises(ValueError):
        tlis([])
    with pytest.raises(ValueError):
        tlis([np.zeros((2, 2), np.uint8)])
    with pytest.raises(ImageError):
        tlis([np.zeros((2, 2), np.uint8), np.zeros((3, 2), np.uint8)])


@pytest.mark.parametrize("k", [1, 2, 3, 5, 30])
def test_box_mean_matches_naive(rng, k):
    img = rng.random((37, 45))
    np.testing.assert_allclose(box_mean(img, k), naive_box(img, k), atol=1e-12, rtol=0)


def test_speck_diluted():
    img = np.zeros((40, 40))
    img[20, 20] = 1.0
    out = box_mean(img, 30)
    assert out.max() == pytest.approx(1 / 900, abs=1e-15)
    np.testing.assert_allclose(out, naive_box(img, 30), atol=1e-12)


def test_spatial_filter_constant_then_degenerate():
    f = ImageFrame(np.full((80, 90, 3), 0.5))
    np.testing.assert_allclose(spatial_filter(f), 0.5 * (0.2989 + 0.5870 + 0.1140), atol=1e-15)
    with pytest.raises(DegenerateHistogramError):
        spatial_filter_segment(f)


def test_spatial_output_is_downsampled(rng):
    f = ImageFrame(rng.random((80, 100, 3)))
    m = spatial_filter_segment(f)
    assert m.shape == (40, 50) and set(np.unique(m)) <= {0, 1}


def test_spatial_filter_too_small():
    with pytest.raises(ImageError):
        spatial_filter(ImageFrame(np.zeros((50, 200, 3))))


@pytest.mark.parametrize("method", ["threshold", "tlis", "spatial"])
def test_segment_sequence_shapes(method):
    g = generate(BurnScenario(width_px=128, height_px=64, frame_times_s=(0.0, 1.0, 2.0), seed=1))
    masks, thr = segment_sequence(g.frames, method)
    assert len(masks) == len(thr) == 3
    for m in masks:
        assert m.shape == (64, 128) and set(np.unique(m)) <= {0, 1}


def test_segment_sequence_unknown_method():
    with pytest.raises(ValueError):
        segment_sequence([ImageFrame(np.zeros((4, 4, 3)))], "watershed")
