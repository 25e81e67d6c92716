import numpy as np
import pytest

from slabrate.imgcore import ImageError
from slabrate.regression import (FitError, HeightSeries, cubic_derivative, enforce_monotonic, extract_profile,
                                 fit_cubic, heights_from_masks, mean_height_curve, per_column_rates,
                                 rate_from_masks, rate_from_series, rate_uncertainty, regression_rate,
                                 uncertainty_masks)


def column_mask(heights, rows):
    """Mask whose column c holds fuel in its bottom heights[c] rows."""
    heights = np.asarray(heights, int)
    r = np.arange(rows)[:, None]
    return (r >= rows - heights[None, :]).astype(np.uint8)


def series(h, times=None):
    h = np.asarray(h, float)
    if h.ndim == 1:
        h = h[:, None]
    t = np.arange(len(h), dtype=float) if times is None else times
    return HeightSeries(t, h, np.ones(h.shape, bool))


# -- profiles -------------------------------------------------------------------------

def test_full_and_empty_columns():
    m = np.zeros((100, 3), np.uint8)
    m[:, 0] = 1
    m[60:, 2] = 1
    h, v = extract_profile(m)
    np.testing.assert_array_equal(h, [100, 0, 40])
    np.testing.assert_array_equal(v, [True, False, True])


def test_topmost_pixel_wins():
    m = np.zeros((10, 1), np.uint8)
    m[2, 0] = 1  # isolated pixel above a gap
    m[7:, 0] = 1
    assert extract_profile(m)[0][0] == 8


def test_empty_mask_all_invalid():
    h, v = extract_profile(np.zeros((5, 4), np.uint8))
    assert not v.any() and not h.any()


def test_heights_from_masks_shape_check():
    with pytest.raises(ImageError):
        heights_from_masks([np.zeros((4, 4)), np.zeros((5, 4))], [0, 1])


def test_series_validation():
    with pytest.raises(ValueError):
        HeightSeries([0, 0], np.zeros((2, 1)), np.ones((2, 1), bool))
    with pytest.raises(ValueError):
        HeightSeries([0, 1, 2], np.zeros((2, 1)), np.ones((2, 1), bool))


# -- monotonic constraint ----------------------------------------------------------------

def test_monotonic_drops_rise():
    s = enforce_monotonic(series([10, 9, 9.5, 8]))
    np.testing.assert_array_equal(s.valid[:, 0], [True, True, False, True])


def test_monotonic_identity_on_non_increasing():
    s = series([10, 9, 9, 7, 7, 3])
    assert np.array_equal(enforce_monotonic(s).valid, s.valid)


def test_monotonic_increasing_keeps_first_only():
    s = enforce_monotonic(series([1, 2, 3, 4]))
    np.testing.assert_array_equal(s.valid[:, 0], [True, False, False, False])


def test_monotonic_skips_invalid_frames():
    s = HeightSeries([0, 1, 2, 3], np.array([[10.0], [0.0], [9.0], [8.0]]),
                     np.array([[True], [False], [True], [True]]))
    np.testing.assert_array_equal(enforce_monotonic(s).valid[:, 0], [True, False, True, True])


# -- cubic fit ----------------------------------------------------------------------------

def test_fit_linear():
    t = np.linspace(0, 5, 9)
    np.testing.assert_allclose(fit_cubic(t, 10 - t), [10, -1, 0, 0], atol=1e-9)


def test_fit_exact_cubic():
    t = np.linspace(0, 8, 12)
    c = np.array([5, -0.2, 0.01, -0.001])
    np.testing.assert_allclose(fit_cubic(t, np.polynomial.polynomial.polyval(t, c)), c, atol=1e-8)


def test_fit_residual_orthogonal(rng):
    t = np.sort(rng.uniform(0, 10, 25))
    y = rng.standard_normal(25)
    c = fit_cubic(t, y)
    res = y - np.polynomial.polynomial.polyval(t, c)
    X = np.vander(t, 4, increasing=True)
    assert np.all(np.abs(X.T @ res) <= 1e-9 * np.abs(X).T @ np.abs(y))


def test_fit_errors():
    with pytest.raises(FitError):
        fit_cubic([0, 1, 2], [1, 2, 3])
    with pytest.raises(FitError):
        fit_cubic([0, 0, 1, 1, 2], [1, 1, 2, 2, 3])
    with pytest.raises(FitError):
        fit_cubic([0, 1, 2, np.nan], [1, 2, 3, 4])


# -- rate -------------------------------------------------------------------------------------

def test_rate_constant_slope():
    r = regression_rate([10, -1, 0, 0], 0, 5, 1.0)
    assert r.rate_mm_s == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(r.per_time_rate[:, 1], 1.0, atol=1e-12)


def test_rate_zero_for_constant_height():
    assert regression_rate([7, 0, 0, 0], 0, 3, 0.5).rate_mm_s == 0.0


def test_rate_derivative_analytic():
    c = [5, -0.2, 0.01, -0.001]
    # dh/dt = -0.2 + 0.02 t - 0.003 t^2 ; at t = 2: -0.172
    assert cubic_derivative(c, 2.0) == pytest.approx(-0.172, abs=1e-12)
    r = regression_rate(c, 1, 3, 2.0, how="midpoint")
    assert r.rate_mm_s == pytest.approx(0.344, abs=1e-9)


def test_rate_average_is_secant():
    c = np.array([5, -0.2, 0.01, -0.001])
    h = np.polynomial.polynomial.polyval([1.0, 4.0], c)
    r = regression_rate(c, 1, 4, 0.3)
    assert r.rate_mm_s == pytest.approx((h[0] - h[1]) * 0.3 / 3, rel=1e-12)


def test_rate_precondition():
    with pytest.raises(ValueError):
        regression_rate([1, 0, 0, 0], 2, 2, 1.0)
    with pytest.raises(ValueError):
        regression_rate([1, 0, 0, 0], 0, 2, 1.0, how="median")


def test_pipeline_integer_constant_rate_exact():
    # 2 px per frame every 0.5 s at 0.25 mm/px: 1 mm/s
    rows, cols = 80, 30
    h0 = 60 + (np.arange(cols) % 5)
    times = np.arange(12) * 0.5
    masks = [column_mask(h0 - 2 * k, rows) for k in range(12)]
    r = rate_from_masks(masks, times, 0.25)
    assert r.rate_mm_s == pytest.approx(1.0, rel=1e-6)


def test_pipeline_neglects_noise_bumps():
    rows, cols = 50, 8
    times = np.arange(8, dtype=float)
    masks = [column_mask(np.full(cols, 40 - 3 * k), rows) for k in range(8)]
    masks[3] = column_mask(np.full(cols, 45), rows)  # a splash makes the fuel look taller
    r = rate_from_masks(masks, times, 1.0)
    assert r.rate_mm_s == pytest.approx(3.0, rel=1e-9)
    assert len(r.fit_times) == 7


def test_mean_height_fallback_when_no_common_column():
    h = np.array([[5.0, 0.0], [0.0, 4.0], [3.0, 0.0], [0.0, 2.0]])
    v = h > 0
    t, mh, cols = mean_height_curve(HeightSeries(np.arange(4.0), h, v))
    assert cols is None
    np.testing.assert_array_equal(mh, [5, 4, 3, 2])


def test_per_column_rates():
    rows = 40
    masks = [column_mask([30 - k, 30 - 2 * k], rows) for k in range(6)]
    s = heights_from_masks(masks, np.arange(6.0), 1.0)
    np.testing.assert_allclose(per_column_rates(s), [1.0, 2.0], rtol=1e-9)
    assert rate_from_series(s).rate_mm_s == pytest.approx(1.5, rel=1e-9)


# -- uncertainty -----------------------------------------------------------------------------

def burn(rows=40, cols=10, n=8):
    return [column_mask(np.full(cols, 30 - 2 * k), rows) for k in range(n)], np.arange(n, dtype=float)


def test_zero_uncertainty_zero_bar():
    masks, t = burn()
    r = rate_uncertainty(masks, [np.zeros(m.shape) for m in masks], t, 1.0)
    assert r.rate_lower == r.rate_mm_s == r.rate_upper


def test_uniform_uncertainty_zero_bar():
    masks, t = burn()
    r = rate_uncertainty(masks, [np.full(m.shape, 0.3) for m in masks], t, 1.0)
    assert r.rate_lower == r.rate_mm_s == r.rate_upper


def test_uncertainty_inside_fuel_leaves_upper_unchanged():
    masks, t = burn()
    maps = []
    for m in masks:
        u = np.zeros(m.shape)
        u[-3:, :] = 0.6  # deep inside the fuel
        maps.append(u)
    lo, hi = uncertainty_masks(masks[0], maps[0])
    assert np.array_equal(hi, masks[0])
    r = rate_uncertainty(masks, maps, t, 1.0)
    upper_only = rate_from_masks([uncertainty_masks(m, u)[1] for m, u in zip(masks, maps)], t, 1.0)
    assert upper_only.rate_mm_s == r.rate_mm_s


def test_uncertainty_band_widens_bounds():
    masks, t = burn()
    maps = []
    for k, m in enumerate(masks):
        u = np.zeros(m.shape)
        top = 40 - (30 - 2 * k)
        u[top - 2 - k // 3: top + 1, :] = 0.5  # band straddling the surface, growing in time
        maps.append(u)
    r = rate_uncertainty(masks, maps, t, 1.0)
    assert r.rate_lower < r.rate_mm_s < r.rate_upper
    assert r.rate_upper - r.rate_mm_s == pytest.approx(r.rate_mm_s - r.rate_lower)


def test_uncertainty_shape_errors():
    masks, t = burn()
    with pytest.raises(ImageError):
        rate_uncertainty(masks, [np.zeros((3, 3))] * len(masks), t, 1.0)
    with pytest.raises(ImageError):
        rate_uncertainty(masks, [], t, 1.0)


def confident_background_maps(masks, band: bool = False):
    """Fuel interior less certain than the background, as a well-trained network produces."""
    maps = []
    for m in masks:
        u = np.where(m.astype(bool), 0.014, 0.002)
        if band:
            top = int(np.argmax(m.any(axis=1)))
            u[max(top - 1, 0): top + 2, :] = 0.5
        maps.append(u)
    return maps


def test_interior_swallowed_by_uncertain_set_leaves_bounds_undefined():
    masks, t = burn()
    maps = confident_background_maps(masks)
    lo, _ = uncertainty_masks(masks[0], maps[0])
    assert lo.sum() == 0
    r = rate_uncertainty(masks, maps, t, 1.0)
    assert r.rate_mm_s == rate_from_masks(masks, t, 1.0).rate_mm_s
    assert np.isnan(r.rate_lower) and np.isnan(r.rate_upper)
    assert "lower" in r.bounds_note


def test_fuel_normalization_keeps_interior():
    masks, t = burn()
    maps = confident_background_maps(masks)
    lo, hi = uncertainty_masks(masks[0], maps[0], norm="fuel")
    assert np.array_equal(lo, masks[0]) and np.array_equal(hi, masks[0])
    r = rate_uncertainty(masks, confident_background_maps(masks, band=True), t, 1.0, norm="fuel")
    assert r.bounds_note == ""
    assert r.rate_lower < r.rate_mm_s < r.rate_upper


def test_fuel_normalization_empty_mask_and_unknown_norm():
    empty = np.zeros((5, 5), np.uint8)
    u = np.zeros((5, 5))
    u[2, 2] = 1.0
    lo, hi = uncertainty_masks(empty, u, norm="fuel")
    assert lo.sum() == 0 and hi.sum() == 0  # tau clamps to max(u)
    with pytest.raises(ValueError):
        uncertainty_masks(empty, u, norm="median")
