"""Fuel-height tracking and regression-rate estimation from mask sequences.

Heights are measured in pixels from the bottom of the image (the chamber
floor) to the topmost fuel pixel of each column. A sequence of heights is
made monotone, averaged over columns, fitted with a cubic in time and
differentiated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .imgcore import ImageError, as_mask


@dataclass
class HeightSeries:
    times_s: np.ndarray  # (frames,)
    heights_px: np.ndarray  # (frames, columns)
    valid: np.ndarray  # (frames, columns) bool
    mm_per_px: float = 1.0
    image_height: int | None = None

    def __post_init__(self):
        self.times_s = np.asarray(self.times_s, dtype=float)
        self.heights_px = np.asarray(self.heights_px, dtype=float)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.heights_px.ndim != 2 or self.valid.shape != self.heights_px.shape:
            raise ValueError("heights and validity must be frames x columns")
        if len(self.times_s) != len(self.heights_px):
            raise ValueError("one time per frame required")
        if np.any(np.diff(self.times_s) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def n_frames(self) -> int:
        return self.heights_px.shape[0]


@dataclass
class RateResult:
    cubic_coeffs: np.ndarray  # a0..a3 of h(t) in px
    rate_mm_s: float
    rate_lower: float
    rate_upper: float
    t_start: float
    t_end: float
    per_time_rate: np.ndarray = field(default_factory=lambda: np.zeros(0))  # (times, rate) rows
    mean_heights: np.ndarray | None = None
    fit_times: np.ndarray | None = None
    bounds_note: str = ""  # why the bounds are undefined, if they are


class FitError(ValueError):
    pass


def extract_profile(mask) -> tuple[np.ndarray, np.ndarray]:
    """Per-column height of the topmost fuel pixel, scanning down from the top.

    Returns ``(heights, valid)``; empty columns get height 0 and are invalid.
    """
    m = as_mask(mask).astype(bool)
    h = m.shape[0]
    has = m.any(axis=0)
    top = np.argmax(m, axis=0)
    heights = np.where(has, h - top, 0).astype(float)
    return heights, has


def heights_from_masks(masks, times_s, mm_per_px: float = 1.0) -> HeightSeries:
    masks = [as_mask(m) for m in masks]
    if not masks:
        raise ValueError("no masks")
    shape = masks[0].shape
    if any(m.shape != shape for m in masks):
        raise ImageError("all masks must share one size")
    prof = [extract_profile(m) for m in masks]
    return HeightSeries(np.asarray(times_s, float), np.array([p[0] for p in prof]),
                        np.array([p[1] for p in prof]), mm_per_px, shape[0])


def enforce_monotonic(series: HeightSeries) -> HeightSeries:
    """Drop, per column, any frame whose height rises above the last kept height."""
    h = series.heights_px
    valid = series.valid.copy()
    last = np.full(h.shape[1], np.inf)
    for k in range(h.shape[0]):
        ok = valid[k] & (h[k] <= last)
        valid[k] = ok
        last = np.where(ok, h[k], last)
    return replace(series, valid=valid)


def mean_height_curve(series: HeightSeries, min_columns: int = 1):
    """Column-mean height per retained frame: ``(times, mean_heights, columns_used)``.

    Columns valid in every retained frame are averaged; a frame is retained
    if any column is valid in it. When no column survives in all retained
    frames, each frame falls back to the mean over its own valid columns.
    """
    keep = series.valid.any(axis=1)
    if not keep.any():
        raise FitError("no valid heights in any frame")
    valid = series.valid[keep]
    heights = series.heights_px[keep]
    common = valid.all(axis=0)
    if common.sum() >= min_columns:
        return series.times_s[keep], heights[:, common].mean(axis=1), common
    sums = np.where(valid, heights, 0.0).sum(axis=1)
    return series.times_s[keep], sums / valid.sum(axis=1), None


def fit_cubic(times, heights) -> np.ndarray:
    """Least-squares cubic ``h(t) = a0 + a1 t + a2 t^2 + a3 t^3``; returns ``a0..a3``."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(heights, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise FitError("times and heights must be equal-length vectors")
    if len(t) < 4:
        raise FitError(f"a cubic needs at least 4 points, got {len(t)}")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
        raise FitError("non-finite input")
    if len(np.unique(t)) < 4:
        raise FitError("rank-deficient design: fewer than 4 distinct times")
    # centre and scale time for conditioning, then map coefficients back
    c = t.mean()
    s = max(np.abs(t - c).max(), 1e-300)
    u = (t - c) / s
    X = np.vander(u, 4, increasing=True)
    b, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < 4:
        raise FitError("rank-deficient design")
    # h(t) = sum b_k ((t - c)/s)^k  ->  monomial coefficients in t
    poly = np.polynomial.Polynomial(b).convert(domain=[-1, 1], window=[-1, 1])
    shifted = poly(np.polynomial.Polynomial([-c / s, 1.0 / s]))
    coeffs = np.zeros(4)
    coeffs[: len(shifted.coef)] = shifted.coef
    return coeffs


def cubic_value(coeffs, t):
    return np.polynomial.polynomial.polyval(t, coeffs)


def cubic_derivative(coeffs, t):
    return np.polynomial.polynomial.polyval(t, np.polynomial.polynomial.polyder(coeffs))


def regression_rate(coeffs, t_start: float, t_end: float, mm_per_px: float, how: str = "average",
                    n_samples: int = 50) -> RateResult:
    """Regression rate from a fitted height curve.

    The local rate is ``-dh/dt * mm_per_px``. ``how="average"`` reports its
    time average over ``[t_start, t_end]``, i.e. the secant slope of the
    fit; ``how="midpoint"`` reports the local rate at mid-burn.
    """
    if not t_end > t_start:
        raise ValueError("t_end must be greater than t_start")
    coeffs = np.asarray(coeffs, dtype=float)
    if how == "average":
        rate = (cubic_value(coeffs, t_start) - cubic_value(coeffs, t_end)) * mm_per_px / (t_end - t_start)
    elif how == "midpoint":
        rate = -cubic_derivative(coeffs, 0.5 * (t_start + t_end)) * mm_per_px
    else:
        raise ValueError(f"unknown rate definition {how!r}")
    ts = np.linspace(t_start, t_end, n_samples)
    per_time = np.column_stack([ts, -cubic_derivative(coeffs, ts) * mm_per_px])
    rate = float(rate)
    return RateResult(coeffs, rate, rate, rate, t_start, t_end, per_time)


def rate_from_series(series: HeightSeries, how: str = "average", monotonic: bool = True) -> RateResult:
    s = enforce_monotonic(series) if monotonic else series
    t, mh, _ = mean_height_curve(s)
    coeffs = fit_cubic(t, mh)
    res = regression_rate(coeffs, float(t[0]), float(t[-1]), s.mm_per_px, how)
    res.mean_heights = mh
    res.fit_times = t
    return res


def rate_from_masks(masks, times_s, mm_per_px: float, how: str = "average") -> RateResult:
    """Full mask -> height -> monotone -> cubic -> rate pipeline."""
    return rate_from_series(heights_from_masks(masks, times_s, mm_per_px), how)


def per_column_rates(series: HeightSeries, how: str = "average") -> np.ndarray:
    """One cubic per column (columns with fewer than 4 retained frames give NaN)."""
    s = enforce_monotonic(series)
    out = np.full(s.heights_px.shape[1], np.nan)
    for c in range(s.heights_px.shape[1]):
        v = s.valid[:, c]
        t = s.times_s[v]
        if len(t) < 4:
            continue
        coeffs = fit_cubic(t, s.heights_px[v, c])
        out[c] = regression_rate(coeffs, t[0], t[-1], s.mm_per_px, how).rate_mm_s
    return out


UNCERTAINTY_NORMS = ("image", "fuel")


def uncertainty_masks(mean_mask, uncertainty, norm: str = "image"):
    """Lower/upper masks from an entropy map.

    Pixels with entropy strictly above ``tau`` form the uncertain set; it is
    added to (OR) and removed from (AND NOT) the mean mask. ``tau`` is the
    summed entropy divided by the pixel count of the whole map
    (``norm="image"``) or by the number of fuel pixels in the mean mask
    (``norm="fuel"``).
    """
    m = as_mask(mean_mask).astype(bool)
    u = np.asarray(uncertainty, dtype=float)
    if u.shape != m.shape:
        raise ImageError(f"uncertainty map {u.shape} does not match mask {m.shape}")
    if norm == "image":
        count = u.size
    elif norm == "fuel":
        count = max(int(m.sum()), 1)
    else:
        raise ValueError(f"unknown uncertainty normalization {norm!r}")
    # correctly rounded mean, clamped so a uniform map yields an empty set
    tau = min(math.fsum(u.ravel()) / count, float(u.max()))
    um = u > tau
    return (m & ~um).astype(np.uint8), (m | um).astype(np.uint8)


def rate_uncertainty(mean_masks, uncertainty_maps, times_s, mm_per_px: float, how: str = "average",
                     norm: str = "image"):
    """Regression rate with a symmetric error bar from MC-dropout entropy maps.

    Returns a :class:`RateResult` whose bounds are ``rate -/+ bar`` where
    ``bar`` is the largest deviation of the rates computed from the upper
    and lower mask sets. A variant set with no measurable profile (for
    instance when the uncertain set swallows every fuel pixel) leaves the
    bounds undefined: they are NaN and ``bounds_note`` says why. The mean
    rate itself is still reported.
    """
    if len(mean_masks) != len(uncertainty_maps):
        raise ImageError("one uncertainty map per mask required")
    pairs = [uncertainty_masks(m, u, norm) for m, u in zip(mean_masks, uncertainty_maps)]
    base = rate_from_masks(mean_masks, times_s, mm_per_px, how)
    devs, failed = [], []
    for k, name in enumerate(("lower", "upper")):
        try:
            r = rate_from_masks([p[k] for p in pairs], times_s, mm_per_px, how)
        except FitError as exc:
            failed.append(f"{name} masks: {exc}")
            continue
        devs.append(abs(r.rate_mm_s - base.rate_mm_s))
    if failed:
        base.rate_lower = base.rate_upper = float("nan")
        base.bounds_note = "; ".join(failed)
        return base
    bar = max(devs)
    base.rate_lower = base.rate_mm_s - bar
    base.rate_upper = base.rate_mm_s + bar
    return base
