"""Baseline segmentation: Otsu thresholding, last-image subtraction, mean filtering."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imgcore import ImageError, ImageFrame, as_mask, gray_array, resize_array

LEVELS = 256


class DegenerateHistogramError(ValueError):
    """Otsu is undefined: no threshold splits the histogram into two classes."""


@dataclass(frozen=True)
class OtsuResult:
    threshold: float
    between_class_variance: float
    level: int


def _gray_pixels(frame) -> np.ndarray:
    if isinstance(frame, ImageFrame):
        px = frame.pixels
        return gray_array(px) if px.shape[2] == 3 else px[:, :, 0]
    a = np.asarray(frame, dtype=np.float64)
    if a.ndim == 3:
        a = gray_array(a) if a.shape[2] == 3 else a[:, :, 0]
    return a


def quantize(gray: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.asarray(gray) * (LEVELS - 1)), 0, LEVELS - 1).astype(np.intp)


def otsu_threshold(gray) -> OtsuResult:
    """Otsu's threshold over 256 levels.

    A level ``k`` splits pixels into ``q < k`` and ``q >= k``. The returned
    level maximizes the between-class variance; ties go to the lowest level.
    """
    q = quantize(_gray_pixels(gray))
    if q.size == 0:
        raise ImageError("empty image")
    hist = np.bincount(q.ravel(), minlength=LEVELS).astype(np.float64)
    p = hist / hist.sum()
    levels = np.arange(LEVELS, dtype=np.float64)
    # class 0 holds levels < k, for k = 0..255
    w0 = np.concatenate(([0.0], np.cumsum(p)[:-1]))
    mu_cum = np.concatenate(([0.0], np.cumsum(p * levels)[:-1]))
    mu_total = (p * levels).sum()
    w1 = 1.0 - w0
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma_b = (mu_total * w0 - mu_cum) ** 2 / (w0 * w1)
    sigma_b[(w0 <= 0) | (w1 <= 0)] = 0.0
    # snap round-off so exact ties resolve to the lowest level
    best = sigma_b.max()
    if best <= 0.0:
        raise DegenerateHistogramError("histogram has a single occupied level")
    k = int(np.flatnonzero(sigma_b >= best * (1 - 1e-12))[0])
    return OtsuResult(threshold=k / (LEVELS - 1), between_class_variance=float(sigma_b[k]) / (LEVELS - 1) ** 2,
                      level=k)


def segment_threshold(frame, invert: bool = False) -> np.ndarray:
    """Binarize a frame at its Otsu level; pixels at or above it are fuel."""
    gray = _gray_pixels(frame)
    res = otsu_threshold(gray)
    mask = quantize(gray) >= res.level
    if invert:
        mask = ~mask
    return mask.astype(np.uint8)


def tlis(masks) -> list[np.ndarray]:
    """Threshold Last Image Subtraction.

    Every mask loses the pixels set in the final mask of the sequence; the
    final mask itself becomes empty.
    """
    masks = [as_mask(m) for m in masks]
    if len(masks) < 2:
        raise ValueError("tlis needs at least two masks")
    last = masks[-1]
    for m in masks:
        if m.shape != last.shape:
            raise ImageError(f"mask shape {m.shape} differs from {last.shape}")
    return [(m & (1 - last)).astype(np.uint8) for m in masks]


def box_mean(img: np.ndarray, window: int) -> np.ndarray:
    """``window`` x ``window`` sliding mean with replicate padding (summed-area table)."""
    img = np.asarray(img, dtype=np.float64)
    before = (window - 1) // 2
    after = window - 1 - before
    padded = np.pad(img, ((before, after), (before, after)), mode="edge")
    sat = np.zeros((padded.shape[0] + 1, padded.shape[1] + 1))
    sat[1:, 1:] = padded.cumsum(0).cumsum(1)
    h, w = img.shape
    total = (sat[window:window + h, window:window + w] - sat[:h, window:window + w]
             - sat[window:window + h, :w] + sat[:h, :w])
    return total / (window * window)


def spatial_filter(frame, scale: float = 0.5, window: int = 30) -> np.ndarray:
    """Grayscale, downsample by ``scale``, then apply the sliding mean."""
    gray = _gray_pixels(frame)
    h, w = gray.shape
    th, tw = max(1, int(round(h * scale))), max(1, int(round(w * scale)))
    if th < window or tw < window:
        raise ImageError(f"downsampled image {th}x{tw} is smaller than the {window}x{window} window")
    small = resize_array(gray, th, tw, "bilinear")
    return box_mean(small, window)


def spatial_filter_segment(frame, scale: float = 0.5, window: int = 30, invert: bool = False) -> np.ndarray:
    """Mean-filtered Otsu mask at the downsampled resolution."""
    filtered = spatial_filter(frame, scale, window)
    return segment_threshold(filtered, invert=invert)


def segment_sequence(frames, method: str, **kwargs):
    """Segment an ordered sequence; returns ``(masks, otsu_levels)``.

    For ``tlis`` the thresholds reported are those of the per-frame Otsu
    step preceding the subtraction. ``spatial`` masks are resized back to
    the native frame size with nearest-neighbour.
    """
    masks, thresholds = [], []
    for f in frames:
        if method == "spatial":
            filtered = spatial_filter(f, kwargs.get("scale", 0.5), kwargs.get("window", 30))
            res = otsu_threshold(filtered)
            m = segment_threshold(filtered, invert=kwargs.get("invert", False))
            m = resize_array(m, *_gray_pixels(f).shape, "nearest")
        elif method in ("threshold", "tlis"):
            res = otsu_threshold(f)
            m = segment_threshold(f, invert=kwargs.get("invert", False))
        else:
            raise ValueError(f"unknown method {method!r}")
        masks.append(m)
        thresholds.append(res.threshold)
    if method == "tlis":
        masks = tlis(masks)
    return masks, thresholds
