"""Image and mask containers, grayscale conversion, resizing and PNG I/O.

All computation uses floating intensities in ``[0, 1]``; files on disk are
8-bit PNGs. Masks are ``uint8`` arrays holding only 0 (background) and
1 (fuel).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image

# MATLAB rgb2gray weights
GRAY_WEIGHTS = (0.2989, 0.5870, 0.1140)


class ImageError(ValueError):
    """Invalid image content or shape."""


class AlreadyGrayscaleError(ImageError):
    """Grayscale conversion requested for a single-channel frame."""


@dataclass(frozen=True)
class ImageFrame:
    """A time-stamped frame from a burn sequence.

    ``pixels`` is always stored as H x W x C float64 with C in {1, 3}.
    """

    pixels: np.ndarray
    time_s: float = 0.0
    label: str = ""
    flux_kg_m2s: float = float("nan")

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ImageError(f"expected H x W x C with C in (1, 3), got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ImageError("empty image")
        if not np.all(np.isfinite(px)) or px.min() < 0.0 or px.max() > 1.0:
            raise ImageError("intensities must lie in [0, 1]")
        if self.time_s < 0:
            raise ImageError(f"negative time {self.time_s}")
        object.__setattr__(self, "pixels", px)

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape[0], self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def with_pixels(self, pixels: np.ndarray) -> "ImageFrame":
        return replace(self, pixels=pixels)


def as_mask(values) -> np.ndarray:
    """Validate and return a binary mask as a ``uint8`` H x W array."""
    m = np.asarray(values)
    if m.ndim != 2:
        raise ImageError(f"mask must be 2-D, got shape {m.shape}")
    if m.dtype == bool:
        return m.astype(np.uint8)
    if not np.all((m == 0) | (m == 1)):
        raise ImageError("mask values must be exactly 0 or 1")
    return m.astype(np.uint8)


def to_grayscale(frame: ImageFrame) -> ImageFrame:
    """Weighted-sum RGB to gray conversion (0.2989 R + 0.5870 G + 0.1140 B)."""
    if frame.channels == 1:
        raise AlreadyGrayscaleError(f"frame {frame.label!r} is already grayscale")
    gray = gray_array(frame.pixels)
    return frame.with_pixels(gray[:, :, None])


def gray_array(rgb: np.ndarray) -> np.ndarray:
    """Grayscale of an ``... x 3`` array, returned without the channel axis."""
    r, g, b = GRAY_WEIGHTS
    return r * rgb[..., 0] + g * rgb[..., 1] + b * rgb[..., 2]


def _linear_taps(n_in: int, n_out: int):
    # half-pixel-centre convention, edge clamped
    x = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    x = np.clip(x, 0.0, n_in - 1)
    i0 = np.floor(x).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, x - i0


def _nearest_index(n_in: int, n_out: int) -> np.ndarray:
    idx = np.floor((np.arange(n_out) + 0.5) * (n_in / n_out)).astype(np.intp)
    return np.minimum(idx, n_in - 1)


def resize_array(arr: np.ndarray, target_h: int, target_w: int, kind: str = "bilinear") -> np.ndarray:
    """Resize the two leading axes of ``arr``.

    ``bilinear`` interpolates between the two nearest source samples along
    each axis as ``a + f * (b - a)``, which keeps constant images exactly
    constant and never leaves the input range. ``nearest`` copies samples and
    is the only kind allowed for masks.
    """
    if target_h < 1 or target_w < 1:
        raise ImageError(f"target size must be positive, got {target_h} x {target_w}")
    h, w = arr.shape[:2]
    if (h, w) == (target_h, target_w):
        return arr.copy()
    if kind == "nearest":
        return arr[_nearest_index(h, target_h)][:, _nearest_index(w, target_w)]
    if kind != "bilinear":
        raise ValueError(f"unknown resize kind {kind!r}")
    a = np.asarray(arr, dtype=np.float64)
    lo, hi = a.min(), a.max()
    i0, i1, f = _linear_taps(h, target_h)
    f = f.reshape((-1,) + (1,) * (a.ndim - 1))
    top = a[i0]
    a = top + f * (a[i1] - top)
    j0, j1, g = _linear_taps(w, target_w)
    g = g.reshape((1, -1) + (1,) * (a.ndim - 2))
    left = a[:, j0]
    a = left + g * (a[:, j1] - left)
    return np.clip(a, lo, hi)


def resize(obj, target_h: int, target_w: int, kind: str | None = None):
    """Resize an :class:`ImageFrame` (bilinear) or a binary mask (nearest)."""
    if isinstance(obj, ImageFrame):
        kind = kind or "bilinear"
        return obj.with_pixels(resize_array(obj.pixels, target_h, target_w, kind))
    mask = as_mask(obj)
    kind = kind or "nearest"
    if kind != "nearest":
        raise ImageError("masks may only be resized with nearest-neighbour")
    return resize_array(mask, target_h, target_w, "nearest")


def load_frame(path, time_s: float = 0.0, label: str | None = None,
               flux_kg_m2s: float = float("nan"), expect_shape=None) -> ImageFrame:
    """Read an 8-bit PNG (gray or RGB) into an :class:`ImageFrame`."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB" if "A" in im.mode or im.mode == "P" else "L")
            data = np.asarray(im)
    except OSError as exc:
        raise ImageError(f"cannot read {path}: {exc}") from exc
    if data.dtype != np.uint8:
        raise ImageError(f"{path}: only 8-bit images are supported")
    if expect_shape is not None and tuple(data.shape[:2]) != tuple(expect_shape):
        raise ImageError(f"{path}: size {data.shape[:2]} does not match manifest {tuple(expect_shape)}")
    return ImageFrame(data.astype(np.float64) / 255.0, time_s=time_s,
                      label=label if label is not None else path.stem, flux_kg_m2s=flux_kg_m2s)


def save_frame(frame: ImageFrame | np.ndarray, path) -> None:
    px = frame.pixels if isinstance(frame, ImageFrame) else np.asarray(frame)
    if px.ndim == 3 and px.shape[2] == 1:
        px = px[:, :, 0]
    data = np.round(np.clip(px, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(data).save(Path(path), format="PNG")


def save_mask(mask, path) -> None:
    """Write a mask as a single-channel PNG with values {0, 255}."""
    m = as_mask(mask)
    Image.fromarray((m * 255).astype(np.uint8)).save(Path(path), format="PNG")


def load_mask(path, expect_shape=None) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    with Image.open(path) as im:
        data = np.asarray(im.convert("L"))
    if expect_shape is not None and tuple(data.shape) != tuple(expect_shape):
        raise ImageError(f"{path}: size {data.shape} does not match manifest {tuple(expect_shape)}")
    if not np.all((data == 0) | (data == 255)):
        raise ImageError(f"{path}: mask PNG must contain only 0 and 255")
    return (data == 255).astype(np.uint8)
