"""Segmentation and regression-rate metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..imgcore import ImageError, as_mask
from ..regression import extract_profile


@dataclass(frozen=True)
class ConfusionMatrix:
    n1: int  # fuel predicted as fuel
    n2: int  # fuel predicted as noise
    n3: int  # noise predicted as fuel
    n4: int  # noise predicted as noise

    @property
    def total(self) -> int:
        return self.n1 + self.n2 + self.n3 + self.n4

    @property
    def accuracy(self) -> float:
        return (self.n1 + self.n4) / self.total

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.n1 + other.n1, self.n2 + other.n2, self.n3 + other.n3, self.n4 + other.n4)


@dataclass(frozen=True)
class FoldSpec:
    train_fluxes: frozenset
    test_flux: str
    color_mode: str = "rgb"

    def __post_init__(self):
        object.__setattr__(self, "train_fluxes", frozenset(self.train_fluxes))
        if not self.train_fluxes:
            raise ValueError("a fold needs at least one training flux")
        if self.test_flux in self.train_fluxes:
            raise ValueError(f"test flux {self.test_flux} is also in the training set")
        if self.color_mode not in ("rgb", "grayscale"):
            raise ValueError(f"unknown color mode {self.color_mode!r}")

    @property
    def name(self) -> str:
        return "".join(sorted(self.train_fluxes)) + "->" + self.test_flux


class SpatialError(NamedTuple):
    value: float
    excluded: int  # columns skipped because the true height is zero


def confusion_matrix(pred, truth) -> ConfusionMatrix:
    p = as_mask(pred).astype(bool)
    t = as_mask(truth).astype(bool)
    if p.shape != t.shape:
        raise ImageError(f"prediction {p.shape} and truth {t.shape} differ in size")
    n1 = int(np.count_nonzero(p & t))
    n2 = int(np.count_nonzero(~p & t))
    n3 = int(np.count_nonzero(p & ~t))
    return ConfusionMatrix(n1, n2, n3, p.size - n1 - n2 - n3)


def pixel_accuracy(pred, truth) -> tuple[ConfusionMatrix, float]:
    """Confusion matrix and the fraction of correctly classified pixels."""
    cm = confusion_matrix(pred, truth)
    return cm, cm.accuracy


def spatial_error(pred_heights, truth_heights, width: int | None = None) -> SpatialError:
    """Sum over columns of ``|h - h_truth| / h_truth``, divided by the image width.

    Columns whose true height is zero cannot be normalized; they are left out
    of the sum and counted in ``excluded``. ``width`` defaults to the number
    of columns.
    """
    h = np.asarray(pred_heights, dtype=float)
    ht = np.asarray(truth_heights, dtype=float)
    if h.shape != ht.shape or h.ndim != 1:
        raise ValueError("height profiles must be equal-length vectors")
    width = len(h) if width is None else width
    if width < 1:
        raise ValueError("width must be positive")
    ok = ht > 0
    if not ok.any():
        raise ValueError("every column has zero true height")
    value = float(np.sum(np.abs(h[ok] - ht[ok]) / ht[ok]) / width)
    return SpatialError(value, int(np.count_nonzero(~ok)))


def mask_spatial_error(pred_mask, truth_mask) -> SpatialError:
    h, _ = extract_profile(pred_mask)
    ht, _ = extract_profile(truth_mask)
    return spatial_error(h, ht)


def rate_error(rate_pred: float, rate_truth: float) -> float:
    if rate_truth == 0:
        raise ZeroDivisionError("true regression rate is zero")
    return abs(rate_pred - rate_truth) / abs(rate_truth)


def profile_uncertainty(uncertainty, mask, band: int = 3) -> float:
    """Mean entropy over pixels within ``band`` rows of the predicted surface.

    Columns without fuel contribute nothing; an empty mask gives NaN.
    """
    u = np.asarray(uncertainty, dtype=float)
    m = as_mask(mask)
    if u.shape != m.shape:
        raise ImageError("uncertainty map and mask differ in size")
    heights, valid = extract_profile(m)
    if not valid.any():
        return float("nan")
    rows = np.arange(u.shape[0])[:, None]
    top = (u.shape[0] - heights)[None, :]
    sel = (np.abs(rows - top) <= band) & valid[None, :]
    return float(u[sel].mean())
