"""Paired image/mask augmentation: random flips and rotation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage


@dataclass
class AugmentConfig:
    hflip_p: float = 0.5
    vflip_p: float = 0.5
    max_rotation_deg: float = 180.0
    enabled: bool = True


class Augmenter:
    """Applies one random transform identically to an image and its mask.

    Images are C x H x W floats rotated bilinearly with reflected borders;
    masks are H x W and rotated with nearest-neighbour so they stay binary.
    """

    def __init__(self, config: AugmentConfig | None = None):
        self.config = config or AugmentConfig()

    def __call__(self, image: np.ndarray, mask: np.ndarray, rng: np.random.Generator):
        cfg = self.config
        if not cfg.enabled:
            return image, mask
        if rng.random() < cfg.hflip_p:
            image, mask = image[:, :, ::-1], mask[:, ::-1]
        if rng.random() < cfg.vflip_p:
            image, mask = image[:, ::-1, :], mask[::-1, :]
        if cfg.max_rotation_deg > 0:
            angle = rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg)
            image = ndimage.rotate(image, angle, axes=(2, 1), reshape=False, order=1, mode="reflect")
            image = np.clip(image, 0.0, 1.0)
            mask = ndimage.rotate(mask, angle, axes=(1, 0), reshape=False, order=0, mode="reflect")
        return np.ascontiguousarray(image), np.ascontiguousarray(mask)


def identity(image, mask, rng):
    return image, mask
