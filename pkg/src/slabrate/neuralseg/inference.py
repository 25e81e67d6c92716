"""Monte-Carlo dropout inference and entropy uncertainty maps."""

from __future__ import annotations

import numpy as np

from ..imgcore import ImageFrame
from .losses import binary_entropy, sigmoid
from .unet import UNetParams, forward

DEFAULT_SAMPLES = 20


class SharedMaskRNG:
    """Draws one dropout mask and broadcasts it over the batch axis."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def random(self, shape):
        return np.broadcast_to(self.rng.random((1,) + tuple(shape[1:])), shape)


def frame_to_input(frame: ImageFrame) -> np.ndarray:
    """H x W x C frame -> C x H x W network input."""
    return np.ascontiguousarray(frame.pixels.transpose(2, 0, 1))


def predict_mc_batch(params: UNetParams, images: np.ndarray, samples: int = DEFAULT_SAMPLES,
                     seed: int = 0, batch_size: int = 8):
    """MC-dropout prediction for N x C x H x W inputs.

    Returns ``(p_fuel, mask, uncertainty)`` arrays of shape N x H x W.
    Sample ``s`` is one fixed thinned network: its dropout masks come from
    its own seeded stream and are shared by every frame, so the sampled
    networks do not depend on batching. Per-pixel sample probabilities are sorted before
    summation so the mean does not depend on sample order either.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    images = np.asarray(images, dtype=params.config.dtype)
    if images.ndim == 3:
        images = images[None]
    n = len(images)
    out = []
    for start in range(0, n, batch_size):
        chunk = images[start:start + batch_size]
        probs = np.empty((samples, len(chunk)) + chunk.shape[2:], dtype=np.float64)
        for s in range(samples):
            rng = SharedMaskRNG(np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(s,))))
            probs[s] = sigmoid(forward(params, chunk, "mc", rng=rng).astype(np.float64))[:, 0]
        probs.sort(axis=0)
        out.append(probs.sum(axis=0) / samples)
    p_fuel = np.concatenate(out)
    mask = (p_fuel >= 0.5).astype(np.uint8)
    return p_fuel, mask, binary_entropy(p_fuel)


def predict_mc(params: UNetParams, frame, samples: int = DEFAULT_SAMPLES, seed: int = 0):
    """Single-frame MC-dropout prediction: ``(p_fuel, mask, uncertainty)``."""
    x = frame_to_input(frame) if isinstance(frame, ImageFrame) else np.asarray(frame)
    p, m, u = predict_mc_batch(params, x[None], samples, seed)
    return p[0], m[0], u[0]


def predict_eval(params: UNetParams, images: np.ndarray, batch_size: int = 8) -> np.ndarray:
    """Deterministic probabilities (running BN statistics, no dropout)."""
    images = np.asarray(images, dtype=params.config.dtype)
    out = [sigmoid(forward(params, images[i:i + batch_size], "eval").astype(np.float64))[:, 0]
           for i in range(0, len(images), batch_size)]
    return np.concatenate(out)
