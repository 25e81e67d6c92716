from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    @classmethod
    def zeros_like(cls, weights: dict[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(w) for k, w in weights.items()},
                   {k: np.zeros_like(w) for k, w in weights.items()}, 0)


def adam_step(weights, grads, state: AdamState, t: int, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update, in place on ``weights`` and ``state``."""
    if t < 1:
        raise ValueError("step index must be >= 1")
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for k, g in grads.items():
        w = weights[k]
        if g.shape != w.shape or state.m[k].shape != w.shape:
            raise ValueError(f"shape mismatch for {k}: {g.shape} vs {w.shape}")
        m = state.m[k]
        v = state.v[k]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        w -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(w.dtype, copy=False)
    state.t = t
    return weights, state
