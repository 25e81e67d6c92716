"""Channels-last (N x H x W x C) layer primitives with explicit backward passes.

Kernels are stored H x W x C_in x C_out. Each ``*_forward`` returns
``(out, cache)``; the matching ``*_backward`` takes the upstream gradient
and the cache.
"""

import numpy as np


def same_padding(k: int) -> tuple[int, int]:
    # extra row/column goes after, as in Keras "same"
    before = (k - 1) // 2
    return before, k - 1 - before


def conv2d_forward(x, w, b=None):
    """Stride-1 'same' convolution (cross-correlation)."""
    n, h, wd, c = x.shape
    k, _, c_in, c_out = w.shape
    if c != c_in:
        raise ValueError(f"conv expects {c_in} input channels, got {c}")
    if k == 1:
        cols = x.reshape(n * h * wd, c)
    else:
        lo, hi = same_padding(k)
        xp = np.pad(x, ((0, 0), (lo, hi), (lo, hi), (0, 0)))
        cols = np.concatenate([xp[:, i:i + h, j:j + wd, :] for i in range(k) for j in range(k)],
                              axis=-1).reshape(n * h * wd, k * k * c)
    out = cols @ w.reshape(-1, c_out)
    if b is not None:
        out += b
    return out.reshape(n, h, wd, c_out), (cols, x.shape, w)


def conv2d_backward(dout, cache, with_bias=False):
    cols, xshape, w = cache
    n, h, wd, c = xshape
    k, _, _, c_out = w.shape
    d2 = dout.reshape(-1, c_out)
    dw = (cols.T @ d2).reshape(w.shape)
    db = d2.sum(axis=0) if with_bias else None
    dcols = d2 @ w.reshape(-1, c_out).T
    if k == 1:
        return dcols.reshape(xshape), dw, db
    lo, _ = same_padding(k)
    dcols = dcols.reshape(n, h, wd, k * k, c)
    dxp = np.zeros((n, h + k - 1, wd + k - 1, c), dtype=dout.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, i:i + h, j:j + wd, :] += dcols[:, :, :, i * k + j, :]
    return dxp[:, lo:lo + h, lo:lo + wd, :], dw, db


def batchnorm_forward(x, gamma, beta, running_mean, running_var, training, momentum=0.1, eps=1e-5):
    """Per-channel batch norm. Running statistics are updated in place when training."""
    if training:
        mean = x.mean(axis=(0, 1, 2))
        xc = x - mean
        var = (xc * xc).mean(axis=(0, 1, 2))
        m = x.size // x.shape[-1]
        unbiased = var * (m / (m - 1)) if m > 1 else var
        running_mean *= 1 - momentum
        running_mean += momentum * mean
        running_var *= 1 - momentum
        running_var += momentum * unbiased
    else:
        xc = x - running_mean
        var = running_var
    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = xc * inv_std
    return gamma * xhat + beta, (xhat, inv_std, gamma, training)


def batchnorm_backward(dout, cache):
    xhat, inv_std, gamma, training = cache
    dgamma = (dout * xhat).sum(axis=(0, 1, 2))
    dbeta = dout.sum(axis=(0, 1, 2))
    dxhat = dout * gamma
    if not training:
        return dxhat * inv_std, dgamma, dbeta
    m = dout.size // dout.shape[-1]
    mean_dxhat = dxhat.sum(axis=(0, 1, 2)) / m
    mean_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 1, 2)) / m
    return (dxhat - mean_dxhat - xhat * mean_dxhat_xhat) * inv_std, dgamma, dbeta


def relu_forward(x):
    out = np.maximum(x, 0)
    return out, out > 0


def relu_backward(dout, cache):
    return dout * cache


def maxpool_forward(x):
    """2 x 2 max pooling, stride 2; ties route the gradient to the first maximum."""
    quads = (x[:, 0::2, 0::2], x[:, 0::2, 1::2], x[:, 1::2, 0::2], x[:, 1::2, 1::2])
    out = np.maximum(np.maximum(quads[0], quads[1]), np.maximum(quads[2], quads[3]))
    taken = np.zeros(out.shape, dtype=bool)
    routes = []
    for q in quads:
        r = (q == out) & ~taken
        taken |= r
        routes.append(r)
    return out, (routes, x.shape)


def maxpool_backward(dout, cache):
    routes, shape = cache
    d = np.zeros(shape, dtype=dout.dtype)
    for r, (i, j) in zip(routes, ((0, 0), (0, 1), (1, 0), (1, 1))):
        d[:, i::2, j::2] = dout * r
    return d


def upsample_forward(x):
    return x.repeat(2, axis=1).repeat(2, axis=2)


def upsample_backward(dout):
    n, h, w, c = dout.shape
    return dout.reshape(n, h // 2, 2, w // 2, 2, c).sum(axis=(2, 4))


def dropout_forward(x, p, rng):
    """Inverted dropout; ``rng=None`` or ``p == 0`` disables it."""
    if rng is None or p <= 0.0:
        return x, None
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / x.dtype.type(1.0 - p)
    return x * keep, keep


def dropout_backward(dout, cache):
    return dout if cache is None else dout * cache
