import numpy as np

LN2 = float(np.log(2.0))


def sigmoid(z):
    z = np.asarray(z)
    out = np.empty_like(z, dtype=np.result_type(z.dtype, np.float32))
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_loss(logits, target):
    """Mean binary cross entropy on logits and its gradient w.r.t. the logits.

    ``loss = mean(max(z, 0) - z t + log(1 + exp(-|z|)))``, the stable form
    of ``-[t log s(z) + (1 - t) log(1 - s(z))]``.
    """
    z = np.asarray(logits, dtype=np.float64)
    t = np.asarray(target)
    if z.shape != t.shape:
        raise ValueError(f"logits {z.shape} and targets {t.shape} differ in shape")
    if not np.all((t == 0) | (t == 1)):
        raise ValueError("targets must be binary")
    t = t.astype(np.float64)
    n = z.size
    loss = float(np.mean(np.maximum(z, 0) - z * t + np.log1p(np.exp(-np.abs(z)))))
    grad = (sigmoid(z) - t) / n
    return loss, grad.astype(np.asarray(logits).dtype, copy=False)


def binary_entropy(p):
    """Entropy in nats of a fuel probability map, with 0 ln 0 taken as 0."""
    p = np.asarray(p, dtype=np.float64)
    q = 1.0 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        u = -(np.where(p > 0, p * np.log(p), 0.0) + np.where(q > 0, q * np.log(q), 0.0))
    return np.clip(u, 0.0, LN2)
