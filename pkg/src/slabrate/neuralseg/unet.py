"""U-Net with batch norm and dropout, forward and backward in plain numpy.

The public interface takes and returns N x C x H x W arrays; internally the
network runs channels-last.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import layers as L

MODES = ("train", "eval", "mc")


class ShapeError(ValueError):
    pass


@dataclass
class UNetConfig:
    """Architecture knobs.

    ``dropout_sites`` names the double-conv blocks followed by dropout
    (``enc<l>``, ``mid``, ``dec<l>``); ``None`` selects every block except
    the first encoder block and the last decoder block.
    """

    depth: int = 4
    base_channels: int = 64
    in_channels: int = 3
    dropout_p: float = 0.5
    seed: int = 0
    height: int = 800
    width: int = 800
    dropout_sites: tuple[str, ...] | None = None
    upsample: str = "nearest"  # or "transpose"
    dtype: str = "float32"
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.base_channels < 1:
            raise ValueError("base_channels must be >= 1")
        if self.in_channels not in (1, 3):
            raise ValueError("in_channels must be 1 or 3")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must be in [0, 1)")
        if self.upsample not in ("nearest", "transpose"):
            raise ValueError(f"unknown upsample mode {self.upsample!r}")
        if self.dropout_sites is not None:
            self.dropout_sites = tuple(self.dropout_sites)
            unknown = set(self.dropout_sites) - set(self.block_names())
            if unknown:
                raise ValueError(f"unknown dropout sites {sorted(unknown)}")

    def block_names(self) -> list[str]:
        return ([f"enc{l}" for l in range(1, self.depth + 1)] + ["mid"]
                + [f"dec{l}" for l in range(self.depth, 0, -1)])

    def active_dropout_sites(self) -> tuple[str, ...]:
        if self.dropout_sites is not None:
            return self.dropout_sites
        return tuple(b for b in self.block_names() if b not in ("enc1", "dec1"))

    def channels(self, level: int) -> int:
        return self.base_channels * 2 ** (level - 1)

    def check_input(self, h: int, w: int) -> None:
        f = 2 ** self.depth
        if h % f or w % f:
            raise ShapeError(f"input {h}x{w} is not divisible by 2**depth = {f}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dropout_sites"] = list(self.dropout_sites) if self.dropout_sites is not None else None
        return d


@dataclass
class UNetParams:
    config: UNetConfig
    weights: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "UNetParams":
        return UNetParams(self.config, {k: v.copy() for k, v in self.weights.items()},
                          {k: v.copy() for k, v in self.buffers.items()})

    @property
    def n_params(self) -> int:
        return int(sum(v.size for v in self.weights.values()))


def _he_uniform(rng, shape, fan_in, dtype):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def build_unet(config: UNetConfig) -> UNetParams:
    """Allocate and seed every weight of the network."""
    config.check_input(config.height, config.width)
    rng = np.random.default_rng(config.seed)
    dt = np.dtype(config.dtype)
    weights: dict[str, np.ndarray] = {}
    buffers: dict[str, np.ndarray] = {}

    def double_conv(name, c_in, c_out):
        for i, ci in ((1, c_in), (2, c_out)):
            weights[f"{name}.conv{i}.w"] = _he_uniform(rng, (3, 3, ci, c_out), ci * 9, dt)
            weights[f"{name}.bn{i}.gamma"] = np.ones(c_out, dt)
            weights[f"{name}.bn{i}.beta"] = np.zeros(c_out, dt)
            buffers[f"{name}.bn{i}.mean"] = np.zeros(c_out, dt)
            buffers[f"{name}.bn{i}.var"] = np.ones(c_out, dt)

    c_prev = config.in_channels
    for l in range(1, config.depth + 1):
        double_conv(f"enc{l}", c_prev, config.channels(l))
        c_prev = config.channels(l)
    double_conv("mid", c_prev, config.channels(config.depth + 1))
    for l in range(config.depth, 0, -1):
        c_up, c = config.channels(l + 1), config.channels(l)
        fan_in = c_up * 4 if config.upsample == "nearest" else c_up
        weights[f"dec{l}.up.w"] = _he_uniform(rng, (2, 2, c_up, c), fan_in, dt)
        weights[f"dec{l}.up.b"] = np.zeros(c, dt)
        double_conv(f"dec{l}", 2 * c, c)
    c1 = config.channels(1)
    weights["out.w"] = _he_uniform(rng, (1, 1, c1, 1), c1, dt)
    weights["out.b"] = np.zeros(1, dt)
    return UNetParams(config, weights, buffers)


def _transpose_up_forward(x, w, b):
    # 2x2 stride-2 transposed conv, channels last; w is 2 x 2 x C_in x C_out
    n, h, wd, _ = x.shape
    out = np.einsum("nhwc,abco->nhawbo", x, w, optimize=True).reshape(n, 2 * h, 2 * wd, w.shape[3])
    return out + b, x


def _transpose_up_backward(dout, x, w):
    n, h2, w2, c_out = dout.shape
    d = dout.reshape(n, h2 // 2, 2, w2 // 2, 2, c_out)
    dx = np.einsum("nhawbo,abco->nhwc", d, w, optimize=True)
    dw = np.einsum("nhwc,nhawbo->abco", x, d, optimize=True)
    return dx, dw, dout.sum(axis=(0, 1, 2))


def forward(params: UNetParams, x: np.ndarray, mode: str = "eval", rng=None, keep_cache: bool = False):
    """Logits for an N x C x H x W batch.

    ``train`` uses batch statistics and dropout, ``eval`` running statistics
    without dropout, ``mc`` running statistics with dropout. Dropout masks
    are drawn from ``rng``, which is required in ``train`` and ``mc`` modes
    when dropout is enabled. Returns ``logits`` or ``(logits, cache)``.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    cfg = params.config
    if x.ndim != 4 or x.shape[1] != cfg.in_channels:
        raise ShapeError(f"expected N x {cfg.in_channels} x H x W, got {x.shape}")
    cfg.check_input(x.shape[2], x.shape[3])
    p = cfg.dropout_p
    use_dropout = mode in ("train", "mc") and p > 0
    if use_dropout and rng is None:
        raise ValueError(f"{mode} mode with dropout needs an rng")
    training = mode == "train"
    drop_sites = set(cfg.active_dropout_sites()) if use_dropout else set()
    W, B = params.weights, params.buffers
    x = np.ascontiguousarray(x.transpose(0, 2, 3, 1), dtype=cfg.dtype)
    caches = []

    def double_conv(name, h):
        for i in (1, 2):
            h, c_conv = L.conv2d_forward(h, W[f"{name}.conv{i}.w"])
            h, c_bn = L.batchnorm_forward(h, W[f"{name}.bn{i}.gamma"], W[f"{name}.bn{i}.beta"],
                                          B[f"{name}.bn{i}.mean"], B[f"{name}.bn{i}.var"], training,
                                          cfg.bn_momentum, cfg.bn_eps)
            h, c_relu = L.relu_forward(h)
            caches.append(("conv", f"{name}.conv{i}", c_conv))
            caches.append(("bn", f"{name}.bn{i}", c_bn))
            caches.append(("relu", None, c_relu))
        if name in drop_sites:
            h, c_drop = L.dropout_forward(h, p, rng)
            caches.append(("drop", None, c_drop))
        return h

    skips = {}
    h = x
    for l in range(1, cfg.depth + 1):
        h = double_conv(f"enc{l}", h)
        skips[l] = h
        caches.append(("skip", l, None))
        h, c_pool = L.maxpool_forward(h)
        caches.append(("pool", None, c_pool))
    h = double_conv("mid", h)
    for l in range(cfg.depth, 0, -1):
        if cfg.upsample == "nearest":
            h = L.upsample_forward(h)
            caches.append(("upsample", None, None))
            h, c_up = L.conv2d_forward(h, W[f"dec{l}.up.w"], W[f"dec{l}.up.b"])
            caches.append(("conv_b", f"dec{l}.up", c_up))
        else:
            h, c_up = _transpose_up_forward(h, W[f"dec{l}.up.w"], W[f"dec{l}.up.b"])
            caches.append(("tconv", f"dec{l}.up", c_up))
        c_half = h.shape[-1]
        h = np.concatenate([h, skips[l]], axis=-1)
        caches.append(("concat", l, c_half))
        h = double_conv(f"dec{l}", h)
    logits, c_out = L.conv2d_forward(h, W["out.w"], W["out.b"])
    caches.append(("conv_b", "out", c_out))
    if not np.all(np.isfinite(logits)):
        raise FloatingPointError("non-finite activations in forward pass")
    logits = logits.transpose(0, 3, 1, 2)
    return (logits, caches) if keep_cache else logits


def backward(params: UNetParams, caches, dlogits: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of every weight given d(loss)/d(logits)."""
    W = params.weights
    grads: dict[str, np.ndarray] = {}
    skip_grads: dict[int, np.ndarray] = {}
    d = np.ascontiguousarray(dlogits.transpose(0, 2, 3, 1), dtype=params.config.dtype)
    for kind, name, cache in reversed(caches):
        if kind == "conv":
            d, grads[f"{name}.w"], _ = L.conv2d_backward(d, cache)
        elif kind == "conv_b":
            d, grads[f"{name}.w"], grads[f"{name}.b"] = L.conv2d_backward(d, cache, with_bias=True)
        elif kind == "tconv":
            d, grads[f"{name}.w"], grads[f"{name}.b"] = _transpose_up_backward(d, cache, W[f"{name}.w"])
        elif kind == "bn":
            d, grads[f"{name}.gamma"], grads[f"{name}.beta"] = L.batchnorm_backward(d, cache)
        elif kind == "relu":
            d = L.relu_backward(d, cache)
        elif kind == "drop":
            d = L.dropout_backward(d, cache)
        elif kind == "pool":
            d = L.maxpool_backward(d, cache)
        elif kind == "upsample":
            d = L.upsample_backward(d)
        elif kind == "concat":
            skip_grads[name] = d[..., cache:]
            d = d[..., :cache]
        elif kind == "skip":
            d = d + skip_grads.pop(name)
        else:  # pragma: no cover
            raise RuntimeError(kind)
    return grads


def output_shape(config: UNetConfig, n: int = 1) -> tuple[int, int, int, int]:
    config.check_input(config.height, config.width)
    return (n, 1, config.height, config.width)
