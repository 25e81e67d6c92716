"""Mini-batch training with Adam, dropout and early stopping."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .losses import bce_loss, sigmoid
from .optim import AdamState, adam_step
from .unet import UNetConfig, UNetParams, backward, build_unet, forward

log = logging.getLogger(__name__)


class TrainingDivergedError(FloatingPointError):
    def __init__(self, epoch: int, detail: str = ""):
        super().__init__(f"training diverged in epoch {epoch}{': ' + detail if detail else ''}")
        self.epoch = epoch


@dataclass
class TrainConfig:
    batch_size: int = 5
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_epochs: int = 200
    patience: int = 20
    seed: int = 0
    loss: str = "bce"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.loss != "bce":
            raise ValueError("only binary cross entropy is supported")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_metric: list[float] = field(default_factory=list)
    best_epoch: int = 0
    best_metric: float = float("inf")
    stop_reason: str = ""
    optimizer: AdamState | None = field(default=None, repr=False)

    @property
    def epochs(self) -> int:
        return len(self.train_loss)

    def to_dict(self) -> dict:
        return {"train_loss": list(self.train_loss), "val_metric": list(self.val_metric),
                "best_epoch": self.best_epoch, "best_metric": self.best_metric,
                "stop_reason": self.stop_reason}


def _as_arrays(data):
    images, masks = data
    images = np.asarray(images)
    masks = np.asarray(masks)
    if masks.ndim == 4:
        masks = masks[:, 0]
    if images.ndim != 4 or masks.ndim != 3 or len(images) != len(masks):
        raise ValueError("expected images N x C x H x W and masks N x H x W")
    if len(images) == 0:
        raise ValueError("empty dataset")
    if images.shape[2:] != masks.shape[1:]:
        raise ValueError("image and mask sizes differ")
    return images, masks


def eval_loss(params: UNetParams, images, masks, batch_size: int = 8) -> float:
    """Mean BCE of eval-mode predictions, pixel-weighted over the whole set."""
    total, count = 0.0, 0
    for i in range(0, len(images), batch_size):
        z = forward(params, images[i:i + batch_size], "eval")
        t = masks[i:i + batch_size, None].astype(np.float64)
        loss, _ = bce_loss(z, t)
        total += loss * z.size
        count += z.size
    return total / count


def eval_accuracy(params: UNetParams, images, masks, batch_size: int = 8) -> float:
    """Pixel accuracy of eval-mode predictions at probability 0.5."""
    correct, count = 0, 0
    for i in range(0, len(images), batch_size):
        p = sigmoid(forward(params, images[i:i + batch_size], "eval"))[:, 0]
        correct += int(np.sum((p >= 0.5) == (masks[i:i + batch_size] == 1)))
        count += p.size
    return correct / count


def train(train_set, val_set, unet_config: UNetConfig, train_config: TrainConfig,
          augmenter: Callable | None = None, val_metric: Callable[[UNetParams], float] | None = None,
          params: UNetParams | None = None):
    """Train a U-Net and return ``(best_params, history)``.

    ``train_set``/``val_set`` are ``(images, masks)`` pairs at the network
    input size. The validation metric is minimized; by default it is the
    validation BCE (or the epoch training loss when no validation set is
    given). Training stops after ``patience`` epochs without a strict
    improvement, or at ``max_epochs``.
    """
    images, masks = _as_arrays(train_set)
    if images.shape[1] != unet_config.in_channels:
        raise ValueError(f"images have {images.shape[1]} channels, network expects {unet_config.in_channels}")
    unet_config.check_input(*images.shape[2:])
    if val_metric is None and val_set is not None:
        v_images, v_masks = _as_arrays(val_set)
        v_images = v_images.astype(unet_config.dtype)

        def val_metric(p):
            return eval_loss(p, v_images, v_masks)

    params = params.copy() if params is not None else build_unet(unet_config)
    tc = train_config
    rng = np.random.default_rng([tc.seed, 0])
    drop_rng = np.random.default_rng([tc.seed, 1])
    opt = AdamState.zeros_like(params.weights)
    history = TrainHistory()
    best = params.copy()
    stale = 0
    n = len(images)
    for epoch in range(1, tc.max_epochs + 1):
        order = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, tc.batch_size):
            idx = order[start:start + tc.batch_size]
            xb, yb = [], []
            for i in idx:
                img, m = images[i], masks[i]
                if augmenter is not None:
                    img, m = augmenter(img, m, rng)
                xb.append(img)
                yb.append(m)
            x = np.stack(xb).astype(unet_config.dtype)
            y = np.stack(yb)[:, None]
            try:
                z, cache = forward(params, x, "train", rng=drop_rng, keep_cache=True)
            except FloatingPointError as exc:
                raise TrainingDivergedError(epoch, str(exc)) from exc
            loss, dz = bce_loss(z, y)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, "non-finite loss")
            grads = backward(params, cache, dz)
            adam_step(params.weights, grads, opt, opt.t + 1, tc.learning_rate, tc.beta1, tc.beta2, tc.eps)
            loss_sum += loss * len(idx)
        epoch_loss = loss_sum / n
        metric = float(val_metric(params)) if val_metric is not None else epoch_loss
        if not np.isfinite(metric):
            raise TrainingDivergedError(epoch, "non-finite validation metric")
        history.train_loss.append(epoch_loss)
        history.val_metric.append(metric)
        log.info("epoch %d loss %.5f val %.5f", epoch, epoch_loss, metric)
        if metric < history.best_metric:
            history.best_metric = metric
            history.best_epoch = epoch
            best = params.copy()
            stale = 0
        else:
            stale += 1
            if stale >= tc.patience:
                history.stop_reason = "patience"
                break
    else:
        history.stop_reason = "max_epochs"
    history.optimizer = opt
    return best, history
