"""Cross-validation and study drivers.

A dataset here is a mapping ``flux label -> Sequence`` with truth masks.
U-Net inputs are resized to the network size (optionally grayscaled);
predictions are resized back to native resolution with nearest-neighbour
before any metric is computed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from ..classicseg import segment_sequence
from ..dataset import Sequence
from ..imgcore import gray_array, resize_array
from ..neuralseg.inference import DEFAULT_SAMPLES, predict_mc_batch
from ..neuralseg.training import TrainConfig, TrainHistory, train
from ..neuralseg.unet import UNetConfig, UNetParams
from ..regression import FitError, RateResult, extract_profile, rate_from_masks, rate_uncertainty
from .metrics import FoldSpec, mask_spatial_error, pixel_accuracy, profile_uncertainty, rate_error

log = logging.getLogger(__name__)

COLOR_MODES = ("rgb", "grayscale")


def derive_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0] >> 1)


# ---------------------------------------------------------------------------
# data preparation

def prepare_images(frames, height: int, width: int, grayscale: bool = False) -> np.ndarray:
    """Frames -> N x C x height x width float32 network input."""
    out = []
    for f in frames:
        px = f.pixels
        if grayscale and px.shape[2] == 3:
            px = gray_array(px)[:, :, None]
        out.append(resize_array(px, height, width, "bilinear").transpose(2, 0, 1))
    return np.ascontiguousarray(np.stack(out), dtype=np.float32)


def prepare_masks(masks, height: int, width: int) -> np.ndarray:
    return np.stack([resize_array(np.asarray(m), height, width, "nearest") for m in masks]).astype(np.uint8)


def to_native(maps, shape) -> list[np.ndarray]:
    return [resize_array(np.asarray(m), shape[0], shape[1], "nearest") for m in maps]


def _stack(dataset: dict[str, Sequence], names, ucfg: UNetConfig, grayscale: bool):
    xs, ys = [], []
    for n in names:
        seq = dataset[n]
        if seq.truth_masks is None:
            raise ValueError(f"sequence {n} has no truth masks")
        xs.append(prepare_images(seq.frames, ucfg.height, ucfg.width, grayscale))
        ys.append(prepare_masks(seq.truth_masks, ucfg.height, ucfg.width))
    return np.concatenate(xs), np.concatenate(ys)


def split_indices(n: int, val_fraction: float, seed: int):
    """Seeded random split into ``(train_idx, val_idx)``; empty validation when the fraction is 0."""
    if not 0.0 <= val_fraction < 1.0:
        raise ValueError("val_fraction must be in [0, 1)")
    order = np.random.default_rng(seed).permutation(n)
    n_val = int(round(val_fraction * n))
    if val_fraction > 0:
        n_val = min(max(n_val, 1), n - 1)
    return np.sort(order[n_val:]), np.sort(order[:n_val])


@dataclass
class TrainedModel:
    params: UNetParams
    history: TrainHistory
    train_fluxes: tuple[str, ...]
    grayscale: bool
    val_index: np.ndarray  # positions (in the concatenated training frames) used for validation


def train_model(dataset, train_fluxes, unet_config: UNetConfig, train_config: TrainConfig,
                augmenter=None, val_fraction: float = 0.1, grayscale: bool = False) -> TrainedModel:
    """Train one U-Net on the union of the named sequences."""
    ucfg = replace(unet_config, in_channels=1 if grayscale else 3)
    x, y = _stack(dataset, train_fluxes, ucfg, grayscale)
    tr, va = split_indices(len(x), val_fraction, train_config.seed)
    val = (x[va], y[va]) if len(va) else None
    params, history = train((x[tr], y[tr]), val, ucfg, train_config, augmenter)
    return TrainedModel(params, history, tuple(train_fluxes), grayscale, va)


# ---------------------------------------------------------------------------
# evaluation of one sequence

@dataclass
class FrameMetrics:
    label: str
    time_s: float
    accuracy: float
    spatial_error: float
    excluded_columns: int
    profile_uncertainty: float = float("nan")
    confusion: tuple[int, int, int, int] = (0, 0, 0, 0)


@dataclass
class SequenceEval:
    method: str
    flux: str
    flux_kg_m2s: float
    frames: list[FrameMetrics]
    rate: RateResult | None
    truth_rate_mm_s: float | None
    masks: list[np.ndarray] = field(default_factory=list, repr=False)
    uncertainty: list[np.ndarray] | None = field(default=None, repr=False)

    @property
    def rate_error(self) -> float:
        if self.rate is None or not self.truth_rate_mm_s:
            return float("nan")
        return rate_error(self.rate.rate_mm_s, self.truth_rate_mm_s)

    @property
    def max_spatial_error(self) -> float:
        return max(f.spatial_error for f in self.frames)

    @property
    def min_accuracy(self) -> float:
        return min(f.accuracy for f in self.frames)


def truth_rate(seq: Sequence) -> float | None:
    if seq.truth_rate_mm_s is not None:
        return seq.truth_rate_mm_s
    if seq.truth_masks is None:
        return None
    return rate_from_masks(seq.truth_masks, seq.times, seq.mm_per_px).rate_mm_s


def score_masks(seq: Sequence, masks, method: str, uncertainty=None, how: str = "average",
                norm: str = "image") -> SequenceEval:
    """Per-frame accuracy and spatial error plus the sequence rate for native-size masks."""
    if seq.truth_masks is None:
        raise ValueError(f"sequence {seq.name} has no truth masks")
    frames = []
    for k, (f, m, t) in enumerate(zip(seq.frames, masks, seq.truth_masks)):
        cm, e = pixel_accuracy(m, t)
        se = mask_spatial_error(m, t)
        pu = profile_uncertainty(uncertainty[k], m) if uncertainty is not None else float("nan")
        frames.append(FrameMetrics(f.label, f.time_s, e, se.value, se.excluded, pu,
                                   (cm.n1, cm.n2, cm.n3, cm.n4)))
    try:
        if uncertainty is not None:
            rate = rate_uncertainty(masks, uncertainty, seq.times, seq.mm_per_px, how, norm)
            if rate.bounds_note:
                log.warning("%s on %s: no error bar (%s)", method, seq.name, rate.bounds_note)
        else:
            rate = rate_from_masks(masks, seq.times, seq.mm_per_px, how)
    except FitError as exc:
        log.warning("%s on %s: no rate (%s)", method, seq.name, exc)
        rate = None
    return SequenceEval(method, seq.name, seq.flux_kg_m2s, frames, rate, truth_rate(seq), list(masks), uncertainty)


def predict_sequence(params: UNetParams, seq: Sequence, samples: int = DEFAULT_SAMPLES, seed: int = 0,
                     grayscale: bool | None = None, batch_size: int = 8):
    """MC-dropout masks and entropy maps at native resolution."""
    cfg = params.config
    if grayscale is None:
        grayscale = cfg.in_channels == 1
    x = prepare_images(seq.frames, cfg.height, cfg.width, grayscale)
    _, mask, u = predict_mc_batch(params, x, samples, seed, batch_size)
    shape = seq.native_shape
    return to_native(mask, shape), to_native(u, shape)


def evaluate_unet(params: UNetParams, seq: Sequence, samples: int = DEFAULT_SAMPLES, seed: int = 0,
                  method: str = "unet", how: str = "average", norm: str = "image") -> SequenceEval:
    masks, u = predict_sequence(params, seq, samples, seed)
    return score_masks(seq, masks, method, u, how, norm)


def evaluate_classical(seq: Sequence, method: str, how: str = "average", **kwargs) -> SequenceEval:
    masks, _ = segment_sequence(seq.frames, method, **kwargs)
    return score_masks(seq, masks, method, None, how)


# ---------------------------------------------------------------------------
# protocols

def make_folds(fluxes, color_mode: str = "rgb") -> list[FoldSpec]:
    fluxes = list(fluxes)
    if len(fluxes) < 2:
        raise ValueError("leave-one-out needs at least two fluxes")
    return [FoldSpec(frozenset(f for f in fluxes if f != test), test, color_mode) for test in fluxes]


def _check_dataset(dataset, names=None):
    names = list(dataset) if names is None else list(names)
    for n in names:
        if n not in dataset:
            raise KeyError(f"flux {n!r} not in dataset")
        if len(dataset[n]) == 0:
            raise ValueError(f"flux {n!r} has no frames")
    return names


@dataclass
class FoldResult:
    spec: FoldSpec
    model: TrainedModel
    evaluation: SequenceEval


def run_loocv(dataset, unet_config: UNetConfig, train_config: TrainConfig, augmenter=None,
              test_fluxes=None, color_mode: str = "rgb", samples: int = DEFAULT_SAMPLES,
              val_fraction: float = 0.1, seed: int = 0, how: str = "average",
              norm: str = "image") -> list[FoldResult]:
    """Leave-one-flux-out cross-validation.

    Each fold trains on every other flux and reports per-frame accuracy on
    the held-out flux in time order. ``test_fluxes`` restricts which folds
    are run (all by default). Fold ``i`` derives its seeds from ``seed``
    and ``i`` so folds are independent of one another.
    """
    names = _check_dataset(dataset)
    folds = make_folds(names, color_mode)
    if test_fluxes is not None:
        wanted = set(test_fluxes)
        folds = [f for f in folds if f.test_flux in wanted]
    out = []
    for spec in folds:
        i = names.index(spec.test_flux)
        fold_seed = derive_seed(seed, i)
        ucfg = replace(unet_config, seed=fold_seed)
        tcfg = replace(train_config, seed=fold_seed)
        train_names = [n for n in names if n in spec.train_fluxes]
        log.info("fold %s", spec.name)
        model = train_model(dataset, train_names, ucfg, tcfg, augmenter, val_fraction,
                            color_mode == "grayscale")
        ev = evaluate_unet(model.params, dataset[spec.test_flux], samples, fold_seed, how=how, norm=norm)
        out.append(FoldResult(spec, model, ev))
    return out


@dataclass
class StudyResult:
    mode: str
    models: dict[str, TrainedModel]
    cells: dict[tuple[str, str], SequenceEval]  # (train set, test flux) -> evaluation

    def table(self, metric: str = "mean_spatial_error") -> dict[tuple[str, str], float]:
        fn = {
            "mean_spatial_error": lambda ev: float(np.mean([f.spatial_error for f in ev.frames])),
            "rate_error": lambda ev: ev.rate_error,
            "mean_accuracy": lambda ev: float(np.mean([f.accuracy for f in ev.frames])),
            "mean_profile_uncertainty": lambda ev: float(np.nanmean([f.profile_uncertainty for f in ev.frames])),
        }[metric]
        return {k: fn(v) for k, v in self.cells.items()}


def run_flux_study(dataset, unet_config: UNetConfig, train_config: TrainConfig, mode: str = "rgb",
                   augmenter=None, samples: int = DEFAULT_SAMPLES, val_fraction: float = 0.1,
                   seed: int = 0, train_fluxes=None, how: str = "average", norm: str = "image") -> StudyResult:
    """Single-flux models, each evaluated on every flux.

    In grayscale mode the frames are converted before training and an extra
    model trained on all fluxes (key ``"all"``) is added.
    """
    if mode not in COLOR_MODES:
        raise ValueError(f"mode must be one of {COLOR_MODES}")
    names = _check_dataset(dataset)
    gray = mode == "grayscale"
    sets = [(n,) for n in (train_fluxes or names)]
    if gray:
        sets.append(tuple(names))
    models, cells = {}, {}
    for i, subset in enumerate(sets):
        key = subset[0] if len(subset) == 1 else "all"
        s = derive_seed(seed, 100 + i)
        log.info("study model %s (%s)", key, mode)
        model = train_model(dataset, subset, replace(unet_config, seed=s), replace(train_config, seed=s),
                            augmenter, val_fraction, gray)
        models[key] = model
        for n in names:
            cells[(key, n)] = evaluate_unet(model.params, dataset[n], samples, s, how=how, norm=norm)
    return StudyResult(mode, models, cells)


def all_profiles(masks) -> np.ndarray:
    return np.array([extract_profile(m)[0] for m in masks])
