"""Synthetic slab-burner image sequences with exact ground truth.

Fuel is rendered bright on a dark chamber background. Four switchable
noise layers imitate what the flash photographs suffer from: wax blobs on
the window, soot specks, a translucent flame ghost above the fuel surface
and flash over-saturation. Truth masks and heights never see the noise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .dataset import FLUX_SEQUENCES, Sequence, save_dataset
from .imgcore import ImageFrame

log = logging.getLogger(__name__)

FUEL_RGB = np.array([0.95, 0.90, 0.80])
BACKGROUND_RGB = np.array([0.14, 0.15, 0.18])
WAX_RGB = np.array([0.78, 0.76, 0.70])
FLAME_RGB = np.array([1.00, 0.60, 0.25])


@dataclass
class WaxNoise:
    """Opaque-ish blobs of molten wax stuck to the window; they accumulate."""

    count: int = 0
    radius_range: tuple[float, float] = (0.025, 0.055)  # fraction of image height
    brightness: float = 0.85
    opacity: float = 0.9


@dataclass
class SootNoise:
    """Dark specks on the background (soot and window pitting); they accumulate."""

    density: float = 0.0
    darkness: float = 0.6


@dataclass
class FlameGhost:
    """Translucent plume hugging the fuel surface."""

    amplitude: float = 0.0
    thickness: float = 0.06  # e-folding height as a fraction of image height
    wobble: float = 0.3


@dataclass
class Saturation:
    """Global flash gain plus a clipped glare patch in the upper chamber."""

    gain: float = 1.0
    clip: float = 1.0
    glare: float = 0.0
    glare_extent: float = 0.18  # vertical extent as a fraction of image height


@dataclass
class BurnScenario:
    width_px: int = 512
    height_px: int = 128
    frame_times_s: tuple[float, ...] = tuple(np.linspace(0.0, 8.0, 30))
    initial_profile: np.ndarray | Callable | None = None
    rate_mm_s: float = 1.0
    rate_fn: Callable | None = None  # rate_fn(t, cols) -> mm/s, overrides rate_mm_s
    mm_per_px: float = 0.25
    flux_label: str = "A"
    flux_kg_m2s: float = 5.91
    wax: WaxNoise = field(default_factory=WaxNoise)
    soot: SootNoise = field(default_factory=SootNoise)
    flame: FlameGhost = field(default_factory=FlameGhost)
    saturation: Saturation = field(default_factory=Saturation)
    texture: float = 0.03
    seed: int = 0

    def __post_init__(self):
        times = np.asarray(self.frame_times_s, dtype=float)
        if times.ndim != 1 or len(times) < 1:
            raise ValueError("need at least one frame time")
        if np.any(np.diff(times) <= 0) or times[0] < 0:
            raise ValueError("frame times must be non-negative and strictly increasing")
        if self.width_px < 1 or self.height_px < 1:
            raise ValueError("image size must be positive")
        if self.mm_per_px <= 0:
            raise ValueError("mm_per_px must be positive")
        for name, val in (("wax.count", self.wax.count), ("soot.density", self.soot.density),
                          ("flame.amplitude", self.flame.amplitude), ("saturation.gain", self.saturation.gain),
                          ("saturation.glare", self.saturation.glare), ("texture", self.texture)):
            if val < 0:
                raise ValueError(f"{name} must be non-negative")

    def noise_free(self) -> "BurnScenario":
        return replace(self, wax=WaxNoise(), soot=SootNoise(), flame=FlameGhost(), saturation=Saturation())


@dataclass
class GeneratedSequence:
    frames: list[ImageFrame]
    truth_masks: list[np.ndarray]
    truth_heights: np.ndarray  # frames x columns, px, unclamped at zero only where flagged
    truth_rate_fn: Callable
    truth_rate_mm_s: float
    underflow: list[bool]

    def to_sequence(self, scenario: BurnScenario) -> Sequence:
        return Sequence(scenario.flux_label, scenario.flux_kg_m2s, scenario.mm_per_px, self.frames,
                        self.truth_masks, self.truth_rate_mm_s,
                        meta={"truth_heights": self.truth_heights})


def default_profile(width: int, height: int, rng: np.random.Generator) -> np.ndarray:
    """Gently tilted, rippled fuel surface around 72% of the image height."""
    x = np.linspace(-1.0, 1.0, width)
    tilt = rng.uniform(0.02, 0.035) * height * rng.choice([-1.0, 1.0])
    phase = rng.uniform(0, 2 * np.pi)
    ripple = 0.012 * height * np.sin(2.0 * np.pi * x * rng.uniform(0.6, 1.2) + phase)
    return 0.72 * height + tilt * x + ripple


def tilted_profile(width: int, height: int, base: float = 0.72) -> np.ndarray:
    """Straight surface rising exactly one pixel row across the image.

    Pixel rounding then biases the column-mean height by at most
    ``1 / (2 * width)`` px, which makes exact rate checks possible.
    """
    return base * height + (np.arange(width) + 0.5) / width


def _initial_heights(sc: BurnScenario, rng) -> np.ndarray:
    cols = np.arange(sc.width_px)
    if sc.initial_profile is None:
        h0 = default_profile(sc.width_px, sc.height_px, rng)
    elif callable(sc.initial_profile):
        h0 = np.asarray(sc.initial_profile(cols), dtype=float)
    else:
        h0 = np.asarray(sc.initial_profile, dtype=float)
    if h0.shape != (sc.width_px,):
        raise ValueError(f"initial profile must have {sc.width_px} columns")
    if np.any(h0 < 0) or np.any(h0 > sc.height_px):
        raise ValueError("initial profile must lie within [0, height_px]")
    return h0


def _regressed_px(sc: BurnScenario, t: float, cols: np.ndarray) -> np.ndarray:
    """Integral of the regression rate from 0 to ``t``, in pixels per column."""
    if sc.rate_fn is None:
        return np.full(cols.shape, sc.rate_mm_s * t / sc.mm_per_px)
    if t == 0:
        return np.zeros(cols.shape)
    ts = np.linspace(0.0, t, 401)
    vals = np.array([np.broadcast_to(sc.rate_fn(tt, cols), cols.shape) for tt in ts])
    if np.any(vals < 0):
        raise ValueError("regression rate must be non-negative")
    # composite Simpson
    w = np.ones(len(ts))
    w[1:-1:2], w[2:-1:2] = 4, 2
    return (w @ vals) * (ts[1] - ts[0]) / 3.0 / sc.mm_per_px


def truth_mask_from_heights(heights: np.ndarray, height_px: int) -> np.ndarray:
    """Pixels whose centre lies below the surface are fuel."""
    rows = np.arange(height_px)[:, None]
    return ((height_px - rows - 0.5) < heights[None, :]).astype(np.uint8)


def _soft_disc(shape, cy, cx, r):
    h, w = shape
    y0, y1 = max(0, int(cy - r - 2)), min(h, int(cy + r + 3))
    x0, x1 = max(0, int(cx - r - 2)), min(w, int(cx + r + 3))
    if y0 >= y1 or x0 >= x1:
        return None
    yy, xx = np.mgrid[y0:y1, x0:x1]
    d = np.hypot(yy + 0.5 - cy, xx + 0.5 - cx)
    return (slice(y0, y1), slice(x0, x1)), np.clip(r - d + 0.5, 0.0, 1.0)


def _smooth_noise(rng, n, scale):
    """1-D smooth random field in roughly [-1, 1] (sum of random sinusoids)."""
    x = np.arange(n) / max(n - 1, 1)
    out = np.zeros(n)
    for k in range(1, 4):
        out += np.sin(2 * np.pi * (k * scale * x + rng.uniform())) / k
    return out / 1.84


def generate_sequence(scenario: BurnScenario):
    """Render a burn: returns ``(frames, truth_masks, truth_rate_fn)``.

    Use :func:`generate` for the full record including truth heights and
    the underflow flags.
    """
    g = generate(scenario)
    return g.frames, g.truth_masks, g.truth_rate_fn


def generate(scenario: BurnScenario) -> GeneratedSequence:
    sc = scenario
    H, W = sc.height_px, sc.width_px
    times = np.asarray(sc.frame_times_s, dtype=float)
    seq_ss = np.random.SeedSequence(sc.seed)
    layout_rng, static_rng = (np.random.default_rng(s) for s in seq_ss.spawn(2))
    frame_seeds = np.random.SeedSequence([sc.seed, 1]).spawn(len(times))
    cols = np.arange(W)

    h0 = _initial_heights(sc, layout_rng)
    heights = np.array([h0 - _regressed_px(sc, t, cols) for t in times])
    underflow = [bool(np.any(h < 0)) for h in heights]
    if any(underflow):
        log.warning("fuel profile reached the floor in %d frame(s); heights clamped at 0", sum(underflow))
    heights_c = np.clip(heights, 0.0, float(H))
    masks = [truth_mask_from_heights(h, H) for h in heights_c]

    # persistent layouts: wax blobs, soot specks, static textures
    t_end = times[-1] if times[-1] > 0 else 1.0
    n_wax = sc.wax.count
    wax_cy = layout_rng.uniform(0, H, n_wax)
    wax_cx = layout_rng.uniform(0, W, n_wax)
    r_lo, r_hi = sc.wax.radius_range
    wax_r = layout_rng.uniform(r_lo * H, r_hi * H, n_wax)
    wax_t = layout_rng.uniform(-0.3 * t_end, t_end, n_wax)
    soot_field = layout_rng.random((H, W))
    soot_t = layout_rng.uniform(-0.3 * t_end, t_end, (H, W))
    fuel_tex = 1.0 + sc.texture * static_rng.uniform(-1.0, 1.0, (H, W))
    bg_tex = 1.0 + sc.texture * static_rng.uniform(-1.0, 1.0, (H, W))

    rows = np.arange(H)[:, None] + 0.5
    frames = []
    for k, t in enumerate(times):
        rng = np.random.default_rng(frame_seeds[k])
        m = masks[k].astype(bool)
        img = np.where(m[:, :, None], FUEL_RGB * fuel_tex[:, :, None], BACKGROUND_RGB * bg_tex[:, :, None])

        for cy, cx, r, ta in zip(wax_cy, wax_cx, wax_r, wax_t):
            if ta > t:
                continue
            disc = _soft_disc((H, W), cy, cx, r)
            if disc is None:
                continue
            sl, a = disc
            a = (a * sc.wax.opacity)[:, :, None]
            img[sl] = img[sl] * (1 - a) + WAX_RGB * sc.wax.brightness * a

        if sc.soot.density > 0:
            speck = (soot_field < sc.soot.density) & (soot_t <= t) & ~m
            img[speck] *= 1.0 - sc.soot.darkness

        if sc.flame.amplitude > 0:
            surface = H - heights_c[k]  # row coordinate of the surface per column
            above = surface[None, :] - rows
            wob = 1.0 + sc.flame.wobble * _smooth_noise(rng, W, 2.0)
            glow = np.where(above > 0, np.exp(-above / (sc.flame.thickness * H)), 0.0) * wob[None, :]
            img += sc.flame.amplitude * glow[:, :, None] * FLAME_RGB

        sat = sc.saturation
        if sat.gain != 1.0:
            img *= sat.gain
        if sat.glare > 0:
            ext = sat.glare_extent * H
            cy = rng.uniform(0.2, 0.5) * ext
            cx = rng.uniform(0.15, 0.85) * W
            sx = rng.uniform(0.15, 0.3) * W
            xx = np.arange(W)[None, :] + 0.5
            patch = np.exp(-0.5 * ((xx - cx) / sx) ** 2) * np.exp(-0.5 * ((rows - cy) / (0.45 * ext)) ** 2)
            img += sat.glare * patch[:, :, None]
        img = np.clip(img, 0.0, min(sat.clip, 1.0))
        img = np.round(img * 255.0) / 255.0
        frames.append(ImageFrame(img, time_s=float(t), label=f"{sc.flux_label}{k + 1}",
                                 flux_kg_m2s=sc.flux_kg_m2s))

    def truth_rate_fn(t, c=None):
        c = cols if c is None else np.asarray(c)
        if sc.rate_fn is None:
            return np.full(np.shape(c), float(sc.rate_mm_s))
        return np.broadcast_to(sc.rate_fn(t, c), np.shape(c)).astype(float)

    # time-averaged rate of the column-mean height, matching the pipeline's definition
    if len(times) > 1:
        drop = (heights[0] - heights[-1]).mean()
        truth_rate = float(drop * sc.mm_per_px / (times[-1] - times[0]))
    else:
        truth_rate = float(np.mean(truth_rate_fn(times[0])))
    return GeneratedSequence(frames, masks, heights_c, truth_rate_fn, truth_rate, underflow)


# ---------------------------------------------------------------------------
# benchmark

# per-flux noise, loosely following which artefact dominates each sequence
NOISE_PROFILES = {
    "A": dict(wax=WaxNoise(count=6), soot=SootNoise(density=0.002), flame=FlameGhost(amplitude=0.12)),
    "B": dict(wax=WaxNoise(count=28), soot=SootNoise(density=0.012), flame=FlameGhost(amplitude=0.15)),
    "C": dict(wax=WaxNoise(count=8), soot=SootNoise(density=0.004), flame=FlameGhost(amplitude=0.33)),
    "D": dict(wax=WaxNoise(count=8), soot=SootNoise(density=0.004), flame=FlameGhost(amplitude=0.28),
              saturation=Saturation(gain=1.15, glare=1.2)),
}


@dataclass
class BenchmarkConfig:
    width_px: int = 512
    height_px: int = 128
    frame_counts: dict[str, int] | None = None  # defaults to 37/36/39/38
    mm_per_px: float = 0.25
    regress_fraction: float = 0.32  # of the image height over the burn
    rate_coeff: float = 0.45  # rate = coeff * G**0.5, mm/s
    time_jitter: float = 0.1  # fraction of the mean frame interval
    noise: bool = True
    profile: str = "rippled"  # or "tilted", see tilted_profile
    seed: int = 2023


def benchmark_scenarios(config: BenchmarkConfig | None = None) -> dict[str, BurnScenario]:
    cfg = config or BenchmarkConfig()
    if cfg.profile not in ("rippled", "tilted"):
        raise ValueError(f"unknown profile {cfg.profile!r}")
    counts = cfg.frame_counts or {k: n for k, (_, n) in FLUX_SEQUENCES.items()}
    out = {}
    for i, (name, n) in enumerate(counts.items()):
        flux = FLUX_SEQUENCES[name][0]
        rate = cfg.rate_coeff * flux ** 0.5
        duration = cfg.regress_fraction * cfg.height_px * cfg.mm_per_px / rate
        rng = np.random.default_rng([cfg.seed, i, 7])
        dt = duration / max(n - 1, 1)
        times = np.arange(n) * dt
        times[1:-1] += rng.uniform(-cfg.time_jitter, cfg.time_jitter, max(n - 2, 0)) * dt
        noise = NOISE_PROFILES[name] if cfg.noise else {}
        prof = tilted_profile(cfg.width_px, cfg.height_px) if cfg.profile == "tilted" else None
        out[name] = BurnScenario(width_px=cfg.width_px, height_px=cfg.height_px, initial_profile=prof,
                                 frame_times_s=tuple(float(t) for t in times), rate_mm_s=rate,
                                 mm_per_px=cfg.mm_per_px, flux_label=name, flux_kg_m2s=flux,
                                 seed=cfg.seed * 100 + i, **noise)
    return out


def generate_benchmark(config: BenchmarkConfig | None = None, out_dir=None) -> dict[str, Sequence]:
    """Four-flux synthetic dataset; written in the on-disk layout when ``out_dir`` is given."""
    dataset = {name: generate(sc).to_sequence(sc) for name, sc in benchmark_scenarios(config).items()}
    if out_dir is not None:
        save_dataset(dataset, out_dir)
    return dataset
