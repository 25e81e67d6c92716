"""Plain-text run configuration.

INI-style ``key = value`` lines grouped in sections::

    [run]        dataset, output, seed, color_mode, train_fluxes, test_fluxes,
                 samples, val_fraction, rate_definition, uncertainty_norm
    [unet]       UNetConfig fields (except seed and in_channels)
    [train]      TrainConfig fields (except seed)
    [augment]    AugmentConfig fields
    [synth]      BenchmarkConfig fields, plus ``fluxes`` and ``frames``

Unknown sections or keys are errors. The ``[run]`` seed drives every
other seed.
"""

from __future__ import annotations

import configparser
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .neuralseg.augment import AugmentConfig
from .neuralseg.training import TrainConfig
from .neuralseg.unet import UNetConfig
from .slabsynth import BenchmarkConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunOptions:
    dataset: str = ""
    output: str = "out"
    seed: int = 0
    color_mode: str = "rgb"
    train_fluxes: tuple[str, ...] = ()
    test_fluxes: tuple[str, ...] = ()
    samples: int = 20
    val_fraction: float = 0.1
    rate_definition: str = "average"
    uncertainty_norm: str = "image"

    def __post_init__(self):
        if self.color_mode not in ("rgb", "grayscale"):
            raise ConfigError(f"color_mode must be rgb or grayscale, got {self.color_mode!r}")
        if self.samples < 1:
            raise ConfigError("samples must be >= 1")
        if self.rate_definition not in ("average", "midpoint"):
            raise ConfigError("rate_definition must be average or midpoint")
        if self.uncertainty_norm not in ("image", "fuel"):
            raise ConfigError("uncertainty_norm must be image or fuel")


@dataclass
class SynthOptions:
    fluxes: tuple[str, ...] = ("A", "B", "C", "D")
    frames: int = 0  # per flux; 0 keeps the default counts
    width_px: int = 512
    height_px: int = 128
    mm_per_px: float = 0.25
    regress_fraction: float = 0.32
    rate_coeff: float = 0.45
    time_jitter: float = 0.1
    noise: bool = True
    profile: str = "rippled"

    def benchmark(self, seed: int) -> BenchmarkConfig:
        from .dataset import FLUX_SEQUENCES

        unknown = set(self.fluxes) - set(FLUX_SEQUENCES)
        if unknown:
            raise ConfigError(f"unknown flux labels {sorted(unknown)}")
        counts = {f: (self.frames or FLUX_SEQUENCES[f][1]) for f in self.fluxes}
        return BenchmarkConfig(width_px=self.width_px, height_px=self.height_px, frame_counts=counts,
                               mm_per_px=self.mm_per_px, regress_fraction=self.regress_fraction,
                               rate_coeff=self.rate_coeff, time_jitter=self.time_jitter,
                               noise=self.noise, profile=self.profile, seed=seed)


@dataclass
class RunConfig:
    run: RunOptions = field(default_factory=RunOptions)
    unet: UNetConfig = field(default_factory=lambda: UNetConfig(base_channels=8, height=128, width=128))
    train: TrainConfig = field(default_factory=TrainConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    synth: SynthOptions = field(default_factory=SynthOptions)

    def resolved(self) -> "RunConfig":
        """Copy with the global seed and color mode pushed into the sub-configs."""
        s = self.run.seed
        inc = 1 if self.run.color_mode == "grayscale" else 3
        return dataclasses.replace(self, unet=dataclasses.replace(self.unet, seed=s, in_channels=inc),
                                   train=dataclasses.replace(self.train, seed=s))

    def to_dict(self) -> dict:
        r = self.resolved()
        return {
            "run": _plain(dataclasses.asdict(r.run)),
            "unet": r.unet.to_dict(),
            "train": r.train.to_dict(),
            "augment": dataclasses.asdict(r.augment),
            "synth": _plain(dataclasses.asdict(r.synth)),
        }


def _plain(d: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


# defaults for fields that are not plain scalars, keyed by (section, key)
_LIST_KEYS = {("run", "train_fluxes"), ("run", "test_fluxes"), ("synth", "fluxes"), ("unet", "dropout_sites")}
_HIDDEN = {("unet", "seed"), ("unet", "in_channels"), ("train", "seed")}

_SECTIONS = {"run": RunOptions, "unet": UNetConfig, "train": TrainConfig, "augment": AugmentConfig,
             "synth": SynthOptions}


def _field_types(cls) -> dict[str, object]:
    inst = cls()
    return {f.name: getattr(inst, f.name) for f in dataclasses.fields(cls)}


def _coerce(section: str, key: str, raw: str, default):
    raw = raw.strip()
    try:
        if (section, key) in _LIST_KEYS:
            if key == "dropout_sites" and raw.lower() == "default":
                return None
            if raw.lower() in ("", "none"):
                return ()
            return tuple(x.strip() for x in raw.split(",") if x.strip())
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from exc


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    parts = {}
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"{source}: unknown section [{section}]")
        cls = _SECTIONS[section]
        defaults = _field_types(cls)
        values = {}
        for key, raw in cp.items(section):
            if key not in defaults or (section, key) in _HIDDEN:
                raise ConfigError(f"{source}: unknown key {key!r} in [{section}]")
            values[key] = _coerce(section, key, raw, defaults[key])
        parts[section] = values
    cfg = RunConfig()
    try:
        kw = {}
        for section, values in parts.items():
            base = getattr(cfg, section)
            kw[section] = dataclasses.replace(base, **values)
        return dataclasses.replace(cfg, **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path) -> RunConfig:
    """Read an INI config, or the resolved config recorded in a ``run.json``."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    if path.suffix == ".json":
        try:
            rec = json.loads(path.read_text())
            return config_from_dict(rec["config"], str(path))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ConfigError(f"{path}: not a run record: {exc}") from exc
    return parse_config(path.read_text(), str(path))


def config_from_dict(d: dict, source: str = "<dict>") -> RunConfig:
    """Inverse of :meth:`RunConfig.to_dict`."""
    return parse_config(_render(d), source)


def dump_config(cfg: RunConfig) -> str:
    """Render a config back to text that :func:`parse_config` accepts."""
    return _render(cfg.to_dict())


def _render(d: dict) -> str:
    lines = []
    for section in ("run", "unet", "train", "augment", "synth"):
        if section not in d:
            continue
        lines.append(f"[{section}]")
        for k, v in d[section].items():
            if (section, k) in _HIDDEN:
                continue
            if isinstance(v, list):
                v = ",".join(v)
            elif v is None:
                v = "default"
            lines.append(f"{k} = {v}")
        lines.append("")
    return "\n".join(lines)
