"""Checkpoint container.

A checkpoint is an uncompressed zip archive (readable with ``np.load``)
whose members are written in a fixed order with a fixed timestamp, so
identical training runs produce byte-identical files:

    meta.json            {"format": "slabrate-unet", "version": 1, "unet": {...},
                          "train": {...}, "history": {...}, "adam_t": int, "extra": {...}}
    weights/<name>.npy   learnable arrays, sorted by name
    buffers/<name>.npy   batch-norm running mean/var
    adam_m/<name>.npy    Adam first moments (optional)
    adam_v/<name>.npy    Adam second moments (optional)

Arrays use the standard ``.npy`` format, version 1.0.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np

from .optim import AdamState
from .unet import UNetConfig, UNetParams

FORMAT = "slabrate-unet"
VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


class CheckpointError(ValueError):
    pass


def _member(zf, name, data: bytes):
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def _npy_bytes(arr) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr), version=(1, 0), allow_pickle=False)
    return buf.getvalue()


def save_checkpoint(path, params: UNetParams, train_config=None, history=None,
                    optimizer: AdamState | None = None, extra: dict | None = None) -> Path:
    meta = {
        "format": FORMAT,
        "version": VERSION,
        "unet": params.config.to_dict(),
        "train": train_config.to_dict() if train_config is not None else None,
        "history": history.to_dict() if history is not None else None,
        "adam_t": optimizer.t if optimizer is not None else 0,
        "extra": extra or {},
    }
    path = Path(path)
    with zipfile.ZipFile(path, "w") as zf:
        _member(zf, "meta.json", json.dumps(meta, sort_keys=True, indent=1).encode())
        for group, arrays in (("weights", params.weights), ("buffers", params.buffers)):
            for k in sorted(arrays):
                _member(zf, f"{group}/{k}.npy", _npy_bytes(arrays[k]))
        if optimizer is not None:
            for group, arrays in (("adam_m", optimizer.m), ("adam_v", optimizer.v)):
                for k in sorted(arrays):
                    _member(zf, f"{group}/{k}.npy", _npy_bytes(arrays[k]))
    return path


def load_checkpoint(path):
    """Returns ``(params, meta, optimizer_or_None)``."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    try:
        zf = zipfile.ZipFile(path)
    except zipfile.BadZipFile as exc:
        raise CheckpointError(f"{path} is not a checkpoint archive") from exc
    with zf:
        meta = json.loads(zf.read("meta.json"))
        if meta.get("format") != FORMAT or meta.get("version") != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint format {meta.get('format')!r} "
                                  f"v{meta.get('version')}")
        groups: dict[str, dict[str, np.ndarray]] = {"weights": {}, "buffers": {}, "adam_m": {}, "adam_v": {}}
        for name in zf.namelist():
            if not name.endswith(".npy"):
                continue
            group, key = name.split("/", 1)
            with zf.open(name) as fh:
                groups[group][key[:-4]] = np.lib.format.read_array(io.BytesIO(fh.read()), allow_pickle=False)
    ucfg = dict(meta["unet"])
    if ucfg.get("dropout_sites") is not None:
        ucfg["dropout_sites"] = tuple(ucfg["dropout_sites"])
    params = UNetParams(UNetConfig(**ucfg), groups["weights"], groups["buffers"])
    opt = None
    if groups["adam_m"]:
        opt = AdamState(groups["adam_m"], groups["adam_v"], int(meta["adam_t"]))
    return params, meta, opt
