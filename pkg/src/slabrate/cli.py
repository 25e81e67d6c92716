"""Command-line entry point: ``slabrate <subcommand> ...``.

Subcommands: synth, segment, train, predict, rate, eval, loocv, study.
Every run writes its outputs below ``--out`` together with ``run.json``,
which records the resolved configuration, the seed and the arguments.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .classicseg import segment_sequence
from .config import ConfigError, RunConfig, load_config
from .dataset import (ManifestError, load_dataset, load_mask_sequence, load_sequence, read_manifest,
                      sequence_dirs, write_manifest)
from .evalharness.protocols import (SequenceEval, evaluate_classical, evaluate_unet, predict_sequence,
                                    run_flux_study, run_loocv, score_masks, train_model)
from .imgcore import ImageError, save_mask
from .neuralseg.augment import Augmenter
from .neuralseg.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .regression import FitError, heights_from_masks, rate_from_series, rate_uncertainty
from .report import ReportError, plot_heights, plot_rates, write_csv, write_report
from .slabsynth import generate_benchmark

log = logging.getLogger("slabrate")

CLASSICAL = ("threshold", "tlis", "spatial")
CHECKPOINT_NAME = "model.ckpt"
UNCERTAINTY_DIR = "uncertainty"


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# helpers

def _config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    run = cfg.run
    over = {}
    if getattr(args, "dataset", None):
        over["dataset"] = str(args.dataset)
    if getattr(args, "out", None):
        over["output"] = str(args.out)
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
    if getattr(args, "samples", None) is not None:
        over["samples"] = args.samples
    if getattr(args, "mode", None) == "grayscale":
        over["color_mode"] = "grayscale"
    if over:
        import dataclasses

        cfg = dataclasses.replace(cfg, run=dataclasses.replace(run, **over))
    return cfg


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.run.output)
    if cfg.run.dataset:
        ds = Path(cfg.run.dataset).resolve()
        o = out.resolve()
        if o == ds or ds in o.parents:
            raise UsageError(f"output directory {out} must not be inside the input dataset {cfg.run.dataset}")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dataset_path(cfg: RunConfig) -> Path:
    if not cfg.run.dataset:
        raise UsageError("no dataset given (use --dataset or [run] dataset)")
    p = Path(cfg.run.dataset)
    if not p.exists():
        raise UsageError(f"dataset not found: {p}")
    return p


def _write_run_json(out: Path, command: str, cfg: RunConfig, args, extra=None) -> None:
    argd = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())
            if k not in ("func",)}
    rec = {"command": command, "version": __version__, "seed": cfg.run.seed, "config": cfg.to_dict(),
           "args": argd}
    if extra:
        rec.update(extra)
    (out / "run.json").write_text(json.dumps(rec, indent=1, sort_keys=True) + "\n")


def _select(dataset: dict, names) -> dict:
    if not names:
        return dataset
    missing = [n for n in names if n not in dataset]
    if missing:
        raise UsageError(f"fluxes {missing} not found in dataset (have {sorted(dataset)})")
    return {n: dataset[n] for n in names}


def _require_truth(dataset):
    for name, seq in dataset.items():
        if seq.truth_masks is None:
            raise UsageError(f"sequence {name} has no truth/ masks; evaluation needs ground truth")


# ---------------------------------------------------------------------------
# subcommands

def cmd_synth(args, cfg: RunConfig) -> dict:
    out = _out_dir(cfg)
    ds = generate_benchmark(cfg.synth.benchmark(cfg.run.seed), out)
    return {"sequences": {k: len(v) for k, v in ds.items()}}


def _sequences(cfg: RunConfig, with_truth: bool, names=()):
    """``(directory, Sequence)`` pairs of the input dataset, optionally restricted to ``names``."""
    dirs = sequence_dirs(_dataset_path(cfg))
    if names:
        have = {d.name: d for d in dirs}
        missing = [n for n in names if n not in have]
        if missing:
            raise UsageError(f"fluxes {missing} not found in dataset (have {sorted(have)})")
        dirs = [have[n] for n in names]
    return [(d, load_sequence(d, with_truth)) for d in dirs]


def cmd_segment(args, cfg: RunConfig) -> dict:
    out = _out_dir(cfg)
    for src, seq in _sequences(cfg, False):
        masks, thresholds = segment_sequence(seq.frames, args.method)
        d = out / src.name
        d.mkdir(parents=True, exist_ok=True)
        for f, m in zip(seq.frames, masks):
            save_mask(m, d / f"{f.label}.png")
        write_manifest(d, read_manifest(src))
        write_csv(d / "thresholds.csv", ["frame", "label", "time_s", "threshold"],
                  [(k, f.label, f.time_s, t) for k, (f, t) in enumerate(zip(seq.frames, thresholds))])
    return {"method": args.method}


def cmd_rate(args, cfg: RunConfig) -> dict:
    out = _out_dir(cfg)
    src = Path(args.masks)
    if not src.exists():
        raise UsageError(f"mask directory not found: {src}")
    summary = []
    for d in sequence_dirs(src):
        rows, masks = load_mask_sequence(d)
        times = [r.time_s for r in rows]
        mm = rows[0].mm_per_px
        series = heights_from_masks(masks, times, mm)
        udir = d / UNCERTAINTY_DIR
        if udir.is_dir():
            u = [np.load(udir / f"{r.label}.npy") for r in rows]
            res = rate_uncertainty(masks, u, times, mm, cfg.run.rate_definition, cfg.run.uncertainty_norm)
            if res.bounds_note:
                log.warning("%s: no error bar (%s)", d.name, res.bounds_note)
        else:
            res = rate_from_series(series, cfg.run.rate_definition)
        o = out / d.name
        hrows = [(k, rows[k].label, times[k], c, series.heights_px[k, c], int(series.valid[k, c]))
                 for k in range(series.n_frames) for c in range(series.heights_px.shape[1])]
        write_csv(o / "heights.csv", ["frame", "label", "time_s", "column", "height_px", "valid"], hrows)
        rec = [d.name, rows[0].flux_kg_m2s, *res.cubic_coeffs, res.rate_mm_s, res.rate_lower,
               res.rate_upper, res.t_start, res.t_end]
        write_csv(o / "rate.csv", ["sequence", "flux_kg_m2s", "a0", "a1", "a2", "a3", "rate_mm_s",
                                   "rate_lower", "rate_upper", "t_start", "t_end"], [rec])
        plot_heights(o / "heights.svg", res.fit_times, res.mean_heights, res.cubic_coeffs, mm, d.name)
        summary.append((d.name, rows[0].flux_kg_m2s, res.rate_mm_s, res.rate_lower, res.rate_upper, None))
    write_csv(out / "rates.csv", ["sequence", "flux_kg_m2s", "rate_mm_s", "rate_lower", "rate_upper"],
              [r[:5] for r in summary])
    plot_rates(out / "rates.svg", summary)
    return {"sequences": [r[0] for r in summary]}


def cmd_train(args, cfg: RunConfig) -> dict:
    out = _out_dir(cfg)
    dataset = _select(load_dataset(_dataset_path(cfg)), cfg.run.train_fluxes)
    _require_truth(dataset)
    r = cfg.resolved()
    aug = Augmenter(r.augment) if r.augment.enabled else None
    model = train_model(dataset, list(dataset), r.unet, r.train, aug, r.run.val_fraction,
                        r.run.color_mode == "grayscale")
    h = model.history
    save_checkpoint(out / CHECKPOINT_NAME, model.params, r.train, h, h.optimizer,
                    extra={"train_fluxes": list(dataset), "val_index": [int(i) for i in model.val_index]})
    write_csv(out / "history.csv", ["epoch", "train_loss", "val_metric"],
              [(k + 1, a, b) for k, (a, b) in enumerate(zip(h.train_loss, h.val_metric))])
    return {"best_epoch": h.best_epoch, "epochs": h.epochs, "stop_reason": h.stop_reason}


def cmd_predict(args, cfg: RunConfig) -> dict:
    out = _out_dir(cfg)
    params, _, _ = load_checkpoint(args.checkpoint)
    rows = []
    for src, seq in _sequences(cfg, False, cfg.run.test_fluxes):
        masks, u = predict_sequence(params, seq, cfg.run.samples, cfg.run.seed)
        d = out / src.name
        (d / UNCERTAINTY_DIR).mkdir(parents=True, exist_ok=True)
        for f, m, um in zip(seq.frames, masks, u):
            save_mask(m, d / f"{f.label}.png")
            np.save(d / UNCERTAINTY_DIR / f"{f.label}.npy", um)
            rows.append((src.name, f.label, f.time_s, float(m.mean()), float(um.mean())))
        write_manifest(d, read_manifest(src))
    write_csv(out / "predictions.csv", ["sequence", "label", "time_s", "fuel_fraction", "mean_uncertainty"],
              rows)
    return {"samples": cfg.run.samples, "checkpoint": str(args.checkpoint)}


def cmd_eval(args, cfg: RunConfig) -> dict:
    out = _out_dir(cfg)
    dataset = _select(load_dataset(_dataset_path(cfg)), cfg.run.test_fluxes)
    _require_truth(dataset)
    how, norm = cfg.run.rate_definition, cfg.run.uncertainty_norm
    results: list[tuple[str, SequenceEval]] = []
    given = sum(x is not None for x in (args.method, args.checkpoint, args.masks))
    if given != 1:
        raise UsageError("eval needs exactly one of --method, --checkpoint or --masks")
    for name, seq in dataset.items():
        if args.method:
            ev = evaluate_classical(seq, args.method, how)
            key = args.method
        elif args.checkpoint:
            params, meta, _ = load_checkpoint(args.checkpoint)
            ev = evaluate_unet(params, seq, cfg.run.samples, cfg.run.seed, how=how, norm=norm)
            key = "".join((meta.get("extra") or {}).get("train_fluxes", [])) or "unet"
        else:
            d = Path(args.masks) / name
            rows, masks = load_mask_sequence(d)
            if [r.label for r in rows] != seq.labels:
                raise UsageError(f"mask labels in {d} do not match the dataset")
            udir = d / UNCERTAINTY_DIR
            u = [np.load(udir / f"{r.label}.npy") for r in rows] if udir.is_dir() else None
            ev = score_masks(seq, masks, "masks", u, how, norm)
            key = "masks"
        results.append((key, ev))
    write_report(out, results)
    return {"evaluated": [n for n in dataset]}


def cmd_loocv(args, cfg: RunConfig) -> dict:
    out = _out_dir(cfg)
    dataset = load_dataset(_dataset_path(cfg))
    _require_truth(dataset)
    r = cfg.resolved()
    aug = Augmenter(r.augment) if r.augment.enabled else None
    folds = run_loocv(dataset, r.unet, r.train, aug, r.run.test_fluxes or None, r.run.color_mode,
                      r.run.samples, r.run.val_fraction, r.run.seed, r.run.rate_definition,
                      r.run.uncertainty_norm)
    results = []
    for f in folds:
        h = f.model.history
        save_checkpoint(out / f"fold_{f.spec.test_flux}.ckpt", f.model.params, r.train, h, h.optimizer,
                        extra={"train_fluxes": sorted(f.spec.train_fluxes)})
        results.append(("".join(sorted(f.spec.train_fluxes)), f.evaluation))
    write_report(out, results, accuracy_plot="loocv_accuracy.svg")
    return {"folds": [f.spec.name for f in folds]}


def cmd_study(args, cfg: RunConfig) -> dict:
    out = _out_dir(cfg)
    dataset = load_dataset(_dataset_path(cfg))
    _require_truth(dataset)
    r = cfg.resolved()
    aug = Augmenter(r.augment) if r.augment.enabled else None
    mode = "grayscale" if args.mode == "grayscale" else "rgb"
    res = run_flux_study(dataset, r.unet, r.train, mode, aug, r.run.samples, r.run.val_fraction, r.run.seed,
                         r.run.train_fluxes or None, r.run.rate_definition, r.run.uncertainty_norm)
    results = [(k[0], ev) for k, ev in res.cells.items()]
    for key, m in res.models.items():
        save_checkpoint(out / f"model_{key}.ckpt", m.params, r.train, m.history, m.history.optimizer,
                        extra={"train_fluxes": list(m.train_fluxes)})
    write_report(out, results)
    metrics = ("mean_spatial_error", "rate_error", "mean_accuracy", "mean_profile_uncertainty")
    tables = [res.table(m) for m in metrics]
    write_csv(out / "summary.csv", ["train_set", "test_flux", *metrics],
              [(k[0], k[1], *(t[k] for t in tables)) for k in res.cells])
    return {"mode": mode, "models": list(res.models)}


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="slabrate", description="Fuel regression rate from slab-burner images.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def add(name, func, help_, dataset=True):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.add_argument("--config", type=Path, help="INI-style run configuration")
        if dataset:
            sp.add_argument("--dataset", type=Path, help="dataset root or one sequence directory")
        sp.add_argument("--out", type=Path, help="output directory (default: [run] output)")
        sp.add_argument("--seed", type=int, help="global seed (overrides [run] seed)")
        sp.set_defaults(func=func)
        return sp

    add("synth", cmd_synth, "generate a synthetic four-flux benchmark with ground truth", dataset=False)
    sp = add("segment", cmd_segment, "segment every frame with a classical method")
    sp.add_argument("--method", choices=CLASSICAL, required=True)
    sp = add("rate", cmd_rate, "heights, cubic fit and regression rate from a mask directory", dataset=False)
    sp.add_argument("--masks", type=Path, required=True, help="directory written by segment or predict")
    add("train", cmd_train, "train a U-Net on the dataset's truth masks")
    sp = add("predict", cmd_predict, "MC-dropout masks and uncertainty maps from a checkpoint")
    sp.add_argument("--checkpoint", type=Path, required=True)
    sp.add_argument("--samples", type=int, help="MC-dropout samples (default 20)")
    sp = add("eval", cmd_eval, "score masks against ground truth")
    sp.add_argument("--method", choices=CLASSICAL)
    sp.add_argument("--checkpoint", type=Path)
    sp.add_argument("--masks", type=Path, help="directory written by segment or predict")
    sp.add_argument("--samples", type=int)
    sp = add("loocv", cmd_loocv, "leave-one-flux-out cross-validation")
    sp.add_argument("--samples", type=int)
    sp = add("study", cmd_study, "single-flux training study, in colour or grayscale")
    sp.add_argument("--mode", choices=("flux", "grayscale"), required=True)
    sp.add_argument("--samples", type=int)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        out = _out_dir(cfg)
        # record the resolved run before doing any work, then again with results
        _write_run_json(out, args.command, cfg, args)
        extra = args.func(args, cfg)
        _write_run_json(out, args.command, cfg, args, {"result": extra})
    except (UsageError, ConfigError, ManifestError, CheckpointError, ImageError, FitError, ReportError,
            FileNotFoundError) as exc:
        print(f"slabrate {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"slabrate {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
