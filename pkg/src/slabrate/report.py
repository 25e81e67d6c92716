"""CSV tables and SVG figures.

Every CSV starts with a header row naming its columns. SVG output is made
reproducible by fixing matplotlib's hash salt and dropping the date stamp.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "slabrate"
_SVG_META = {"Date": None}


class ReportError(ValueError):
    pass


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return v


def write_csv(path, header, rows) -> Path:
    """Write ``rows`` under ``header``; floats are written with full precision."""
    rows = list(rows)
    if not rows:
        raise ReportError(f"refusing to write empty table {path}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            if len(r) != len(header):
                raise ReportError(f"row {r!r} does not match header {header!r}")
            w.writerow([_fmt(v) for v in r])
    return path


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return path


def plot_heights(path, times, mean_heights, coeffs, mm_per_px: float = 1.0, title: str = "") -> Path:
    """Mean fuel height against time with the fitted cubic."""
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        raise ReportError("no heights to plot")
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(times, np.asarray(mean_heights) * mm_per_px, "o", ms=3, label="measured")
    tt = np.linspace(times[0], times[-1], 200)
    ax.plot(tt, np.polynomial.polynomial.polyval(tt, coeffs) * mm_per_px, "-", label="cubic fit")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("fuel height [mm]")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def plot_series(path, series: dict[str, tuple], xlabel: str, ylabel: str, title: str = "",
                logy: bool = False) -> Path:
    """One line per key; values are ``(x, y)`` pairs."""
    if not series:
        raise ReportError("no series to plot")
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name in sorted(series):
        x, y = series[name]
        ax.plot(x, y, "o-", ms=3, label=name)
    if logy and all(np.all(np.asarray(y, dtype=float) > 0) for _, y in series.values()):
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend(fontsize="small")
    fig.tight_layout()
    return _save(fig, path)


def plot_rates(path, rows) -> Path:
    """Regression rate against flux with one error bar per flux.

    ``rows``: iterables of ``(label, flux, rate, lower, upper, truth_or_None)``.
    """
    rows = list(rows)
    if not rows:
        raise ReportError("no rates to plot")
    flux = np.array([r[1] for r in rows], dtype=float)
    rate = np.array([r[2] for r in rows], dtype=float)
    lo = np.array([r[3] for r in rows], dtype=float)
    hi = np.array([r[4] for r in rows], dtype=float)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    # undefined bounds (NaN) are drawn without a bar
    yerr = np.nan_to_num(np.array([rate - lo, hi - rate]), nan=0.0)
    ax.errorbar(flux, rate, yerr=yerr, fmt="o", capsize=4, label="measured")
    truth = [(f, r[5]) for f, r in zip(flux, rows) if r[5] is not None]
    if truth:
        ax.plot(*zip(*truth), "kx", label="programmed")
    for f, r, row in zip(flux, rate, rows):
        ax.annotate(str(row[0]), (f, r), textcoords="offset points", xytext=(5, 5))
    ax.set_xlabel("oxidizer flux G [kg/m$^2$-s]")
    ax.set_ylabel("regression rate [mm/s]")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


FRAME_COLUMNS = ["train_set", "method", "test_flux", "frame", "label", "time_s", "accuracy", "n1", "n2", "n3",
                 "n4", "spatial_error", "excluded_columns", "profile_uncertainty"]
RATE_COLUMNS = ["train_set", "method", "test_flux", "flux_kg_m2s", "rate_mm_s", "rate_lower", "rate_upper",
                "truth_rate_mm_s", "rate_error"]


def write_report(out_dir, results, accuracy_plot: str = "accuracy.svg") -> list[Path]:
    """Tables and figures for a list of ``(train_set, SequenceEval)`` pairs.

    Writes ``frames.csv`` (one row per evaluated frame), ``rates.csv`` (one
    row per sequence), ``spatial_error.svg``, an accuracy-against-time plot
    and ``rates.svg``. Nothing is written when ``results`` is empty.
    """
    results = list(results)
    if not results:
        raise ReportError("no results to report")
    out = Path(out_dir)
    frame_rows, rate_rows, rate_pts = [], [], []
    se_series, acc_series = {}, {}
    for key, ev in results:
        for k, f in enumerate(ev.frames):
            frame_rows.append((key, ev.method, ev.flux, k, f.label, f.time_s, f.accuracy, *f.confusion,
                               f.spatial_error, f.excluded_columns, f.profile_uncertainty))
        name = f"{key}->{ev.flux}"
        t = [f.time_s for f in ev.frames]
        se_series[name] = (t, [f.spatial_error for f in ev.frames])
        acc_series[name] = (t, [f.accuracy for f in ev.frames])
        if ev.rate is not None:
            r = ev.rate
            rate_rows.append((key, ev.method, ev.flux, ev.flux_kg_m2s, r.rate_mm_s, r.rate_lower, r.rate_upper,
                              ev.truth_rate_mm_s if ev.truth_rate_mm_s is not None else "", ev.rate_error))
            rate_pts.append((ev.flux, ev.flux_kg_m2s, r.rate_mm_s, r.rate_lower, r.rate_upper,
                             ev.truth_rate_mm_s))
    paths = [write_csv(out / "frames.csv", FRAME_COLUMNS, frame_rows)]
    if rate_rows:
        paths.append(write_csv(out / "rates.csv", RATE_COLUMNS, rate_rows))
        paths.append(plot_rates(out / "rates.svg", rate_pts))
    paths.append(plot_series(out / "spatial_error.svg", se_series, "time [s]", "spatial error", logy=True))
    paths.append(plot_series(out / accuracy_plot, acc_series, "time [s]", "pixel accuracy"))
    return paths
