"""Figures for the ``report`` command, rendered from the CSV/JSON outputs of the other commands."""

from __future__ import annotations

import csv
import datetime as dt
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluation import PATTERN_LABELS, AblationReport  # noqa: E402
from .rsi import COMPETITIVE_THRESHOLD, PIVOTAL_THRESHOLD  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
}
# fixed metadata keeps repeated renders byte-identical
PNG_METADATA = {"Software": None}


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata=PNG_METADATA)
    plt.close(fig)
    return path


def plot_rsi_series(rsi_csv, path) -> Path:
    rows = _read_csv(rsi_csv)
    t = [dt.datetime.fromisoformat(r["date"]) + dt.timedelta(hours=int(r["hour"]) - 1) for r in rows]
    v = np.array([float(r["rsi"]) for r in rows])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(8, 3))
        ax.plot(t, v, lw=0.5, color="0.3")
        ax.axhline(PIVOTAL_THRESHOLD, color="tab:red", lw=1, ls="--", label="pivotal (100)")
        ax.axhline(COMPETITIVE_THRESHOLD, color="tab:green", lw=1, ls=":", label="competitive (110)")
        ax.set_ylabel("market RSI (%)")
        ax.legend(loc="upper right", frameon=False)
        fig.autofmt_xdate()
        fig.tight_layout()
        return _save(fig, path)


def plot_correlations(corr_csv, path) -> Path:
    rows = _read_csv(corr_csv)
    regimes = list(dict.fromkeys(r["regime"] for r in rows))
    pairs = list(dict.fromkeys(r["pair"] for r in rows))
    values = {(r["regime"], r["pair"]): float(r["pearson_r"]) for r in rows}
    width = 0.8 / max(len(regimes), 1)
    x = np.arange(len(pairs))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3))
        for k, regime in enumerate(regimes):
            ax.bar(x + k * width, [values[(regime, p)] for p in pairs], width, label=regime)
        ax.set_xticks(x + width * (len(regimes) - 1) / 2)
        ax.set_xticklabels([p.replace("~", " vs ") for p in pairs])
        ax.axhline(0, color="k", lw=0.6)
        ax.set_ylim(-1, 1)
        ax.set_ylabel("Pearson r")
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def plot_ablation(report: AblationReport, path) -> Path:
    rows = [r for r in report.rows if r.available]
    regimes = list(dict.fromkeys(r.regime for r in rows))
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, max(len(regimes), 1), figsize=(4 * max(len(regimes), 1), 3), squeeze=False)
        for ax, regime in zip(axes[0], regimes):
            sub = [r for r in rows if r.regime == regime]
            x = np.arange(len(sub))
            ax.bar(x - 0.2, [r.rmse_with_rsi for r in sub], 0.4, label="with RSI")
            ax.bar(x + 0.2, [r.rmse_without_rsi for r in sub], 0.4, label="without RSI")
            for xi, r in zip(x, sub):
                ax.plot(np.full(len(r.per_seed_with), xi - 0.2), r.per_seed_with, "k.", ms=2)
                ax.plot(np.full(len(r.per_seed_without), xi + 0.2), r.per_seed_without, "k.", ms=2)
            ax.set_xticks(x)
            ax.set_xticklabels([PATTERN_LABELS[r.pattern] for r in sub], rotation=20)
            ax.set_title(f"{regime} hours")
            ax.set_ylabel("test RMSE (scaled)")
        axes[0][0].legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def plot_trace(trace_csv, path) -> Path:
    rows = _read_csv(trace_csv)
    epoch = [int(r["epoch"]) for r in rows]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3))
        ax.semilogy(epoch, [float(r["train_mse"]) for r in rows], label="train")
        val = [(e, float(r["val_mse"])) for e, r in zip(epoch, rows) if r["val_mse"]]
        if val:
            ax.semilogy(*zip(*val), label="validation")
        ax.set_xlabel("epoch")
        ax.set_ylabel("MSE (scaled)")
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def plot_predictions(pred_csv, path) -> Path:
    rows = _read_csv(pred_csv)
    actual = [float(r["actual_price"]) for r in rows]
    predicted = [float(r["predicted_price"]) for r in rows]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(8, 3))
        ax.plot(actual, lw=0.8, label="actual")
        ax.plot(predicted, lw=0.8, label="forecast")
        ax.set_xlabel("test sample")
        ax.set_ylabel("weighted-average price")
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)
