"""Figure rendering for the reporting paths.

Every figure is written to a file next to the delimited output it
illustrates; the CSV/JSON stay the canonical record.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import METRIC_KEYS, MetricReport, RadialSpectrum

_VERDICT_COLORS = {
    "significant-improvement": "#2a9d8f",
    "significant-degradation": "#e76f51",
    "not-significant": "#b0b0b0",
}


def save_metric_report_figure(report: MetricReport, path: str | Path) -> None:
    """Bar chart of aggregate per-channel MSE / PSNR / SSIM."""
    agg = report.aggregate()["channels"]
    names = list(agg)
    fig, axes = plt.subplots(1, len(METRIC_KEYS), figsize=(4 * len(METRIC_KEYS), 3.2))
    for ax, key in zip(np.atleast_1d(axes), METRIC_KEYS):
        values = [agg[n][key] for n in names]
        finite = [v if np.isfinite(v) else 0.0 for v in values]
        ax.bar(range(len(names)), finite, color="#457b9d")
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, rotation=45, ha="right", fontsize=8)
        ax.set_title(key.upper())
        ax.grid(axis="y", alpha=0.3)
    fig.suptitle(f"channel-aggregate metrics (SSIM mode: {report.ssim_mode})")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_spectrum_figure(
    spectra: dict[str, RadialSpectrum], path: str | Path, title: str = "radial power spectrum"
) -> None:
    """Overlaid radially averaged power spectra on a log power axis."""
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for label, spec in spectra.items():
        mask = spec.bin_centers > 0
        ax.semilogy(spec.bin_centers[mask], np.maximum(spec.mean_power[mask], 1e-300), label=label)
    ax.set_xlabel("spatial frequency (cycles/pixel)")
    ax.set_ylabel("mean power")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_ttest_figure(tests: dict[str, dict[str, dict]], path: str | Path) -> None:
    """t statistics per channel and metric, colored by verdict."""
    channels = list(tests)
    metrics = sorted({m for per_channel in tests.values() for m in per_channel})
    fig, axes = plt.subplots(1, len(metrics), figsize=(3.6 * len(metrics), 3.2), squeeze=False)
    for ax, metric in zip(axes[0], metrics):
        ts, colors = [], []
        for ch in channels:
            entry = tests[ch].get(metric)
            t = entry["t"] if entry else 0.0
            ts.append(t if np.isfinite(t) else np.sign(t) * 10.0)
            colors.append(_VERDICT_COLORS.get(entry["verdict"] if entry else "", "#b0b0b0"))
        ax.bar(range(len(channels)), ts, color=colors)
        ax.axhline(0.0, color="black", linewidth=0.8)
        ax.set_xticks(range(len(channels)))
        ax.set_xticklabels(channels, rotation=45, ha="right", fontsize=8)
        ax.set_title(f"{metric} (t statistic)")
        ax.grid(axis="y", alpha=0.3)
    fig.suptitle("paired t-tests: A vs B")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_history_figure(
    steps: list[int], series: dict[str, list[float]], path: str | Path
) -> None:
    """Training loss curves."""
    fig, ax = plt.subplots(figsize=(6, 3.6))
    for label, values in series.items():
        ax.plot(steps[: len(values)], values, label=label, linewidth=1.0)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
