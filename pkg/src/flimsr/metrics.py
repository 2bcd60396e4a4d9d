"""Evaluation protocol: MSE, PSNR, SSIM, radially averaged power spectra,
and channel/modality-averaged reporting.

SSIM defaults to whole-image statistics; a windowed variant (11x11
Gaussian, sigma 1.5) is available and the mode used is recorded in every
report.  A perceptual metric is a pluggable callable slot only; none ships
because reference implementations require pretrained feature networks.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .flimb import FlimImage, channel_kind

PerceptualMetric = Callable[[np.ndarray, np.ndarray], float]


@dataclass(frozen=True)
class MetricConstants:
    """Dynamic range L and the SSIM stabilizers C1=(0.01L)^2, C2=(0.03L)^2."""

    L: float = 1.0

    @property
    def c1(self) -> float:
        return (0.01 * self.L) ** 2

    @property
    def c2(self) -> float:
        return (0.03 * self.L) ** 2


def mse(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean squared pixel-wise difference."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


def psnr(pred: np.ndarray, target: np.ndarray, L: float = 1.0) -> float:
    """10*log10(L^2 / MSE) in dB; identical images report +inf."""
    err = mse(pred, target)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(L * L / err)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def _ssim_formula(mu_a, mu_b, var_a, var_b, cov, c1: float, c2: float):
    return ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    )


def ssim(
    pred: np.ndarray,
    target: np.ndarray,
    constants: MetricConstants = MetricConstants(),
    mode: str = "global",
) -> float:
    """Structural similarity between two equal-shape images.

    'global' evaluates the SSIM formula once with whole-image moments;
    'windowed' averages it over 11x11 Gaussian-weighted windows.
    """
    a = np.asarray(pred, dtype=np.float64)
    b = np.asarray(target, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    c1, c2 = constants.c1, constants.c2
    if mode == "global":
        mu_a, mu_b = a.mean(), b.mean()
        var_a, var_b = a.var(), b.var()
        cov = ((a - mu_a) * (b - mu_b)).mean()
        return float(_ssim_formula(mu_a, mu_b, var_a, var_b, cov, c1, c2))
    if mode == "windowed":
        w = _gaussian_window()
        if a.ndim != 2 or min(a.shape) < w.shape[0]:
            raise ValueError(f"windowed SSIM needs a 2-D image of at least {w.shape[0]}px")
        wa = sliding_window_view(a, w.shape)
        wb = sliding_window_view(b, w.shape)
        mu_a = (wa * w).sum(axis=(-2, -1))
        mu_b = (wb * w).sum(axis=(-2, -1))
        var_a = (wa**2 * w).sum(axis=(-2, -1)) - mu_a**2
        var_b = (wb**2 * w).sum(axis=(-2, -1)) - mu_b**2
        cov = (wa * wb * w).sum(axis=(-2, -1)) - mu_a * mu_b
        return float(_ssim_formula(mu_a, mu_b, var_a, var_b, cov, c1, c2).mean())
    raise ValueError(f"mode must be 'global' or 'windowed', got {mode!r}")


@dataclass
class RadialSpectrum:
    """Mean DFT power per radial frequency bin.

    Bin b collects DFT coefficients whose radius rounds to b in index space
    of the longer axis; ``bin_centers`` are in cycles/pixel, spanning
    [0, 0.5*sqrt(2)].  ``counts`` enables Parseval bookkeeping.
    """

    bin_centers: np.ndarray
    mean_power: np.ndarray
    counts: np.ndarray

    def total_power(self) -> float:
        return float(np.sum(self.mean_power * self.counts))


def radial_power_spectrum(image: np.ndarray) -> RadialSpectrum:
    """Radially averaged power spectral density of one H x W plane."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2 or min(img.shape) < 8:
        raise ValueError(f"need a 2-D image of at least 8px per side, got shape {img.shape}")
    h, w = img.shape
    power = np.abs(np.fft.fft2(img)) ** 2
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    n = max(h, w)
    radius = np.sqrt(fy**2 + fx**2) * n
    bins = np.floor(radius + 0.5).astype(np.intp)
    n_bins = int(bins.max()) + 1
    sums = np.bincount(bins.ravel(), weights=power.ravel(), minlength=n_bins)
    counts = np.bincount(bins.ravel(), minlength=n_bins)
    return RadialSpectrum(
        bin_centers=np.arange(n_bins, dtype=np.float64) / n,
        mean_power=sums / np.maximum(counts, 1),
        counts=counts,
    )


def spectrum_to_csv(spectrum: RadialSpectrum, path: str | Path) -> None:
    lines = ["bin_center_cycles_per_pixel,mean_power"]
    for c, p in zip(spectrum.bin_centers, spectrum.mean_power):
        lines.append(f"{c:.10g},{p:.10g}")
    Path(path).write_text("\n".join(lines) + "\n")


MODALITIES = ("lifetime", "intensity")
METRIC_KEYS = ("mse", "psnr", "ssim")


@dataclass
class PairMetrics:
    """Per-channel metrics of one prediction/target pair."""

    pair_id: str
    channels: dict[str, dict[str, float]]
    perceptual: float | None = None

    def modality_means(self) -> dict[str, dict[str, float]]:
        out: dict[str, dict[str, float]] = {}
        for modality in MODALITIES:
            names = [n for n in self.channels if channel_kind(n) == modality]
            if names:
                out[modality] = {
                    key: float(np.mean([self.channels[n][key] for n in names]))
                    for key in METRIC_KEYS
                }
        return out


@dataclass
class MetricReport:
    """Evaluation of a paired prediction/target set."""

    ssim_mode: str
    constants: MetricConstants
    pairs: list[PairMetrics] = field(default_factory=list)

    def aggregate(self) -> dict:
        if not self.pairs:
            return {"channels": {}, "modality_means": {}, "perceptual": None}
        names = list(self.pairs[0].channels)
        channels = {
            n: {
                key: float(np.mean([p.channels[n][key] for p in self.pairs]))
                for key in METRIC_KEYS
            }
            for n in names
        }
        modality: dict[str, dict[str, float]] = {}
        for mod in MODALITIES:
            mod_names = [n for n in names if channel_kind(n) == mod]
            if mod_names:
                modality[mod] = {
                    key: float(np.mean([channels[n][key] for n in mod_names]))
                    for key in METRIC_KEYS
                }
        perceptual_vals = [p.perceptual for p in self.pairs if p.perceptual is not None]
        return {
            "channels": channels,
            "modality_means": modality,
            "perceptual": float(np.mean(perceptual_vals)) if perceptual_vals else None,
        }

    def to_dict(self) -> dict:
        return {
            "ssim_mode": self.ssim_mode,
            "constants": {"L": self.constants.L, "C1": self.constants.c1, "C2": self.constants.c2},
            "pairs": [
                {
                    "id": p.pair_id,
                    "channels": p.channels,
                    "modality_means": p.modality_means(),
                    "perceptual": p.perceptual,
                }
                for p in self.pairs
            ],
            "aggregate": self.aggregate(),
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_dict(cls, doc: dict) -> "MetricReport":
        report = cls(
            ssim_mode=doc["ssim_mode"], constants=MetricConstants(L=doc["constants"]["L"])
        )
        for entry in doc["pairs"]:
            report.pairs.append(
                PairMetrics(
                    pair_id=entry["id"],
                    channels={n: dict(v) for n, v in entry["channels"].items()},
                    perceptual=entry.get("perceptual"),
                )
            )
        return report

    @classmethod
    def load(cls, path: str | Path) -> "MetricReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


def evaluate(
    pred_set: Sequence[FlimImage],
    target_set: Sequence[FlimImage],
    constants: MetricConstants = MetricConstants(),
    ssim_mode: str = "global",
    pair_ids: Sequence[str] | None = None,
    perceptual: PerceptualMetric | None = None,
) -> MetricReport:
    """Per-channel metrics for every pair, plus modality averages."""
    if len(pred_set) != len(target_set):
        raise ValueError(f"{len(pred_set)} predictions for {len(target_set)} targets")
    if pair_ids is not None and len(pair_ids) != len(pred_set):
        raise ValueError("pair_ids length mismatch")
    report = MetricReport(ssim_mode=ssim_mode, constants=constants)
    for i, (pred, target) in enumerate(zip(pred_set, target_set)):
        if pred.channel_names != target.channel_names:
            raise ValueError(f"pair {i}: channel lists differ")
        if pred.data.shape != target.data.shape:
            raise ValueError(f"pair {i}: shapes differ {pred.data.shape} vs {target.data.shape}")
        channels = {}
        for c, name in enumerate(pred.channel_names):
            p_plane, t_plane = pred.data[c], target.data[c]
            channels[name] = {
                "mse": mse(p_plane, t_plane),
                "psnr": psnr(p_plane, t_plane, constants.L),
                "ssim": ssim(p_plane, t_plane, constants, ssim_mode),
            }
        score = perceptual(pred.data, target.data) if perceptual is not None else None
        pair_id = pair_ids[i] if pair_ids is not None else f"pair_{i}"
        report.pairs.append(PairMetrics(pair_id=pair_id, channels=channels, perceptual=score))
    return report
