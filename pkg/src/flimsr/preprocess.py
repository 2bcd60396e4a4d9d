"""Degradation model and preprocessing: block averaging, percentile
clipping, min-max normalization, patch tiling, and bilinear resizing.

All statistics are computed on the low-resolution input and applied
identically to the high-resolution target, because at inference time only
the low-resolution image exists.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .flimb import FlimImage


@dataclass
class ClipStats:
    """Per-channel clip thresholds (value of the q-th percentile of the
    low-resolution channel, nearest-rank rule)."""

    q: float
    thresholds: dict[str, float]

    def apply(self, image: FlimImage) -> FlimImage:
        out = image.data.copy()
        for i, name in enumerate(image.channel_names):
            out[i] = np.minimum(out[i], np.float32(self.thresholds[name]))
        return image.with_data(out)


@dataclass
class NormStats:
    """Per-channel (min, max) of the affine normalization, plus the scope
    the statistics were computed over ('per_image' is the default; callers
    tiling first may record 'per_patch')."""

    ranges: dict[str, tuple[float, float]]
    scope: str = "per_image"

    def apply(self, image: FlimImage, clamp: bool = False) -> FlimImage:
        out = image.data.astype(np.float32).copy()
        for i, name in enumerate(image.channel_names):
            lo, hi = self.ranges[name]
            if hi - lo <= 0:
                out[i] = 0.0
            else:
                out[i] = (out[i] - np.float32(lo)) / np.float32(hi - lo)
        if clamp:
            out = np.clip(out, 0.0, 1.0)
        return image.with_data(out)


def save_stats(path: str | Path, clip: ClipStats, norm: NormStats) -> None:
    doc = {
        "clip": {"q": clip.q, "thresholds": clip.thresholds},
        "norm": {"scope": norm.scope, "ranges": {k: list(v) for k, v in norm.ranges.items()}},
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_stats(path: str | Path) -> tuple[ClipStats, NormStats]:
    doc = json.loads(Path(path).read_text())
    clip = ClipStats(q=doc["clip"]["q"], thresholds=dict(doc["clip"]["thresholds"]))
    norm = NormStats(
        ranges={k: (v[0], v[1]) for k, v in doc["norm"]["ranges"].items()},
        scope=doc["norm"]["scope"],
    )
    return clip, norm


@dataclass
class Patch:
    """A C x P x P crop of a parent image, addressed by its top-left pixel."""

    data: np.ndarray
    origin: tuple[int, int]
    patient_id: str = ""

    @property
    def size(self) -> int:
        return self.data.shape[-1]


@dataclass
class PairedPatch:
    """A low/high-resolution training pair at super-resolution factor k.

    ``lr.data`` is exactly the k x k block average of ``hr.data`` restricted
    to its top-left k*floor(P/k) square.
    """

    lr: Patch
    hr: Patch
    k: int

    @classmethod
    def from_hr(cls, hr: Patch, k: int) -> "PairedPatch":
        lr_data = block_average_array(hr.data, k)
        lr = Patch(data=lr_data, origin=hr.origin, patient_id=hr.patient_id)
        return cls(lr=lr, hr=hr, k=k)

    def validate(self, tol: float = 1e-6) -> None:
        expected = block_average_array(self.hr.data, self.k)
        if expected.shape != self.lr.data.shape:
            raise ValueError(f"lr shape {self.lr.data.shape} != block-averaged {expected.shape}")
        err = float(np.max(np.abs(expected - self.lr.data)))
        if err > tol:
            raise ValueError(f"lr is not the block average of hr (max abs err {err:.3g})")


def block_average_array(data: np.ndarray, k: int) -> np.ndarray:
    """k x k block-average the trailing two axes over the largest
    k-divisible top-left region."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    h, w = data.shape[-2], data.shape[-1]
    if k > h or k > w:
        raise ValueError(f"k={k} exceeds image dimensions {h}x{w}")
    oh, ow = h // k, w // k
    cropped = data[..., : oh * k, : ow * k]
    shaped = cropped.reshape(*data.shape[:-2], oh, k, ow, k)
    # float64 accumulation keeps the mean within 1e-6 of the loop oracle
    return shaped.astype(np.float64).mean(axis=(-3, -1)).astype(data.dtype)


def block_average(image: FlimImage, k: int) -> FlimImage:
    """Degradation model: replace each k x k block with its mean, emulating
    a k-fold larger scanning pixel."""
    out = block_average_array(image.data, k)
    return image.with_data(out, pixel_size_um=image.pixel_size_um * k)


def nearest_rank_percentile(values: np.ndarray, q: float) -> float:
    """q-th percentile by the nearest-rank rule: the value at 1-based rank
    ceil(q/100 * n) of the sorted sample."""
    flat = np.sort(values, axis=None)
    n = flat.size
    if n == 0:
        raise ValueError("empty channel")
    rank = min(max(int(math.ceil(q / 100.0 * n)), 1), n)
    return float(flat[rank - 1])


def clip_percentile(
    lr: FlimImage, hr: FlimImage, q: float = 99.5
) -> tuple[FlimImage, FlimImage, ClipStats]:
    """Clip both images at the per-channel q-th percentile of the LR input."""
    if lr.channel_names != hr.channel_names:
        raise ValueError("lr and hr must share the same channel list")
    thresholds = {
        name: nearest_rank_percentile(lr.data[i], q) for i, name in enumerate(lr.channel_names)
    }
    stats = ClipStats(q=q, thresholds=thresholds)
    return stats.apply(lr), stats.apply(hr), stats


def minmax_normalize(lr: FlimImage, hr: FlimImage) -> tuple[FlimImage, FlimImage, NormStats]:
    """Affine-map both images by the per-channel (min, max) of the LR input.

    LR values land exactly in [0, 1]; HR values are clamped to [0, 1].
    Degenerate constant channels map to all zeros.
    """
    if lr.channel_names != hr.channel_names:
        raise ValueError("lr and hr must share the same channel list")
    ranges = {
        name: (float(lr.data[i].min()), float(lr.data[i].max()))
        for i, name in enumerate(lr.channel_names)
    }
    stats = NormStats(ranges=ranges)
    return stats.apply(lr), stats.apply(hr, clamp=True), stats


def preprocess_pair(
    lr: FlimImage, hr: FlimImage, q: float = 99.5
) -> tuple[FlimImage, FlimImage, ClipStats, NormStats]:
    """Full preprocessing contract: clip at the LR q-th percentile, then
    min-max normalize with LR statistics."""
    lr_c, hr_c, clip_stats = clip_percentile(lr, hr, q)
    lr_n, hr_n, norm_stats = minmax_normalize(lr_c, hr_c)
    return lr_n, hr_n, clip_stats, norm_stats


def tile_patches(image: FlimImage, patch_px: int = 256, patient_id: str = "") -> list[Patch]:
    """Non-overlapping grid tiling from the top-left corner; partial edge
    tiles are discarded."""
    c, h, w = image.data.shape
    if patch_px > h or patch_px > w:
        raise ValueError(f"image {h}x{w} smaller than one {patch_px}px patch")
    patches = []
    for r in range(0, h - patch_px + 1, patch_px):
        for col in range(0, w - patch_px + 1, patch_px):
            patches.append(
                Patch(
                    data=image.data[:, r : r + patch_px, col : col + patch_px].copy(),
                    origin=(r, col),
                    patient_id=patient_id,
                )
            )
    return patches


def _axis_weights(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Half-pixel center alignment: output center i+0.5 maps to source
    # coordinate (i+0.5)*n_in/n_out - 0.5, clamped to the valid range.
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def bilinear_resize_array(data: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable bilinear interpolation with half-pixel center alignment."""
    if out_h < 1 or out_w < 1:
        raise ValueError("output dimensions must be >= 1")
    work = data.astype(np.float64)
    r0, r1, wr = _axis_weights(data.shape[-2], out_h)
    work = work[..., r0, :] * (1.0 - wr)[:, None] + work[..., r1, :] * wr[:, None]
    c0, c1, wc = _axis_weights(data.shape[-1], out_w)
    work = work[..., c0] * (1.0 - wc) + work[..., c1] * wc
    return work.astype(data.dtype)


def bilinear_resize(image: FlimImage, out_h: int, out_w: int) -> FlimImage:
    """Resize an image; constant inputs map to constant outputs."""
    out = bilinear_resize_array(image.data, out_h, out_w)
    scale = image.data.shape[-2] / out_h
    return image.with_data(out, pixel_size_um=image.pixel_size_um * scale)
