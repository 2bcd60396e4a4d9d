"""Synthetic tissue phantoms and the patient-wise dataset split.

Phantoms substitute for patient whole-slide data at desk scale.  Each field
of view is assembled from seeded Gaussian-blob mixtures, sinusoidal
filaments, and smoothed random boundaries thresholded into regions with
per-region offsets, then low-pass filtered so the spectrum is band-limited
at the finest structure scale.  Lifetime and intensity channels of the same
spectral band are driven by a shared structure field, so their edges
coincide; a small independent component keeps the channels from being
affine copies of each other.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .flimb import DEFAULT_CHANNEL_NAMES, HR_PIXEL_SIZE_UM, ChannelDesc, FlimImage


@dataclass
class PatientRecord:
    """All fields of view belonging to one (synthetic) patient."""

    patient_id: str
    images: list[FlimImage] = field(default_factory=list)


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint train/test partition of patient ids."""

    train_ids: frozenset[str]
    test_ids: frozenset[str]
    seed: int

    def __post_init__(self) -> None:
        if self.train_ids & self.test_ids:
            raise ValueError("train and test ids overlap")


@dataclass
class PhantomSpec:
    """Parameters of the synthetic phantom generator.

    ``structure_scales`` are feature sizes in pixels (finest first or in any
    order); ``cross_channel_correlation`` sets how strongly lifetime and
    intensity channels of one band share structure.
    """

    n_patients: int = 4
    fovs_per_patient: int = 2
    fov_size: int = 256
    lifetime_range: tuple[float, float] = (0.0, 10.0)
    structure_scales: tuple[float, ...] = (4.0, 12.0, 32.0)
    cross_channel_correlation: float = 0.6

    def validate(self) -> None:
        if self.n_patients < 1 or self.fovs_per_patient < 1:
            raise ValueError("n_patients and fovs_per_patient must be positive")
        if self.fov_size < 64:
            raise ValueError(f"fov_size must be >= 64, got {self.fov_size}")
        lo, hi = self.lifetime_range
        if not lo < hi:
            raise ValueError(f"lifetime_range min must be < max, got {self.lifetime_range}")
        if not self.structure_scales or any(s <= 0 for s in self.structure_scales):
            raise ValueError("structure_scales must be positive")
        if not 0.0 <= self.cross_channel_correlation <= 1.0:
            raise ValueError("cross_channel_correlation must lie in [0, 1]")


def split_patients(patient_ids: list[str], train_count: int, seed: int) -> DatasetSplit:
    """Deterministic patient-wise split via a seeded shuffle.

    Ids are sorted before shuffling, so the result depends only on the set
    of ids, the train count, and the seed.
    """
    ids = sorted(patient_ids)
    if len(set(ids)) != len(ids):
        raise ValueError("patient ids must be unique")
    if not 0 < train_count < len(ids):
        raise ValueError(f"train_count must be in (0, {len(ids)}), got {train_count}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    shuffled = [ids[i] for i in order]
    return DatasetSplit(
        train_ids=frozenset(shuffled[:train_count]),
        test_ids=frozenset(shuffled[train_count:]),
        seed=seed,
    )


def _gaussian_lowpass(img: np.ndarray, sigma: float) -> np.ndarray:
    """Periodic Gaussian blur via the DFT transfer function."""
    if sigma <= 0:
        return img
    h, w = img.shape
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    transfer = np.exp(-2.0 * np.pi**2 * sigma**2 * (fy**2 + fx**2))
    return np.fft.ifft2(np.fft.fft2(img) * transfer).real


def _blob_field(rng: np.random.Generator, size: int, scales: tuple[float, ...]) -> np.ndarray:
    """Sum of signed Gaussian blobs at every structure scale."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    out = np.zeros((size, size))
    for scale in scales:
        n_blobs = max(3, int(round(size / scale)))
        sigma = scale / 2.0
        for _ in range(n_blobs):
            cy, cx = rng.uniform(0, size, size=2)
            amp = rng.uniform(0.4, 1.0) * rng.choice((-1.0, 1.0))
            out += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma**2))
    return out


def _filament_field(rng: np.random.Generator, size: int, scale: float) -> np.ndarray:
    """A few sinusoidal ridges of width ~scale, randomly oriented."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    out = np.zeros((size, size))
    for _ in range(2):
        offset = rng.uniform(0.2, 0.8) * size
        amp = rng.uniform(0.05, 0.15) * size
        wavelength = rng.uniform(0.5, 1.0) * size
        phase = rng.uniform(0, 2 * np.pi)
        width = max(1.0, scale / 2.0)
        center = offset + amp * np.sin(2 * np.pi * xx / wavelength + phase)
        ridge = rng.uniform(0.5, 1.0) * np.exp(-((yy - center) ** 2) / (2.0 * width**2))
        out += ridge.T if rng.random() < 0.5 else ridge
    return out


def _region_field(rng: np.random.Generator, size: int, scale: float) -> np.ndarray:
    """Smoothed noise thresholded into three regions with random offsets."""
    noise = _gaussian_lowpass(rng.standard_normal((size, size)), scale)
    lo, hi = np.quantile(noise, [1.0 / 3.0, 2.0 / 3.0])
    regions = (noise > lo).astype(np.float64) + (noise > hi)
    offsets = rng.uniform(-1.0, 1.0, size=3)
    return offsets[regions.astype(np.intp)]


def _normalize01(img: np.ndarray) -> np.ndarray:
    lo, hi = img.min(), img.max()
    if hi - lo < 1e-12:
        return np.zeros_like(img)
    return (img - lo) / (hi - lo)


def _structure_field(rng: np.random.Generator, spec: PhantomSpec) -> np.ndarray:
    """One band-limited multi-scale structure field in [0, 1]."""
    size = spec.fov_size
    scales = spec.structure_scales
    finest = min(scales)
    coarsest = max(scales)
    mid = sorted(scales)[len(scales) // 2]
    field = (
        _blob_field(rng, size, scales)
        + 1.5 * _region_field(rng, size, coarsest)
        + _filament_field(rng, size, mid)
    )
    # Final low-pass keeps spectral power above ~1/(4*finest) cycles/px
    # negligible while leaving transitions sharp at the finest scale.
    field = _gaussian_lowpass(field, 0.75 * finest)
    return _normalize01(field)


def _fov_rng(seed: int, patient: int, fov: int) -> np.random.Generator:
    # Counter scheme: one child stream per (root seed, patient, fov).
    return np.random.default_rng(np.random.SeedSequence([seed, patient, fov]))


def _render_fov(rng: np.random.Generator, spec: PhantomSpec) -> FlimImage:
    size = spec.fov_size
    ns_min, ns_max = spec.lifetime_range
    finest = min(spec.structure_scales)
    # Weight of the shared structure inside each channel; the remainder is
    # channel-private detail.  Private weight shrinks as the requested
    # cross-channel correlation grows.
    private = 0.35 * (1.0 - spec.cross_channel_correlation)
    shared = 1.0 - private

    base = _structure_field(rng, spec)
    planes = []
    for _band in range(3):
        band_struct = _normalize01(0.6 * base + 0.4 * _structure_field(rng, spec))
        for kind in ("lifetime", "intensity"):
            detail = _gaussian_lowpass(rng.standard_normal((size, size)), 0.75 * finest)
            detail = _normalize01(detail)
            gain = rng.uniform(0.7, 1.0)
            offset = rng.uniform(0.0, 0.15)
            plane = np.clip(offset + gain * (shared * band_struct + private * detail), 0.0, 1.0)
            if kind == "lifetime":
                plane = ns_min + (ns_max - ns_min) * plane
            else:
                plane = rng.uniform(50.0, 200.0) * plane
            planes.append(plane)
    # planes were appended as (LT, INT) per band -> already LT1,INT1,LT2,...
    data = np.stack(planes).astype(np.float32)
    channels = [ChannelDesc.from_name(n) for n in DEFAULT_CHANNEL_NAMES]
    return FlimImage(data=data, channels=channels, pixel_size_um=HR_PIXEL_SIZE_UM)


def generate_phantom(spec: PhantomSpec, seed: int) -> list[PatientRecord]:
    """Generate ``spec.n_patients`` records of ``spec.fovs_per_patient`` FOVs.

    Deterministic for fixed (spec, seed): every FOV draws from its own
    child stream keyed by (seed, patient index, fov index).
    """
    spec.validate()
    records = []
    for p in range(spec.n_patients):
        images = [
            _render_fov(_fov_rng(seed, p, f), spec) for f in range(spec.fovs_per_patient)
        ]
        records.append(PatientRecord(patient_id=f"p{p:02d}", images=images))
    return records
