"""On-disk dataset conventions shared by the CLI subcommands.

A dataset directory holds one subdirectory per patient with FLIMB files
inside.  The degrade step writes, per field of view, ``<stem>.lr.flimb``
(block-averaged + preprocessed), ``<stem>.hr.flimb`` (preprocessed target)
and ``<stem>.stats.json`` (the LR-derived clip/normalize statistics).
"""

from __future__ import annotations

from pathlib import Path

from .flimb import FlimImage, read_flimb, write_flimb
from .phantom import PatientRecord
from .preprocess import PairedPatch, block_average, preprocess_pair, tile_patches


def save_patient_records(records: list[PatientRecord], out_dir: str | Path) -> list[Path]:
    """One directory per patient, ``fov_<i>.flimb`` per field of view."""
    out = Path(out_dir)
    written = []
    for record in records:
        patient_dir = out / record.patient_id
        patient_dir.mkdir(parents=True, exist_ok=True)
        for i, image in enumerate(record.images):
            path = patient_dir / f"fov_{i}.flimb"
            write_flimb(image, path)
            written.append(path)
    return written


def patient_dirs(dataset_dir: str | Path) -> list[Path]:
    root = Path(dataset_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset directory {root} does not exist")
    dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not dirs:
        raise FileNotFoundError(f"no patient directories under {root}")
    return dirs


def degrade_dataset(
    in_dir: str | Path, out_dir: str | Path, k: int, q: float = 99.5
) -> list[Path]:
    """Block-average, clip, and normalize every field of view.

    Returns the list of stats sidecar paths (one per image pair).
    """
    out = Path(out_dir)
    stats_paths = []
    for patient in patient_dirs(in_dir):
        target_dir = out / patient.name
        target_dir.mkdir(parents=True, exist_ok=True)
        for fov in sorted(patient.glob("*.flimb")):
            hr = read_flimb(fov)
            lr = block_average(hr, k)
            lr_n, hr_n, clip_stats, norm_stats = preprocess_pair(lr, hr, q)
            stem = fov.stem
            write_flimb(lr_n, target_dir / f"{stem}.lr.flimb")
            write_flimb(hr_n, target_dir / f"{stem}.hr.flimb")
            stats_path = target_dir / f"{stem}.stats.json"
            from .preprocess import save_stats

            save_stats(stats_path, clip_stats, norm_stats)
            stats_paths.append(stats_path)
    if not stats_paths:
        raise FileNotFoundError(f"no .flimb fields of view under {in_dir}")
    return stats_paths


def load_training_pairs(
    degraded_dir: str | Path,
    k: int,
    patch_px: int = 256,
    patients: set[str] | None = None,
) -> list[PairedPatch]:
    """Tile the preprocessed HR images and pair each tile with its block
    average."""
    pairs = []
    for patient in patient_dirs(degraded_dir):
        if patients is not None and patient.name not in patients:
            continue
        for hr_path in sorted(patient.glob("*.hr.flimb")):
            hr = read_flimb(hr_path)
            for patch in tile_patches(hr, patch_px, patient_id=patient.name):
                pairs.append(PairedPatch.from_hr(patch, k))
    if not pairs:
        raise FileNotFoundError(f"no high-resolution patches found in {degraded_dir}")
    return pairs


def iter_lr_images(
    degraded_dir: str | Path, patients: set[str] | None = None
) -> list[tuple[str, Path, FlimImage]]:
    """(pair id, path, image) for every preprocessed LR field of view."""
    entries = []
    for patient in patient_dirs(degraded_dir):
        if patients is not None and patient.name not in patients:
            continue
        for lr_path in sorted(patient.glob("*.lr.flimb")):
            stem = lr_path.name[: -len(".lr.flimb")]
            entries.append((f"{patient.name}/{stem}", lr_path, read_flimb(lr_path)))
    if not entries:
        raise FileNotFoundError(f"no .lr.flimb images found in {degraded_dir}")
    return entries


def _strip_markers(name: str) -> str:
    for marker in (".hr.flimb", ".lr.flimb", ".flimb"):
        if name.endswith(marker):
            return name[: -len(marker)]
    return name


def collect_eval_pairs(
    pred_dir: str | Path, target_dir: str | Path
) -> tuple[list[FlimImage], list[FlimImage], list[str]]:
    """Match predictions to targets by patient/stem; targets may carry the
    ``.hr`` marker."""
    pred_root, target_root = Path(pred_dir), Path(target_dir)
    targets = {}
    for path in sorted(target_root.rglob("*.flimb")):
        if path.name.endswith(".lr.flimb"):
            continue
        rel = path.relative_to(target_root)
        key = str(rel.parent / _strip_markers(rel.name))
        targets[key] = path
    preds, target_imgs, ids = [], [], []
    for path in sorted(pred_root.rglob("*.flimb")):
        rel = path.relative_to(pred_root)
        key = str(rel.parent / _strip_markers(rel.name))
        if key not in targets:
            raise FileNotFoundError(f"no target for prediction {rel} (looked for {key})")
        preds.append(read_flimb(path))
        target_imgs.append(read_flimb(targets[key]))
        ids.append(key)
    if not preds:
        raise FileNotFoundError(f"no predictions under {pred_dir}")
    return preds, target_imgs, ids
