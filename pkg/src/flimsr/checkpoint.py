"""Versioned binary checkpoints: named float32 parameter slices plus a JSON
sidecar carrying architecture constants and run provenance.

Layout (little-endian):

    bytes 0..3  magic "FLCK"
    byte  4     version, u8 = 1
    bytes 5..8  entry count, u32
    per entry:  u16 name length, UTF-8 name, u8 ndim, ndim x u32 dims,
                then prod(dims) f32 values

The sidecar lives at ``<path>.json`` and records at least ``kind`` and the
architecture config; training code adds k, alpha, seed, and the
preprocessing-statistics reference.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .networks import (
    Discriminator,
    DiscriminatorConfig,
    Generator,
    GeneratorConfig,
    UNet,
)

MAGIC = b"FLCK"
VERSION = 1


class CheckpointError(Exception):
    pass


def sidecar_path(path: str | Path) -> Path:
    return Path(str(path) + ".json")


def save_checkpoint(path: str | Path, module: nn.Module, meta: dict) -> None:
    """Write all floating-point parameters and buffers plus the sidecar."""
    entries = [
        (name, tensor)
        for name, tensor in module.state_dict().items()
        if tensor.is_floating_point()
    ]
    parts = [MAGIC, struct.pack("<B", VERSION), struct.pack("<I", len(entries))]
    for name, tensor in entries:
        raw_name = name.encode("utf-8")
        arr = tensor.detach().cpu().numpy().astype("<f4")
        parts.append(struct.pack("<H", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{max(arr.ndim, 0)}I", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read back named slices and the sidecar document."""
    raw = Path(path).read_bytes()
    if len(raw) < 9 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a flimsr checkpoint")
    if raw[4] != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {raw[4]}")
    (count,) = struct.unpack_from("<I", raw, 5)
    offset = 9
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        name = raw[offset : offset + name_len].decode("utf-8")
        offset += name_len
        ndim = raw[offset]
        offset += 1
        dims = struct.unpack_from(f"<{ndim}I", raw, offset)
        offset += 4 * ndim
        n = int(np.prod(dims)) if ndim else 1
        arrays[name] = np.frombuffer(raw, dtype="<f4", count=n, offset=offset).reshape(dims).copy()
        offset += 4 * n
    if offset != len(raw):
        raise CheckpointError(f"{path}: trailing bytes after parameter table")
    meta_file = sidecar_path(path)
    if not meta_file.exists():
        raise CheckpointError(f"{path}: missing sidecar {meta_file}")
    return arrays, json.loads(meta_file.read_text())


def restore_state(module: nn.Module, arrays: dict[str, np.ndarray]) -> None:
    """Copy named slices into a freshly built module."""
    state = module.state_dict()
    missing = [k for k, v in state.items() if v.is_floating_point() and k not in arrays]
    if missing:
        raise CheckpointError(f"checkpoint lacks parameters: {missing[:5]}")
    for name, arr in arrays.items():
        if name not in state:
            raise CheckpointError(f"unexpected parameter {name!r} in checkpoint")
        if tuple(state[name].shape) != arr.shape:
            raise CheckpointError(
                f"shape mismatch for {name}: module {tuple(state[name].shape)}, file {arr.shape}"
            )
        with torch.no_grad():
            state[name].copy_(torch.from_numpy(arr))


def generator_meta(config: GeneratorConfig, **extra) -> dict:
    return {"kind": "generator", "arch": asdict(config), **extra}


def discriminator_meta(config: DiscriminatorConfig, **extra) -> dict:
    return {"kind": "discriminator", "arch": asdict(config), **extra}


def denoiser_meta(config: GeneratorConfig, **extra) -> dict:
    return {"kind": "bbdm_denoiser", "arch": asdict(config), **extra}


def load_model(path: str | Path) -> tuple[nn.Module, dict]:
    """Rebuild the module described by a checkpoint's sidecar."""
    arrays, meta = load_checkpoint(path)
    kind = meta.get("kind")
    if kind == "generator":
        module: nn.Module = Generator(GeneratorConfig(**meta["arch"]))
    elif kind == "discriminator":
        module = Discriminator(DiscriminatorConfig(**meta["arch"]))
    elif kind == "bbdm_denoiser":
        module = UNet(GeneratorConfig(**meta["arch"]))
    else:
        raise CheckpointError(f"{path}: unknown checkpoint kind {kind!r}")
    restore_state(module, arrays)
    module.eval()
    return module, meta
