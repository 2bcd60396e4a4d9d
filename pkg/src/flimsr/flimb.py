"""Six-channel FLIM image container and the FLIMB v1 binary format.

FLIMB v1 layout (all multi-byte fields little-endian):

    bytes 0..3   magic "FLIM" (0x46 0x4C 0x49 0x4D)
    byte  4      version, u8 = 1
    bytes 5..8   pixel_size_um, f32
    bytes 9..20  C, H, W, three u32
    then C channel entries: u8 name length + ASCII name
    then C*H*W f32 values, channel-major, row-major

The payload is float32 little-endian so a written file round-trips
bit-exactly on any platform.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"FLIM"
VERSION = 1

# Canonical channel order for a full six-channel field of view.
DEFAULT_CHANNEL_NAMES = ("LT1", "INT1", "LT2", "INT2", "LT3", "INT3")
LIFETIME_CHANNELS = ("LT1", "LT2", "LT3")
INTENSITY_CHANNELS = ("INT1", "INT2", "INT3")

# High-resolution scanning pixel pitch of the acquisition system.
HR_PIXEL_SIZE_UM = 7.5


class FlimbError(Exception):
    """Raised for malformed FLIMB files or invalid image data."""


def channel_kind(name: str) -> str:
    """Classify a channel as 'lifetime' or 'intensity' from its name."""
    if name.startswith("LT"):
        return "lifetime"
    if name.startswith("INT"):
        return "intensity"
    raise ValueError(f"cannot infer channel kind from name {name!r}")


@dataclass(frozen=True)
class ChannelDesc:
    """Name plus modality of one image channel."""

    name: str
    kind: str

    @classmethod
    def from_name(cls, name: str) -> "ChannelDesc":
        return cls(name=name, kind=channel_kind(name))


@dataclass
class FlimImage:
    """A C x H x W float32 raster with per-channel metadata.

    ``data[c]`` holds channel ``channels[c]``; lifetime channels are in
    nanoseconds before normalization, intensity channels in arbitrary
    units.  Instances are treated as immutable after construction.
    """

    data: np.ndarray
    channels: list[ChannelDesc] = field(default_factory=list)
    pixel_size_um: float = HR_PIXEL_SIZE_UM

    def __post_init__(self) -> None:
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 3:
            raise FlimbError(f"data must be C x H x W, got shape {self.data.shape}")
        if not self.channels:
            if self.data.shape[0] == len(DEFAULT_CHANNEL_NAMES):
                self.channels = [ChannelDesc.from_name(n) for n in DEFAULT_CHANNEL_NAMES]
            else:
                raise FlimbError(
                    f"channel descriptors required for C={self.data.shape[0]} (default order is 6-channel)"
                )
        if len(self.channels) != self.data.shape[0]:
            raise FlimbError(
                f"{len(self.channels)} channel descriptors for {self.data.shape[0]} data channels"
            )

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def channel_names(self) -> list[str]:
        return [c.name for c in self.channels]

    def channel(self, name: str) -> np.ndarray:
        """Return the H x W plane of the named channel."""
        try:
            idx = self.channel_names.index(name)
        except ValueError:
            raise KeyError(f"no channel named {name!r}; have {self.channel_names}") from None
        return self.data[idx]

    def channel_indices(self, kind: str) -> list[int]:
        return [i for i, c in enumerate(self.channels) if c.kind == kind]

    def with_data(self, data: np.ndarray, pixel_size_um: float | None = None) -> "FlimImage":
        """New image sharing channel metadata but carrying different data."""
        return FlimImage(
            data=data,
            channels=list(self.channels),
            pixel_size_um=self.pixel_size_um if pixel_size_um is None else pixel_size_um,
        )

    def validate(self) -> None:
        if not np.all(np.isfinite(self.data)):
            raise FlimbError("non-finite data")


def header_size(channel_names: list[str] | tuple[str, ...]) -> int:
    """Byte length of a FLIMB header for the given channel names."""
    return 4 + 1 + 4 + 12 + sum(1 + len(n) for n in channel_names)


def write_flimb(image: FlimImage, path: str | Path) -> None:
    """Serialize an image to FLIMB v1.  Refuses non-finite data."""
    image.validate()
    c, h, w = image.data.shape
    parts = [MAGIC, struct.pack("<B", VERSION), struct.pack("<f", float(image.pixel_size_um))]
    parts.append(struct.pack("<III", c, h, w))
    for desc in image.channels:
        name = desc.name.encode("ascii")
        if not 0 < len(name) < 256:
            raise FlimbError(f"channel name {desc.name!r} not encodable in FLIMB")
        parts.append(struct.pack("<B", len(name)))
        parts.append(name)
    parts.append(image.data.astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_flimb(path: str | Path) -> FlimImage:
    """Parse a FLIMB v1 file, validating magic, version and payload size."""
    raw = Path(path).read_bytes()
    if len(raw) < 21 or raw[:4] != MAGIC:
        raise FlimbError(f"{path}: not a FLIMB file")
    version = raw[4]
    if version != VERSION:
        raise FlimbError(f"{path}: unsupported FLIMB version {version}")
    (pixel_size,) = struct.unpack_from("<f", raw, 5)
    c, h, w = struct.unpack_from("<III", raw, 9)
    if c == 0 or h == 0 or w == 0 or c > 1024:
        raise FlimbError(f"{path}: implausible dimensions C={c} H={h} W={w}")
    offset = 21
    names = []
    for _ in range(c):
        if offset >= len(raw):
            raise FlimbError(f"{path}: truncated channel table")
        n = raw[offset]
        offset += 1
        name = raw[offset : offset + n]
        if len(name) != n:
            raise FlimbError(f"{path}: truncated channel table")
        names.append(name.decode("ascii"))
        offset += n
    expected = c * h * w * 4
    payload = raw[offset:]
    if len(payload) < expected:
        raise FlimbError(
            f"{path}: truncated payload, header declares {expected} bytes, {len(payload)} present"
        )
    data = np.frombuffer(payload[:expected], dtype="<f4").reshape(c, h, w)
    channels = [ChannelDesc.from_name(n) for n in names]
    return FlimImage(data=data.copy(), channels=channels, pixel_size_um=pixel_size)
