"""FLIMB container round-trips and failure modes."""

import numpy as np
import pytest

from flimsr.flimb import (
    DEFAULT_CHANNEL_NAMES,
    ChannelDesc,
    FlimbError,
    FlimImage,
    channel_kind,
    header_size,
    read_flimb,
    write_flimb,
)


def _random_image(rng, h=4, w=5):
    return FlimImage(data=rng.random((6, h, w), dtype=np.float32), pixel_size_um=7.5)


def test_round_trip_identity(tmp_path):
    rng = np.random.default_rng(0)
    for i in range(5):
        img = _random_image(rng, h=3 + i, w=2 + 2 * i)
        path = tmp_path / f"img_{i}.flimb"
        write_flimb(img, path)
        back = read_flimb(path)
        assert back.channel_names == list(DEFAULT_CHANNEL_NAMES)
        assert back.pixel_size_um == np.float32(7.5)
        np.testing.assert_array_equal(back.data, img.data)


def test_file_size_matches_format(tmp_path):
    img = FlimImage(data=np.zeros((6, 2, 2), dtype=np.float32))
    path = tmp_path / "tiny.flimb"
    write_flimb(img, path)
    # header: magic(4) + version(1) + pixel_size(4) + dims(12) + names
    expected_header = 4 + 1 + 4 + 12 + sum(1 + len(n) for n in DEFAULT_CHANNEL_NAMES)
    assert header_size(DEFAULT_CHANNEL_NAMES) == expected_header
    assert path.stat().st_size == expected_header + 6 * 2 * 2 * 4


def test_nan_refused(tmp_path):
    data = np.zeros((6, 2, 2), dtype=np.float32)
    data[0, 0, 0] = np.nan
    img = FlimImage(data=data)
    with pytest.raises(FlimbError, match="non-finite"):
        write_flimb(img, tmp_path / "bad.flimb")


def test_bad_magic(tmp_path):
    path = tmp_path / "junk.flimb"
    path.write_bytes(b"JUNK" + b"\x00" * 64)
    with pytest.raises(FlimbError, match="not a FLIMB file"):
        read_flimb(path)


def test_unsupported_version(tmp_path):
    img = FlimImage(data=np.zeros((6, 2, 2), dtype=np.float32))
    path = tmp_path / "v9.flimb"
    write_flimb(img, path)
    raw = bytearray(path.read_bytes())
    raw[4] = 9
    path.write_bytes(bytes(raw))
    with pytest.raises(FlimbError, match="version 9"):
        read_flimb(path)


def test_truncated_payload(tmp_path):
    img = FlimImage(data=np.zeros((6, 4, 4), dtype=np.float32))
    path = tmp_path / "trunc.flimb"
    write_flimb(img, path)
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) - 40])
    with pytest.raises(FlimbError, match="truncated"):
        read_flimb(path)


def test_channel_helpers():
    assert channel_kind("LT2") == "lifetime"
    assert channel_kind("INT3") == "intensity"
    with pytest.raises(ValueError):
        channel_kind("FOO")
    img = FlimImage(data=np.arange(24, dtype=np.float32).reshape(6, 2, 2))
    np.testing.assert_array_equal(img.channel("LT1"), img.data[0])
    np.testing.assert_array_equal(img.channel("INT3"), img.data[5])
    with pytest.raises(KeyError):
        img.channel("LT9")
    assert img.channel_indices("lifetime") == [0, 2, 4]


def test_single_channel_subset_allowed():
    img = FlimImage(
        data=np.zeros((1, 4, 4), dtype=np.float32),
        channels=[ChannelDesc.from_name("LT2")],
    )
    assert img.channel_names == ["LT2"]


def test_channel_count_mismatch_rejected():
    with pytest.raises(FlimbError):
        FlimImage(data=np.zeros((3, 2, 2), dtype=np.float32))
