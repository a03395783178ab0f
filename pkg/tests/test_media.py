from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crvqa.media import (
    MediaFormatError, VideoClip, parse_y4m, read_archive, read_pgm, read_raw_i420, sample_frames_uniform,
    to_float, to_uint8, write_archive, write_pgm, write_raw_i420, write_y4m,
)


def _clip(rng, n=3, h=6, w=10):
    luma = rng.integers(0, 256, (n, h, w), dtype=np.uint8)
    u = rng.integers(0, 256, (n, (h + 1) // 2, (w + 1) // 2), dtype=np.uint8)
    v = rng.integers(0, 256, u.shape, dtype=np.uint8)
    return VideoClip(luma, fps=Fraction(30000, 1001), chroma_u=u, chroma_v=v)


def test_y4m_round_trip(rng):
    clip = _clip(rng)
    back = parse_y4m(write_y4m(clip))
    assert back.fps == Fraction(30000, 1001)
    np.testing.assert_array_equal(back.luma, clip.luma)
    np.testing.assert_array_equal(back.chroma_u, clip.chroma_u)
    np.testing.assert_array_equal(back.chroma_v, clip.chroma_v)


def test_y4m_odd_geometry(rng):
    clip = _clip(rng, n=2, h=5, w=7)
    back = parse_y4m(write_y4m(clip))
    assert back.chroma_u.shape == (2, 3, 4)


def test_y4m_hand_built_stream():
    payload = bytes(range(4)) + b"\x80\x81"
    data = b"YUV4MPEG2 W2 H2 F25:1 Ip A1:1 C420jpeg\nFRAME\n" + payload
    clip = parse_y4m(data)
    assert clip.n_frames == 1 and clip.fps == 25
    np.testing.assert_array_equal(clip.luma[0], [[0, 1], [2, 3]])
    assert clip.chroma_u[0, 0, 0] == 0x80 and clip.chroma_v[0, 0, 0] == 0x81


def test_y4m_truncated_frame_reports_offset(rng):
    data = write_y4m(_clip(rng))
    with pytest.raises(MediaFormatError) as err:
        parse_y4m(data[:-5])
    assert err.value.offset is not None


@pytest.mark.parametrize("header", [b"YUV4MPEG2 W4 H4 F30:1 C444\n", b"YUV4MPEG2 W4 H4 F30:1 C420p10\n"])
def test_y4m_rejects_unsupported_colorspace(header):
    with pytest.raises(MediaFormatError):
        parse_y4m(header + b"FRAME\n" + bytes(48 * 2))


def test_y4m_bad_signature():
    with pytest.raises(MediaFormatError):
        parse_y4m(b"RIFF....")


def test_raw_i420_round_trip(rng):
    clip = _clip(rng, n=4)
    data = write_raw_i420(clip)
    back = read_raw_i420(data, clip.width, clip.height)
    np.testing.assert_array_equal(back.luma, clip.luma)
    with pytest.raises(MediaFormatError):
        read_raw_i420(data[:-1], clip.width, clip.height)


def test_pgm_round_trip_and_comments(rng):
    plane = rng.integers(0, 256, (7, 9), dtype=np.uint8)
    np.testing.assert_array_equal(read_pgm(write_pgm(plane)), plane)
    data = b"P5\n# made by hand\n9 7\n255\n" + plane.tobytes()
    np.testing.assert_array_equal(read_pgm(data), plane)


def test_pgm_rejects_ascii_and_16bit():
    with pytest.raises(MediaFormatError, match="P2"):
        read_pgm(b"P2\n2 2\n255\n0 0 0 0\n")
    with pytest.raises(MediaFormatError, match="maxval"):
        read_pgm(b"P5\n2 2\n65535\n" + bytes(8))
    with pytest.raises(MediaFormatError, match="truncated"):
        read_pgm(b"P5\n4 4\n255\n" + bytes(3))


def test_float_conversion():
    assert to_float(np.array([0, 255], np.uint8)).tolist() == [0.0, 1.0]
    assert to_uint8(np.array([-0.5, 0.5, 2.0])).tolist() == [0, 128, 255]


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 500), st.data())
def test_uniform_sampling(total, data):
    count = data.draw(st.integers(1, total))
    idx = sample_frames_uniform(total, count)
    assert len(idx) == count and idx[0] == 0
    assert all(b > a for a, b in zip(idx, idx[1:]))
    assert idx == [k * total // count for k in range(count)]


def test_sampling_rejects_too_many():
    with pytest.raises(ValueError):
        sample_frames_uniform(3, 4)


def test_head_seconds(rng):
    clip = VideoClip(np.zeros((90, 2, 2), np.uint8), fps=30)
    assert clip.head(2).n_frames == 60
    assert clip.head(10).n_frames == 90


def test_archive_round_trip(rng):
    entries = {"a": rng.standard_normal((2, 3)), "scalar": np.float32(3.5), "b/c": np.arange(5)}
    back = read_archive(write_archive(entries))
    assert list(back) == ["a", "scalar", "b/c"]
    np.testing.assert_array_equal(back["a"], entries["a"].astype(np.float32))
    assert back["scalar"].shape == ()


def test_archive_errors(rng):
    data = write_archive({"x": np.ones(4)})
    with pytest.raises(MediaFormatError, match="magic"):
        read_archive(b"XXXX" + data[4:])
    with pytest.raises(MediaFormatError, match="version"):
        read_archive(data[:4] + b"\x02" + data[5:])
    with pytest.raises(MediaFormatError, match="length"):
        read_archive(data[:-2])
    with pytest.raises(MediaFormatError, match="trailing"):
        read_archive(data + b"\x00")
