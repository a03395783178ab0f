"""Video, image and tensor-archive I/O.

Planes are plain numpy arrays.  Ingested planes are ``uint8`` (8-bit
samples); the working form used by the metric and network code is
``float32`` in ``[0, 1]``.  Functions that accept a plane take either form
and convert with :func:`to_float` / :func:`to_8bit_scale`.

Only 8-bit 4:2:0 video is accepted.  Other colorspaces are rejected rather
than converted.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

__all__ = [
    "MediaFormatError",
    "VideoClip",
    "to_float",
    "to_uint8",
    "to_8bit_scale",
    "parse_y4m",
    "write_y4m",
    "read_raw_i420",
    "write_raw_i420",
    "read_pgm",
    "write_pgm",
    "sample_frames_uniform",
    "read_archive",
    "write_archive",
    "ARCHIVE_MAGIC",
    "ARCHIVE_VERSION",
]


class MediaFormatError(ValueError):
    """Malformed or unsupported media payload.

    ``offset`` is the byte position where parsing failed, or ``None`` when the
    error is not tied to a position.
    """

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)


# -- sample conversion -------------------------------------------------------

def to_float(plane):
    """8-bit samples to float32 in [0, 1] (``v / 255``).  Floats pass through."""
    plane = np.asarray(plane)
    if np.issubdtype(plane.dtype, np.integer):
        return plane.astype(np.float32) / np.float32(255.0)
    return plane.astype(np.float32, copy=False)


def to_uint8(plane):
    """Float plane in [0, 1] to 8-bit samples: ``round(clamp(v, 0, 1) * 255)``."""
    plane = np.asarray(plane)
    if plane.dtype == np.uint8:
        return plane
    if np.issubdtype(plane.dtype, np.integer):
        return np.clip(plane, 0, 255).astype(np.uint8)
    return np.rint(np.clip(plane.astype(np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def to_8bit_scale(plane):
    """Return a float64 copy of ``plane`` on the 0-255 scale.

    Integer arrays are taken as 8-bit samples, float arrays as working-form
    values in [0, 1].
    """
    plane = np.asarray(plane)
    if np.issubdtype(plane.dtype, np.integer):
        return plane.astype(np.float64)
    return plane.astype(np.float64) * 255.0


# -- video -------------------------------------------------------------------

@dataclass
class VideoClip:
    """Decoded planar video.

    ``luma`` has shape ``(frames, height, width)``; the optional chroma
    planes have shape ``(frames, ceil(height/2), ceil(width/2))``.
    """

    luma: np.ndarray
    fps: Fraction = Fraction(30)
    chroma_u: np.ndarray | None = None
    chroma_v: np.ndarray | None = None
    id: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.luma = np.asarray(self.luma)
        if self.luma.ndim == 2:
            self.luma = self.luma[None]
        if self.luma.ndim != 3 or self.luma.shape[0] < 1:
            raise ValueError("luma must have shape (frames, height, width) with >= 1 frame")
        self.fps = Fraction(self.fps).limit_denominator(1 << 20)
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        if (self.chroma_u is None) != (self.chroma_v is None):
            raise ValueError("chroma_u and chroma_v must be given together")
        if self.chroma_u is not None:
            self.chroma_u = np.asarray(self.chroma_u)
            self.chroma_v = np.asarray(self.chroma_v)
            expected = (self.n_frames, (self.height + 1) // 2, (self.width + 1) // 2)
            for plane in (self.chroma_u, self.chroma_v):
                if plane.shape != expected:
                    raise ValueError(f"chroma shape {plane.shape} != {expected} (4:2:0)")

    @property
    def n_frames(self):
        return self.luma.shape[0]

    @property
    def height(self):
        return self.luma.shape[1]

    @property
    def width(self):
        return self.luma.shape[2]

    @property
    def duration(self):
        """Duration in seconds."""
        return float(self.n_frames / self.fps)

    @property
    def has_chroma(self):
        return self.chroma_u is not None

    def frame(self, index):
        """Luma plane ``index`` in working form (float32, [0, 1])."""
        return to_float(self.luma[index])

    def chroma(self, index):
        """``(u, v)`` planes of frame ``index`` in working form, or ``None``."""
        if not self.has_chroma:
            return None
        return to_float(self.chroma_u[index]), to_float(self.chroma_v[index])

    def head(self, seconds):
        """First ``seconds`` of the clip (no-op if the clip is shorter)."""
        n = min(self.n_frames, max(1, int(Fraction(seconds) * self.fps)))
        return VideoClip(
            self.luma[:n],
            fps=self.fps,
            chroma_u=None if self.chroma_u is None else self.chroma_u[:n],
            chroma_v=None if self.chroma_v is None else self.chroma_v[:n],
            id=self.id,
            meta=dict(self.meta),
        )


_Y4M_SIGNATURE = b"YUV4MPEG2"
_Y4M_420 = {"420", "420jpeg", "420paldv", "420mpeg2"}


def _parse_y4m_header(line, offset):
    tokens = line.split(b" ")
    if tokens[0] != _Y4M_SIGNATURE:
        raise MediaFormatError("missing YUV4MPEG2 signature", 0)
    width = height = None
    fps = Fraction(30)
    colorspace = "420jpeg"
    pos = len(_Y4M_SIGNATURE) + 1
    for tok in tokens[1:]:
        if not tok:
            pos += 1
            continue
        key, value = chr(tok[0]), tok[1:].decode("ascii", "replace")
        try:
            if key == "W":
                width = int(value)
            elif key == "H":
                height = int(value)
            elif key == "F":
                num, den = value.split(":")
                fps = Fraction(int(num), int(den))
            elif key == "C":
                colorspace = value
        except (ValueError, ZeroDivisionError):
            raise MediaFormatError(f"malformed header field {tok!r}", offset + pos) from None
        pos += len(tok) + 1
    if width is None or height is None or width <= 0 or height <= 0:
        raise MediaFormatError("malformed header: missing or invalid W/H", offset)
    if colorspace not in _Y4M_420:
        raise MediaFormatError(f"unsupported colorspace C{colorspace} (only 8-bit 4:2:0)", offset)
    return width, height, fps


def parse_y4m(data, clip_id=""):
    """Decode a YUV4MPEG2 stream (8-bit 4:2:0 only) into a :class:`VideoClip`."""
    data = bytes(data)
    if not data.startswith(_Y4M_SIGNATURE):
        raise MediaFormatError("missing YUV4MPEG2 signature", 0)
    eol = data.find(b"\n")
    if eol < 0:
        raise MediaFormatError("malformed header: no terminating newline", len(data))
    width, height, fps = _parse_y4m_header(data[:eol], 0)
    cw, ch = (width + 1) // 2, (height + 1) // 2
    ysize, csize = width * height, cw * ch
    frame_size = ysize + 2 * csize

    ys, us, vs = [], [], []
    pos = eol + 1
    while pos < len(data):
        if not data.startswith(b"FRAME", pos):
            raise MediaFormatError("expected FRAME marker", pos)
        feol = data.find(b"\n", pos)
        if feol < 0:
            raise MediaFormatError("truncated frame header", pos)
        start = feol + 1
        if start + frame_size > len(data):
            raise MediaFormatError(
                f"truncated frame {len(ys)}: need {frame_size} bytes, have {len(data) - start}", start
            )
        buf = np.frombuffer(data, dtype=np.uint8, count=frame_size, offset=start)
        ys.append(buf[:ysize].reshape(height, width))
        us.append(buf[ysize:ysize + csize].reshape(ch, cw))
        vs.append(buf[ysize + csize:].reshape(ch, cw))
        pos = start + frame_size
    if not ys:
        raise MediaFormatError("stream contains no frames", pos)
    return VideoClip(np.stack(ys), fps=fps, chroma_u=np.stack(us), chroma_v=np.stack(vs), id=clip_id)


def write_y4m(clip):
    """Serialize a clip as YUV4MPEG2 (C420jpeg).  Missing chroma is written as 128."""
    luma = to_uint8(clip.luma)
    fps = Fraction(clip.fps)
    header = f"YUV4MPEG2 W{clip.width} H{clip.height} F{fps.numerator}:{fps.denominator} Ip A1:1 C420jpeg\n"
    cshape = ((clip.height + 1) // 2, (clip.width + 1) // 2)
    parts = [header.encode("ascii")]
    for i in range(clip.n_frames):
        parts.append(b"FRAME\n")
        parts.append(luma[i].tobytes())
        if clip.has_chroma:
            parts.append(to_uint8(clip.chroma_u[i]).tobytes())
            parts.append(to_uint8(clip.chroma_v[i]).tobytes())
        else:
            parts.append(np.full(cshape, 128, np.uint8).tobytes() * 2)
    return b"".join(parts)


def read_raw_i420(data, width, height, fps=30, clip_id=""):
    """Split a headerless I420 stream (Y, U, V per frame) into a clip."""
    data = bytes(data)
    cw, ch = (width + 1) // 2, (height + 1) // 2
    ysize, csize = width * height, cw * ch
    frame_size = ysize + 2 * csize
    if len(data) == 0 or len(data) % frame_size:
        raise MediaFormatError(
            f"length {len(data)} is not a positive multiple of the {width}x{height} I420 frame size {frame_size}",
            len(data) - len(data) % frame_size,
        )
    frames = np.frombuffer(data, dtype=np.uint8).reshape(-1, frame_size)
    luma = frames[:, :ysize].reshape(-1, height, width)
    u = frames[:, ysize:ysize + csize].reshape(-1, ch, cw)
    v = frames[:, ysize + csize:].reshape(-1, ch, cw)
    return VideoClip(luma, fps=fps, chroma_u=u, chroma_v=v, id=clip_id)


def write_raw_i420(clip):
    cshape = (clip.n_frames, (clip.height + 1) // 2, (clip.width + 1) // 2)
    u = to_uint8(clip.chroma_u) if clip.has_chroma else np.full(cshape, 128, np.uint8)
    v = to_uint8(clip.chroma_v) if clip.has_chroma else np.full(cshape, 128, np.uint8)
    luma = to_uint8(clip.luma)
    return b"".join(luma[i].tobytes() + u[i].tobytes() + v[i].tobytes() for i in range(clip.n_frames))


# -- PGM ---------------------------------------------------------------------

def _pgm_header(data):
    """Return the four header tokens with their offsets, and the payload start."""
    tokens = []
    pos = 0
    while len(tokens) < 4:
        if pos >= len(data):
            raise MediaFormatError("truncated PGM header", pos)
        c = data[pos:pos + 1]
        if c == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
        elif c.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
                pos += 1
            tokens.append((data[start:pos], start))
    # exactly one whitespace byte separates maxval from the raster
    return tokens, pos + 1


def read_pgm(data):
    """Decode a binary (P5) 8-bit PGM into a ``uint8`` array."""
    data = bytes(data)
    tokens, pos = _pgm_header(data)
    magic, off = tokens[0]
    if magic == b"P2":
        raise MediaFormatError("unsupported PGM variant P2 (ascii); only binary P5", off)
    if magic != b"P5":
        raise MediaFormatError(f"not a PGM file (magic {magic!r})", off)
    try:
        width, height, maxval = (int(t) for t, _ in tokens[1:])
    except ValueError:
        raise MediaFormatError("malformed PGM header", tokens[1][1]) from None
    if maxval != 255:
        raise MediaFormatError(f"unsupported PGM maxval {maxval}; only 255", tokens[3][1])
    need = width * height
    if len(data) - pos < need:
        raise MediaFormatError(f"truncated PGM payload: need {need} bytes, have {len(data) - pos}", pos)
    return np.frombuffer(data, dtype=np.uint8, count=need, offset=pos).reshape(height, width).copy()


def write_pgm(plane):
    """Encode a plane as binary PGM (floats are converted with :func:`to_uint8`)."""
    plane = to_uint8(plane)
    if plane.ndim != 2:
        raise ValueError("PGM holds a single 2-D plane")
    h, w = plane.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(plane).tobytes()


# -- frame sampling ----------------------------------------------------------

def sample_frames_uniform(clip, count):
    """Indices ``floor(k * T / count)`` for ``k = 0..count-1``.

    ``clip`` may be a :class:`VideoClip` or a frame total ``T``.
    """
    total = clip.n_frames if isinstance(clip, VideoClip) else int(clip)
    if not 1 <= count <= total:
        raise ValueError(f"cannot sample {count} frames from a clip of {total}")
    return [k * total // count for k in range(count)]


# -- tensor archive ----------------------------------------------------------
#
# Layout (all integers little-endian):
#   b"UVQA" | version:u8 | entry_count:u64
#   per entry: name_len:u32 | name:utf-8 | rank:u8 | dims:u32*rank | float32*prod(dims)

ARCHIVE_MAGIC = b"UVQA"
ARCHIVE_VERSION = 1
_HEADER = struct.Struct("<4sBQ")


def write_archive(entries):
    """Serialize a name -> array mapping (order preserved) to bytes."""
    parts = [_HEADER.pack(ARCHIVE_MAGIC, ARCHIVE_VERSION, len(entries))]
    for name, array in entries.items():
        array = np.asarray(array, dtype="<f4")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", array.ndim))
        parts.append(struct.pack(f"<{array.ndim}I", *array.shape))
        parts.append(np.ascontiguousarray(array).tobytes())
    return b"".join(parts)


def read_archive(data):
    """Parse bytes produced by :func:`write_archive` into a dict of float32 arrays."""
    data = bytes(data)
    if len(data) < _HEADER.size:
        raise MediaFormatError("truncated archive header", len(data))
    magic, version, count = _HEADER.unpack_from(data, 0)
    if magic != ARCHIVE_MAGIC:
        raise MediaFormatError("bad magic", 0)
    if version != ARCHIVE_VERSION:
        raise MediaFormatError(f"archive version mismatch: {version} != {ARCHIVE_VERSION}", 4)
    pos = _HEADER.size
    entries = {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", data, pos)
            pos += 4
            if pos + nlen > len(data):
                raise MediaFormatError("payload length mismatch: truncated entry name", pos)
            name = data[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<B", data, pos)
            pos += 1
            shape = struct.unpack_from(f"<{rank}I", data, pos)
            pos += 4 * rank
            n = int(np.prod(shape, dtype=np.int64))
            if pos + 4 * n > len(data):
                raise MediaFormatError(f"payload length mismatch for {name!r}", pos)
            if name in entries:
                raise MediaFormatError(f"duplicate entry name {name!r}", pos)
            entries[name] = np.frombuffer(data, dtype="<f4", count=n, offset=pos).reshape(shape).astype(np.float32)
            pos += 4 * n
    except struct.error:
        raise MediaFormatError("payload length mismatch: truncated entry header", pos) from None
    if pos != len(data):
        raise MediaFormatError(f"payload length mismatch: {len(data) - pos} trailing bytes", pos)
    return entries
