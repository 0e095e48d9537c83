"""On-disk formats: AVF1 feature files, AVW1 weight checkpoints, PPM images, WAV audio.

AVF1 (little-endian):
    magic "AVF1" | u8 dtype code (0 = float32) | u8 rank | u32 dims[rank]
    | u16 clip_id byte length | clip_id UTF-8 | u32 n_times | f64 times[n_times]
    | row-major payload (prod(dims) values)

AVW1 (little-endian):
    magic "AVW1" | u32 entry count | entries
    entry: u16 name length | name UTF-8 | u8 frozen | u8 group tag
           | u8 dtype code (0 = float32, 1 = float64) | u8 rank | u32 dims[rank]
           | row-major payload

Images are 8-bit binary PPM (P6), loaded as C x H x W floats in [0, 1].
Audio is 16-bit PCM WAV via the stdlib wave module.
"""

from __future__ import annotations

import struct
import wave
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidInput

FEATURE_MAGIC = b"AVF1"
WEIGHT_MAGIC = b"AVW1"

_DTYPE_CODES = {0: np.float32, 1: np.float64}
_DTYPE_OF = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}

GROUP_TAGS = {"AE": 0, "VE": 1, "SC": 2}
_GROUP_OF_TAG = {v: k for k, v in GROUP_TAGS.items()}


class _Reader:
    """Byte cursor that raises FormatError with the failing offset."""

    def __init__(self, blob: bytes, path=""):
        self.blob = blob
        self.pos = 0
        self.path = str(path)

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise FormatError(f"{self.path}: truncated, needed {n} more bytes", offset=self.pos)
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def expect_magic(self, magic: bytes):
        got = self.take(len(magic))
        if got != magic:
            raise FormatError(f"{self.path}: bad magic {got!r}, expected {magic!r}", offset=0)

    def expect_end(self):
        if self.pos != len(self.blob):
            raise FormatError(
                f"{self.path}: {len(self.blob) - self.pos} trailing bytes", offset=self.pos
            )

    def array(self, dtype, count: int) -> np.ndarray:
        dtype = np.dtype(dtype).newbyteorder("<")
        raw = self.take(count * dtype.itemsize)
        return np.frombuffer(raw, dtype=dtype).astype(dtype.newbyteorder("="))


def _dims_bytes(shape) -> bytes:
    return b"".join(struct.pack("<I", int(d)) for d in shape)


# ---------------------------------------------------------------------------
# AVF1 feature files

def write_feature_file(path, data: np.ndarray, clip_id: str, frame_center_times) -> None:
    """Write one clip's frame stack (n_frames, 2, n_bins) as float32."""
    data = np.ascontiguousarray(data, dtype=np.float32)
    times = np.asarray(frame_center_times, dtype=np.float64)
    if data.ndim < 1:
        raise InvalidInput("feature payload must have at least rank 1")
    cid = clip_id.encode("utf-8")
    parts = [
        FEATURE_MAGIC,
        struct.pack("<BB", 0, data.ndim),
        _dims_bytes(data.shape),
        struct.pack("<H", len(cid)),
        cid,
        struct.pack("<I", times.shape[0]),
        times.astype("<f8").tobytes(),
        data.astype("<f4").tobytes(),
    ]
    Path(path).write_bytes(b"".join(parts))


def read_feature_file(path):
    """Read an AVF1 file; returns (data, clip_id, frame_center_times)."""
    r = _Reader(Path(path).read_bytes(), path)
    r.expect_magic(FEATURE_MAGIC)
    code = r.u8()
    if code not in _DTYPE_CODES:
        raise FormatError(f"{path}: unknown dtype code {code}", offset=r.pos - 1)
    dtype = _DTYPE_CODES[code]
    rank = r.u8()
    dims = tuple(r.u32() for _ in range(rank))
    clip_id = r.take(r.u16()).decode("utf-8")
    times = r.array(np.float64, r.u32())
    data = r.array(dtype, int(np.prod(dims, dtype=np.int64))).reshape(dims)
    r.expect_end()
    return data, clip_id, times


# ---------------------------------------------------------------------------
# AVW1 weight checkpoints

def write_checkpoint(path, entries) -> None:
    """Write weight entries: iterable of (name, value, frozen, group)."""
    entries = list(entries)
    parts = [WEIGHT_MAGIC, struct.pack("<I", len(entries))]
    for name, value, frozen, group in entries:
        value = np.ascontiguousarray(value)
        if value.dtype not in _DTYPE_OF:
            raise InvalidInput(f"{name}: unsupported checkpoint dtype {value.dtype}")
        if group not in GROUP_TAGS:
            raise InvalidInput(f"{name}: unknown parameter group {group!r}")
        nm = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nm)))
        parts.append(nm)
        parts.append(
            struct.pack(
                "<BBBB", 1 if frozen else 0, GROUP_TAGS[group], _DTYPE_OF[value.dtype], value.ndim
            )
        )
        parts.append(_dims_bytes(value.shape))
        parts.append(value.astype(value.dtype.newbyteorder("<")).tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_checkpoint(path):
    """Read an AVW1 file; returns list of (name, value, frozen, group)."""
    r = _Reader(Path(path).read_bytes(), path)
    r.expect_magic(WEIGHT_MAGIC)
    count = r.u32()
    entries = []
    for _ in range(count):
        name = r.take(r.u16()).decode("utf-8")
        frozen_byte = r.u8()
        if frozen_byte not in (0, 1):
            raise FormatError(f"{path}: bad frozen flag {frozen_byte} for {name}", offset=r.pos - 1)
        tag = r.u8()
        if tag not in _GROUP_OF_TAG:
            raise FormatError(f"{path}: unknown group tag {tag} for {name}", offset=r.pos - 1)
        code = r.u8()
        if code not in _DTYPE_CODES:
            raise FormatError(f"{path}: unknown dtype code {code} for {name}", offset=r.pos - 1)
        rank = r.u8()
        dims = tuple(r.u32() for _ in range(rank))
        value = r.array(_DTYPE_CODES[code], int(np.prod(dims, dtype=np.int64))).reshape(dims)
        entries.append((name, value, bool(frozen_byte), _GROUP_OF_TAG[tag]))
    r.expect_end()
    return entries


# ---------------------------------------------------------------------------
# PPM images (P6, 8-bit)

def write_ppm(path, image: np.ndarray) -> None:
    """Write a C x H x W float image in [0, 1] as binary 8-bit PPM."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] != 3:
        raise InvalidInput(f"expected 3 x H x W image, got shape {image.shape}")
    u8 = np.clip(np.round(image * 255.0), 0, 255).astype(np.uint8)
    _, h, w = u8.shape
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + u8.transpose(1, 2, 0).tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a binary 8-bit PPM; returns 3 x H x W floats in [0, 1]."""
    blob = Path(path).read_bytes()
    if not blob.startswith(b"P6"):
        raise FormatError(f"{path}: not a binary PPM (P6)", offset=0)
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos : pos + 1] == b"#":  # comment to end of line
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        token = blob[start:pos]
        if not token.isdigit():
            raise FormatError(f"{path}: malformed PPM header token {token!r}", offset=start)
        fields.append(int(token))
    pos += 1  # single whitespace after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 supported, got {maxval}", offset=pos)
    expected = w * h * 3
    raw = blob[pos : pos + expected]
    if len(raw) != expected:
        raise FormatError(f"{path}: truncated pixel data", offset=pos + len(raw))
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3)
    return pixels.transpose(2, 0, 1).astype(np.float64) / 255.0


# ---------------------------------------------------------------------------
# WAV audio (16-bit PCM)

def write_wav(path, samples: np.ndarray, sample_rate: int) -> None:
    """Write (channels, n) float samples in [-1, 1] as 16-bit PCM.

    Quantization scale is 2**15, so loaded samples are dyadic rationals and
    the average/difference channel mapping inverts them exactly.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    pcm = np.clip(np.round(samples * 32768.0), -32768, 32767).astype("<i2")
    interleaved = pcm.T.reshape(-1)
    with wave.open(str(path), "wb") as f:
        f.setnchannels(samples.shape[0])
        f.setsampwidth(2)
        f.setframerate(int(sample_rate))
        f.writeframes(interleaved.tobytes())


def read_wav(path):
    """Read a 16-bit PCM WAV; returns ((channels, n) floats in [-1, 1], sample_rate)."""
    try:
        with wave.open(str(path), "rb") as f:
            if f.getsampwidth() != 2:
                raise FormatError(f"{path}: only 16-bit PCM supported")
            channels = f.getnchannels()
            rate = f.getframerate()
            raw = f.readframes(f.getnframes())
    except wave.Error as e:
        raise FormatError(f"{path}: {e}") from e
    pcm = np.frombuffer(raw, dtype="<i2").reshape(-1, channels).T
    return pcm.astype(np.float64) / 32768.0, rate
