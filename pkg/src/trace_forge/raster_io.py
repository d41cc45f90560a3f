"""Portable pixmap / float map readers and writers.

Images are held as numpy arrays in memory:

* raw planes: ``RawPlane`` wrapping an ``(H, W)`` float64 array
* RGB images: ``(H, W, 3)`` float64 arrays, nominal range [0, 255]
* heatmaps: ``(H, W)`` float64 arrays
* masks: ``(H, W)`` uint8 arrays with values in {0, 1}

All writers are exact inverses of the matching readers on the values they
can represent.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from .cfa import CFAPattern

PathLike = Union[str, os.PathLike]


class RasterFormatError(ValueError):
    """Malformed header or unsupported variant."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class RasterTruncatedError(RasterFormatError):
    """Payload shorter than the header promises."""


class RasterValidationError(ValueError):
    """Decoded values violate the format's value constraints."""


@dataclass
class RawPlane:
    """Single-channel linear-light sensor plane, nominal range [0, 255]."""

    data: np.ndarray
    native_cfa: Optional[CFAPattern] = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError(f"raw plane must be 2-D, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("raw plane contains non-finite values")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Round to nearest integer, ties away from zero."""
    x = np.asarray(x, dtype=np.float64)
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


def to_uint8(x: np.ndarray) -> np.ndarray:
    return np.clip(round_half_away(x), 0, 255).astype(np.uint8)


# --- netpbm header -----------------------------------------------------------

def _parse_header(buf: bytes, magic: bytes, nfields: int) -> Tuple[list, int]:
    """Parse a netpbm header; return the integer fields and the payload offset."""
    if len(buf) < 2 or buf[:2] != magic:
        raise RasterFormatError(f"expected magic {magic.decode()!r}, got {buf[:2]!r}", 0)
    pos = 2
    fields = []
    n = len(buf)
    while len(fields) < nfields:
        if pos >= n:
            raise RasterFormatError("header ends prematurely", pos)
        c = buf[pos:pos + 1]
        if c.isspace():
            pos += 1
        elif c == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isdigit():
            start = pos
            while pos < n and buf[pos:pos + 1].isdigit():
                pos += 1
            fields.append(int(buf[start:pos]))
        else:
            raise RasterFormatError(f"unexpected header byte {c!r}", pos)
    # exactly one whitespace byte separates header and payload
    if pos >= n or not buf[pos:pos + 1].isspace():
        raise RasterFormatError("missing whitespace after header", pos)
    return fields, pos + 1


def _read_netpbm(path: PathLike, magic: bytes, channels: int) -> Tuple[np.ndarray, int]:
    buf = Path(path).read_bytes()
    (width, height, maxval), offset = _parse_header(buf, magic, 3)
    if width <= 0 or height <= 0:
        raise RasterFormatError(f"invalid dimensions {width}x{height}", 2)
    if not 0 < maxval <= 65535:
        raise RasterFormatError(f"maxval {maxval} outside 1..65535", offset - 1)
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height * channels
    need = count * dtype.itemsize
    if len(buf) - offset < need:
        raise RasterTruncatedError(
            f"payload has {len(buf) - offset} bytes, expected {need}", len(buf))
    data = np.frombuffer(buf, dtype=dtype, count=count, offset=offset)
    shape = (height, width) if channels == 1 else (height, width, channels)
    return data.reshape(shape), maxval


def _write_netpbm(path: PathLike, magic: bytes, samples: np.ndarray, maxval: int):
    height, width = samples.shape[:2]
    header = b"%s\n%d %d\n%d\n" % (magic, width, height, maxval)
    dtype = ">u2" if maxval > 255 else "u1"
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(samples, dtype=dtype).tobytes())


# --- raw planes --------------------------------------------------------------

def read_pgm16(path: PathLike, native_cfa: Optional[CFAPattern] = None) -> RawPlane:
    """Read a P5 raw plane and rescale its samples linearly to [0, 255]."""
    samples, maxval = _read_netpbm(path, b"P5", 1)
    return RawPlane(samples.astype(np.float64) * (255.0 / maxval), native_cfa)


def write_pgm16(raw: Union[RawPlane, np.ndarray], path: PathLike):
    """Write a raw plane as 16-bit P5 (maxval 65535), clipping to [0, 255]."""
    data = raw.data if isinstance(raw, RawPlane) else np.asarray(raw, dtype=np.float64)
    scaled = np.clip(round_half_away(np.clip(data, 0, 255) * (65535.0 / 255.0)), 0, 65535)
    _write_netpbm(path, b"P5", scaled.astype(np.uint16), 65535)


# --- RGB ---------------------------------------------------------------------

def write_ppm8(image: np.ndarray, path: PathLike):
    """Write an RGB image as binary P6, rounding half away from zero and clipping."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {image.shape}")
    _write_netpbm(path, b"P6", to_uint8(image), 255)


def read_ppm8(path: PathLike) -> np.ndarray:
    samples, maxval = _read_netpbm(path, b"P6", 3)
    if maxval != 255:
        return samples.astype(np.float64) * (255.0 / maxval)
    return samples.astype(np.float64)


# --- masks -------------------------------------------------------------------

def write_mask_pgm(mask: np.ndarray, path: PathLike):
    mask = np.asarray(mask)
    _write_netpbm(path, b"P5", np.where(mask != 0, 255, 0).astype(np.uint8), 255)


def read_mask_pgm(path: PathLike) -> np.ndarray:
    """Read a P5 mask; any nonzero sample is forged (1)."""
    samples, _ = _read_netpbm(path, b"P5", 1)
    return (samples != 0).astype(np.uint8)


# --- heatmaps ----------------------------------------------------------------

def write_heatmap_pfm(heatmap: np.ndarray, path: PathLike):
    """Write a grayscale PFM (``Pf``), little-endian, rows bottom-to-top."""
    h = np.asarray(heatmap, dtype=np.float32)
    if h.ndim != 2:
        raise ValueError(f"heatmap must be 2-D, got shape {h.shape}")
    if not np.all(np.isfinite(h)):
        raise RasterValidationError("heatmap contains non-finite values")
    height, width = h.shape
    with open(path, "wb") as fh:
        fh.write(b"Pf\n%d %d\n-1.0\n" % (width, height))
        fh.write(np.flipud(h).astype("<f4").tobytes())


def read_heatmap_pfm(path: PathLike) -> np.ndarray:
    buf = Path(path).read_bytes()
    if buf[:2] != b"Pf":
        if buf[:2] == b"PF":
            raise RasterFormatError("colour PFM not supported for heatmaps", 0)
        raise RasterFormatError(f"expected magic 'Pf', got {buf[:2]!r}", 0)
    # header: magic, dims line, scale line, each newline-terminated
    lines = []
    pos = 2
    while len(lines) < 2:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        end = buf.find(b"\n", pos)
        if end < 0:
            raise RasterFormatError("header ends prematurely", pos)
        lines.append((buf[pos:end], pos))
        pos = end + 1
    try:
        width, height = (int(v) for v in lines[0][0].split())
    except ValueError:
        raise RasterFormatError(f"bad dimensions line {lines[0][0]!r}", lines[0][1]) from None
    try:
        scale = float(lines[1][0])
    except ValueError:
        raise RasterFormatError(f"bad scale line {lines[1][0]!r}", lines[1][1]) from None
    if scale == 0 or width <= 0 or height <= 0:
        raise RasterFormatError("invalid scale or dimensions", lines[1][1])
    dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    need = width * height * 4
    if len(buf) - pos < need:
        raise RasterTruncatedError(f"payload has {len(buf) - pos} bytes, expected {need}", len(buf))
    data = np.frombuffer(buf, dtype=dtype, count=width * height, offset=pos)
    data = np.flipud(data.reshape(height, width)).astype(np.float64)
    if not np.all(np.isfinite(data)):
        raise RasterValidationError(f"{path}: heatmap contains NaN or infinite values")
    return data

