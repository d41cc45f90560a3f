"""Lossy core of baseline JPEG without the bitstream.

Colour transform, 8x8 blocking on a configurable grid, orthonormal DCT-II,
IJG quality-scaled quantization and reconstruction. No chroma subsampling
and no entropy coding.

Grid convention: ``grid = (gx, gy)`` puts block origins at pixels with
``x % 8 == gx`` and ``y % 8 == gy``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .raster_io import round_half_away

QUALITY_RANGE = (75, 100)

BASE_LUMA = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99]], dtype=np.int64)

BASE_CHROMA = np.array([
    [17, 18, 24, 47, 99, 99, 99, 99],
    [18, 21, 26, 66, 99, 99, 99, 99],
    [24, 26, 56, 99, 99, 99, 99, 99],
    [47, 66, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99]], dtype=np.int64)

# BT.601 full-range
RGB_TO_YCBCR = np.array([
    [0.299, 0.587, 0.114],
    [-0.168736, -0.331264, 0.5],
    [0.5, -0.418688, -0.081312]])
YCBCR_TO_RGB = np.linalg.inv(RGB_TO_YCBCR)
CHROMA_OFFSET = np.array([0.0, 128.0, 128.0])


def _dct_matrix(n: int = 8) -> np.ndarray:
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    c = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * i + 1) * k / (2 * n))
    c[0] /= np.sqrt(2.0)
    return c


DCT = _dct_matrix()


@dataclass(frozen=True)
class JpegParams:
    quality: int
    grid: Tuple[int, int] = (0, 0)

    def __post_init__(self):
        if not 1 <= self.quality <= 100:
            raise ValueError(f"quality {self.quality} outside 1..100")
        gx, gy = self.grid
        if not (0 <= gx < 8 and 0 <= gy < 8):
            raise ValueError(f"grid {self.grid} outside 0..7")

    def to_json(self):
        return {"quality": self.quality, "grid": list(self.grid)}

    @classmethod
    def from_json(cls, d) -> "JpegParams":
        return cls(int(d["quality"]), tuple(int(v) for v in d["grid"]))


@dataclass(frozen=True)
class QuantTables:
    luma: np.ndarray
    chroma: np.ndarray


@dataclass
class CoefficientVolume:
    """Quantized DCT levels, shape ``(3, blocks_y, blocks_x, 8, 8)``, Y/Cb/Cr."""

    levels: np.ndarray
    tables: QuantTables
    grid: Tuple[int, int]
    padding: Tuple[int, int]  # rows/cols added before the image


def quant_tables(quality: int) -> QuantTables:
    if not 1 <= quality <= 100:
        raise ValueError(f"quality {quality} outside 1..100")
    scale = 5000 // quality if quality < 50 else 200 - 2 * quality

    def scaled(base):
        return np.clip((base * scale + 50) // 100, 1, 255)

    return QuantTables(scaled(BASE_LUMA), scaled(BASE_CHROMA))


def dct2_block(block: np.ndarray) -> np.ndarray:
    return DCT @ np.asarray(block, dtype=np.float64) @ DCT.T


def idct2_block(coef: np.ndarray) -> np.ndarray:
    return DCT.T @ np.asarray(coef, dtype=np.float64) @ DCT


def rgb_to_ycbcr(image: np.ndarray) -> np.ndarray:
    return image @ RGB_TO_YCBCR.T + CHROMA_OFFSET


def ycbcr_to_rgb(image: np.ndarray) -> np.ndarray:
    return (image - CHROMA_OFFSET) @ YCBCR_TO_RGB.T


def compress_decompress(image: np.ndarray, params: JpegParams):
    """Round-trip ``image`` through JPEG quantization.

    Returns the reconstructed ``(H, W, 3)`` image (unclipped, real-valued) and
    the quantized coefficient volume.
    """
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape[:2]
    gx, gy = params.grid
    top, left = (8 - gy) % 8, (8 - gx) % 8
    bottom = -(h + top) % 8
    right = -(w + left) % 8
    ycc = rgb_to_ycbcr(image) - 128.0
    padded = np.pad(ycc, ((top, bottom), (left, right), (0, 0)), mode="edge")
    ph, pw = padded.shape[:2]
    nby, nbx = ph // 8, pw // 8
    # (3, nby, nbx, 8, 8)
    blocks = padded.transpose(2, 0, 1).reshape(3, nby, 8, nbx, 8).transpose(0, 1, 3, 2, 4)
    coef = DCT @ blocks @ DCT.T
    tables = quant_tables(params.quality)
    steps = np.stack([tables.luma, tables.chroma, tables.chroma]).astype(np.float64)
    steps = steps[:, None, None]
    levels = round_half_away(coef / steps)
    recon = DCT.T @ (levels * steps) @ DCT
    recon = recon.transpose(0, 1, 3, 2, 4).reshape(3, ph, pw).transpose(1, 2, 0)
    recon = recon[top:top + h, left:left + w] + 128.0
    volume = CoefficientVolume(levels.astype(np.int32), tables, (gx, gy), (top, left))
    return ycbcr_to_rgb(recon), volume


def sample_quality(rng: np.random.Generator, exclude: Optional[int] = None) -> int:
    lo, hi = QUALITY_RANGE
    choices = [q for q in range(lo, hi + 1) if q != exclude]
    return choices[int(rng.integers(len(choices)))]


def sample_grid(rng: np.random.Generator, exclude: Optional[Tuple[int, int]] = None):
    choices = [(gx, gy) for gy in range(8) for gx in range(8) if (gx, gy) != exclude]
    return choices[int(rng.integers(len(choices)))]


def sample_jpeg(rng: np.random.Generator, force_new_grid: Optional[JpegParams] = None) -> JpegParams:
    """Draw a quality in 75..100 and a uniform grid.

    With ``force_new_grid`` set, keep its quality and draw a grid among the
    63 other offsets.
    """
    if force_new_grid is not None:
        return JpegParams(force_new_grid.quality, sample_grid(rng, exclude=force_new_grid.grid))
    quality = sample_quality(rng)
    return JpegParams(quality, sample_grid(rng))


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 255.0) -> float:
    mse = float(np.mean((np.asarray(a, dtype=np.float64) - b) ** 2))
    return float("inf") if mse == 0 else 10 * np.log10(peak * peak / mse)
