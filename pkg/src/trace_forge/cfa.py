"""Bayer mosaicing and demosaicing.

A ``CFAPattern`` ``(dx, dy)`` puts red at ``x % 2 == dx, y % 2 == dy``, blue at
the diagonally opposite site of the quad and green on the remaining two.
Arrays are indexed ``[y, x]``.

Borders are handled by whole-sample mirror reflection (``d c b | a b c d``),
which keeps the Bayer phase intact inside the padding.
"""

from __future__ import annotations

import enum
from typing import NamedTuple, Tuple

import numpy as np
from scipy import ndimage

MIN_SIZE = 8


class CFAPattern(NamedTuple):
    dx: int
    dy: int

    def shifted(self, sx: int, sy: int) -> "CFAPattern":
        """Pattern seen after translating the mosaic by (sx, sy) pixels."""
        return CFAPattern((self.dx + sx) % 2, (self.dy + sy) % 2)

    def to_json(self):
        return [self.dx, self.dy]

    @classmethod
    def from_json(cls, value) -> "CFAPattern":
        dx, dy = value
        if dx not in (0, 1) or dy not in (0, 1):
            raise ValueError(f"invalid CFA pattern {value!r}")
        return cls(int(dx), int(dy))


ALL_PATTERNS = tuple(CFAPattern(dx, dy) for dy in (0, 1) for dx in (0, 1))


class DemosaicAlgo(str, enum.Enum):
    BILINEAR = "bilinear"
    SMOOTH_HUE = "smooth_hue"
    GRADIENT_CORRECTED = "gradient_corrected"
    EDGE_DIRECTED = "edge_directed"


ALL_ALGOS = tuple(DemosaicAlgo)


def site_masks(shape: Tuple[int, int], pattern: CFAPattern):
    """Boolean (red, green, blue) site masks for a plane of ``shape``."""
    h, w = shape
    yy = (np.arange(h) % 2)[:, None]
    xx = (np.arange(w) % 2)[None, :]
    red = (xx == pattern.dx) & (yy == pattern.dy)
    blue = (xx != pattern.dx) & (yy != pattern.dy)
    green = ~(red | blue)
    return red, green, blue


def mosaic(image: np.ndarray, pattern: CFAPattern) -> np.ndarray:
    """Sample one colour per pixel according to ``pattern``."""
    image = np.asarray(image, dtype=np.float64)
    red, green, blue = site_masks(image.shape[:2], pattern)
    return np.where(red, image[..., 0], np.where(blue, image[..., 2], image[..., 1]))


def sample_pattern(rng: np.random.Generator) -> CFAPattern:
    return ALL_PATTERNS[int(rng.integers(4))]


# --- interpolation helpers ---------------------------------------------------

_K_GREEN = np.array([[0, 1, 0], [1, 4, 1], [0, 1, 0]], dtype=np.float64) / 4
_K_RB = np.array([[1, 2, 1], [2, 4, 2], [1, 2, 1]], dtype=np.float64) / 4


def _conv(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    return ndimage.correlate(plane, kernel, mode="mirror")


def _bilinear_green(m, green):
    return _conv(np.where(green, m, 0.0), _K_GREEN)


def _bilinear_rb(values, sites):
    return _conv(np.where(sites, values, 0.0), _K_RB)


def _demosaic_bilinear(m, red, green, blue):
    return np.stack([_bilinear_rb(m, red), _bilinear_green(m, green), _bilinear_rb(m, blue)], -1)


# offset keeps the hue ratio well-defined near black
_HUE_OFFSET = 16.0


def _demosaic_smooth_hue(m, red, green, blue):
    g = _bilinear_green(m, green)
    gs = np.maximum(g + _HUE_OFFSET, 1.0)
    r = _bilinear_rb((m + _HUE_OFFSET) / gs, red) * gs - _HUE_OFFSET
    b = _bilinear_rb((m + _HUE_OFFSET) / gs, blue) * gs - _HUE_OFFSET
    return np.stack([r, g, b], -1)


# Malvar-He-Cutler 5x5 kernels, scaled by 1/8
_M_G_AT_RB = np.array([
    [0, 0, -1, 0, 0],
    [0, 0, 2, 0, 0],
    [-1, 2, 4, 2, -1],
    [0, 0, 2, 0, 0],
    [0, 0, -1, 0, 0]], dtype=np.float64) / 8
_M_ROWNEIGH = np.array([
    [0, 0, 0.5, 0, 0],
    [0, -1, 0, -1, 0],
    [-1, 4, 5, 4, -1],
    [0, -1, 0, -1, 0],
    [0, 0, 0.5, 0, 0]], dtype=np.float64) / 8
_M_COLNEIGH = _M_ROWNEIGH.T
_M_DIAG = np.array([
    [0, 0, -1.5, 0, 0],
    [0, 2, 0, 2, 0],
    [-1.5, 0, 6, 0, -1.5],
    [0, 2, 0, 2, 0],
    [0, 0, -1.5, 0, 0]], dtype=np.float64) / 8


def _demosaic_gradient_corrected(m, red, green, blue):
    g_at_rb = _conv(m, _M_G_AT_RB)
    rowneigh = _conv(m, _M_ROWNEIGH)
    colneigh = _conv(m, _M_COLNEIGH)
    diag = _conv(m, _M_DIAG)
    # green sites sharing a row with red samples
    red_row = red.any(axis=1)[:, None] & green
    blue_row = green & ~red_row
    g = np.where(green, m, g_at_rb)
    r = np.where(red, m, np.where(red_row, rowneigh, np.where(blue_row, colneigh, diag)))
    b = np.where(blue, m, np.where(blue_row, rowneigh, np.where(red_row, colneigh, diag)))
    return np.stack([r, g, b], -1)


def _demosaic_edge_directed(m, red, green, blue):
    p = np.pad(m, 1, mode="reflect")
    left, right = p[1:-1, :-2], p[1:-1, 2:]
    up, down = p[:-2, 1:-1], p[2:, 1:-1]
    grad_h = np.abs(left - right)
    grad_v = np.abs(up - down)
    horiz = (left + right) / 2
    vert = (up + down) / 2
    g_est = np.where(grad_h < grad_v, horiz, np.where(grad_v < grad_h, vert, (horiz + vert) / 2))
    g = np.where(green, m, g_est)
    # chroma as colour differences, interpolated and added back to green
    r = _bilinear_rb(m - g, red) + g
    b = _bilinear_rb(m - g, blue) + g
    return np.stack([r, g, b], -1)


_ALGOS = {
    DemosaicAlgo.BILINEAR: _demosaic_bilinear,
    DemosaicAlgo.SMOOTH_HUE: _demosaic_smooth_hue,
    DemosaicAlgo.GRADIENT_CORRECTED: _demosaic_gradient_corrected,
    DemosaicAlgo.EDGE_DIRECTED: _demosaic_edge_directed,
}


def demosaic(m: np.ndarray, pattern: CFAPattern, algo: DemosaicAlgo) -> np.ndarray:
    """Reconstruct an ``(H, W, 3)`` image from a Bayer mosaic.

    Sampled sites keep their mosaic value exactly in their own channel.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or min(m.shape) < MIN_SIZE:
        raise ValueError(f"mosaic must be at least {MIN_SIZE}x{MIN_SIZE}, got {m.shape}")
    algo = DemosaicAlgo(algo)
    red, green, blue = site_masks(m.shape, pattern)
    out = _ALGOS[algo](m, red, green, blue)
    for c, sites in enumerate((red, green, blue)):
        out[..., c][sites] = m[sites]
    return out
