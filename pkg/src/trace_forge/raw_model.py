"""Half-resolution references, heteroscedastic raw noise and noise curves."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .cfa import CFAPattern, site_masks
from .raster_io import RawPlane

A_RANGE = (0.0, 2.0)
B_RANGE = (0.0, 6.0)
MAX_PAIR_ATTEMPTS = 1000


class MissingLayoutError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseParams:
    """Raw noise law: variance = a + b * intensity."""

    a: float
    b: float

    def __post_init__(self):
        if self.a < 0 or self.b < 0:
            raise ValueError(f"noise parameters must be non-negative, got ({self.a}, {self.b})")

    def variance(self, u):
        return self.a + self.b * np.maximum(u, 0.0)

    def to_json(self):
        return {"A": self.a, "B": self.b}

    @classmethod
    def from_json(cls, d) -> "NoiseParams":
        return cls(float(d["A"]), float(d["B"]))


def half_sample(raw: RawPlane, layout: Optional[CFAPattern] = None) -> np.ndarray:
    """Collapse each 2x2 Bayer quad into one RGB pixel.

    Red and blue take the quad's own samples; green is the mean of the two
    green samples. A trailing odd row/column is dropped.
    """
    layout = layout if layout is not None else raw.native_cfa
    if layout is None:
        raise MissingLayoutError("raw plane has no declared CFA layout")
    data = raw.data
    h, w = (data.shape[0] // 2) * 2, (data.shape[1] // 2) * 2
    data = data[:h, :w]
    red, green, blue = site_masks((h, w), layout)

    def quad_sum(sites):
        v = np.where(sites, data, 0.0)
        return v[0::2, 0::2] + v[0::2, 1::2] + v[1::2, 0::2] + v[1::2, 1::2]

    return np.stack([quad_sum(red), quad_sum(green) / 2, quad_sum(blue)], axis=-1)


def add_raw_noise(mosaic: np.ndarray, params: NoiseParams, rng: np.random.Generator) -> np.ndarray:
    """Add zero-mean Gaussian noise of variance ``a + b*u`` to every pixel.

    Negative intensities count as 0 for the variance; the output is not clipped.
    """
    mosaic = np.asarray(mosaic, dtype=np.float64)
    std = np.sqrt(params.variance(mosaic))
    return mosaic + std * rng.standard_normal(mosaic.shape)


def sample_noise_params(rng: np.random.Generator) -> NoiseParams:
    return NoiseParams(float(rng.uniform(*A_RANGE)), float(rng.uniform(*B_RANGE)))


def sample_noise_pair(rng: np.random.Generator) -> Tuple[NoiseParams, NoiseParams]:
    """Draw two noise laws whose variance curves never cross for u > 0."""
    for _ in range(MAX_PAIR_ATTEMPTS):
        p0 = sample_noise_params(rng)
        p1 = sample_noise_params(rng)
        if (p1.a - p0.a) * (p1.b - p0.b) > 0:
            return p0, p1
    raise RuntimeError(f"no ordered noise pair after {MAX_PAIR_ATTEMPTS} attempts")


@dataclass
class NoiseCurve:
    centers: np.ndarray  # (nbins,)
    std: np.ndarray  # (nbins, channels), NaN where empty
    counts: np.ndarray  # (nbins, channels)
    min_count: int
    levels: Optional[np.ndarray] = None  # (nbins, channels) mean reference value per bin

    @property
    def reliable(self) -> np.ndarray:
        return self.counts >= self.min_count


def measure_noise_curve(noisy: np.ndarray, reference: np.ndarray, nbins: int = 16,
                        value_range=(0.0, 255.0), min_count: int = 100) -> NoiseCurve:
    """Per-channel residual std binned by reference intensity."""
    noisy = np.asarray(noisy, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if noisy.shape != reference.shape:
        raise ValueError(f"shape mismatch: {noisy.shape} vs {reference.shape}")
    if noisy.ndim == 2:
        noisy, reference = noisy[..., None], reference[..., None]
    lo, hi = value_range
    edges = np.linspace(lo, hi, nbins + 1)
    nch = noisy.shape[-1]
    std = np.full((nbins, nch), np.nan)
    counts = np.zeros((nbins, nch), dtype=np.int64)
    levels = np.full((nbins, nch), np.nan)
    for c in range(nch):
        ref = reference[..., c].ravel()
        res = noisy[..., c].ravel() - ref
        idx = np.clip(np.searchsorted(edges, ref, side="right") - 1, 0, nbins - 1)
        inside = (ref >= lo) & (ref <= hi)
        idx, res, ref = idx[inside], res[inside], ref[inside]
        n = np.bincount(idx, minlength=nbins)
        s1 = np.bincount(idx, weights=res, minlength=nbins)
        s2 = np.bincount(idx, weights=res * res, minlength=nbins)
        counts[:, c] = n
        with np.errstate(invalid="ignore", divide="ignore"):
            mean = s1 / n
            var = np.maximum(s2 / n - mean * mean, 0.0)
            levels[:, c] = np.bincount(idx, weights=ref, minlength=nbins) / n
        std[:, c] = np.where(n > 0, np.sqrt(var), np.nan)
    return NoiseCurve((edges[:-1] + edges[1:]) / 2, std, counts, min_count, levels)
