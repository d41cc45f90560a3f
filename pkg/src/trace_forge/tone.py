"""White balance and gamma correction."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

log = logging.getLogger(__name__)

GAMMA_RANGE = (1.0, 2.5)
WB_GAIN_RANGE = (1.1, 2.2)


@dataclass(frozen=True)
class ToneParams:
    wb_gains: Tuple[float, float, float]
    gamma: float
    k: float = 1.0

    def __post_init__(self):
        r, g, b = self.wb_gains
        if r < 1 or b < 1 or g != 1:
            raise ValueError(f"white-balance gains must be (>=1, 1, >=1), got {self.wb_gains}")
        if not GAMMA_RANGE[0] <= self.gamma <= GAMMA_RANGE[1]:
            raise ValueError(f"gamma {self.gamma} outside {GAMMA_RANGE}")
        if self.k <= 0:
            raise ValueError(f"k must be positive, got {self.k}")


def sample_wb_gains(rng: np.random.Generator) -> Tuple[float, float, float]:
    r, b = rng.uniform(*WB_GAIN_RANGE, size=2)
    return (float(r), 1.0, float(b))


def white_balance(image: np.ndarray, gains) -> np.ndarray:
    gains = np.asarray(gains, dtype=np.float64)
    if np.any(gains < 1):
        raise ValueError(f"white-balance gains must be >= 1, got {tuple(gains)}")
    return np.asarray(image, dtype=np.float64) * gains


def gamma_correct(image: np.ndarray, gamma: float, k: float = 1.0,
                  provenance: Optional[dict] = None) -> np.ndarray:
    """Apply ``u -> k * 255 * (u / 255) ** (1 / gamma)``.

    Negative inputs are clamped to 0; their count is added to
    ``provenance["gamma_clamped"]`` when a dict is supplied.
    """
    image = np.asarray(image, dtype=np.float64)
    negative = image < 0
    n_clamped = int(negative.sum())
    if n_clamped:
        log.debug("gamma: clamped %d negative samples", n_clamped)
    if provenance is not None:
        provenance["gamma_clamped"] = provenance.get("gamma_clamped", 0) + n_clamped
    u = np.where(negative, 0.0, image)
    # u * (u/255)^(1/gamma - 1) equals 255 (u/255)^(1/gamma) but is exact at gamma == 1
    with np.errstate(divide="ignore", invalid="ignore"):
        out = u * np.power(u / 255.0, 1.0 / gamma - 1.0)
    return k * np.where(u > 0, out, 0.0)
