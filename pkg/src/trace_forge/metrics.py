"""Heatmap-weighted Matthews correlation coefficient."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Iterable, Tuple

import numpy as np

MCC_VARIANT = "soft-v1"


class UndefinedMaskError(ValueError):
    """Mask has no forged or no authentic pixel."""


@dataclass(frozen=True)
class ConfusionWeights:
    tp: float
    fp: float
    fn: float
    tn: float

    def mcc(self) -> float:
        den = (self.tp + self.fp) * (self.tp + self.fn) * (self.tn + self.fp) * (self.tn + self.fn)
        if den == 0:
            return 0.0
        return (self.tp * self.tn - self.fp * self.fn) / math.sqrt(den)


def normalize_heatmap(h: np.ndarray) -> np.ndarray:
    """Affine rescale to [0, 1]; constant maps become 0.5."""
    h = np.asarray(h, dtype=np.float64)
    lo, hi = h.min(), h.max()
    if hi == lo:
        return np.full_like(h, 0.5)
    return (h - lo) / (hi - lo)


def confusion_weights(h: np.ndarray, mask: np.ndarray) -> ConfusionWeights:
    h = np.asarray(h, dtype=np.float64)
    mask = np.asarray(mask)
    if h.shape != mask.shape:
        raise ValueError(f"heatmap shape {h.shape} != mask shape {mask.shape}")
    forged = mask != 0
    n_forged = int(forged.sum())
    if n_forged == 0 or n_forged == forged.size:
        raise UndefinedMaskError("mask must contain both forged and authentic pixels")
    tp = float(h[forged].sum())
    fp = float(h[~forged].sum())
    return ConfusionWeights(tp=tp, fp=fp, fn=n_forged - tp, tn=(forged.size - n_forged) - fp)


def weighted_mcc(h: np.ndarray, mask: np.ndarray) -> float:
    """MCC of the confusion matrix accumulated with heatmap confidences.

    ``h`` must already lie in [0, 1] (see :func:`normalize_heatmap`).
    """
    return confusion_weights(h, mask).mcc()


@dataclass
class Aggregate:
    mean: float
    std: float
    n: int


def aggregate(scores: Iterable[Tuple[str, str, float]]) -> Dict[Tuple[str, str], Aggregate]:
    """Mean and population std of MCC per (dataset kind, mask kind)."""
    groups = defaultdict(list)
    for kind, mask_kind, value in scores:
        groups[(kind, mask_kind)].append(float(value))
    out = {}
    for key in sorted(groups):
        values = np.sort(np.asarray(groups[key]))
        out[key] = Aggregate(float(values.mean()), float(values.std()), int(values.size))
    return out
