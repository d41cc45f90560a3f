"""Lightweight trace detectors used to validate generated corpora.

* ``zero_grid_probe``: JPEG grid origin from counts of null DCT coefficients.
* ``cfa_probe``: Bayer phase from how linearly predictable interpolated sites are
  (or, optionally, from the extremality of sampled sites).
* ``noise_probe``: blockwise noise level from the MAD of a Haar detail band,
  judged against an image-wide signal-dependent noise law.

All probes are deterministic and accept ``(H, W, 3)`` images in [0, 255].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .cfa import ALL_PATTERNS, CFAPattern, mosaic, site_masks
from .jpeg_sim import DCT

ZERO_THRESHOLD = 0.5
SIGNIFICANCE_SIGMA = 3.0
MAD_TO_STD = 1.0 / 0.6745
PREDICTION_FLOOR = 1e-6
NOISE_BLOCK = 32
TUKEY_C = 4.685
GAMMA_GRID = tuple(np.round(np.arange(1.0, 2.5001, 0.05), 2))
WINDOW = 64
STRIDE = 32


def luminance(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return image
    return image @ np.array([0.299, 0.587, 0.114])


def _window_starts(n: int, window: int, stride: int):
    if n <= window:
        return [0]
    starts = list(range(0, n - window + 1, stride))
    if starts[-1] != n - window:
        starts.append(n - window)
    return starts


def _windows(shape, window=WINDOW, stride=STRIDE):
    h, w = shape
    for y in _window_starts(h, window, stride):
        for x in _window_starts(w, window, stride):
            yield slice(y, min(y + window, h)), slice(x, min(x + window, w))


def _paint(shape, values):
    """Average per-window values onto the pixels each window covers."""
    acc = np.zeros(shape)
    cnt = np.zeros(shape)
    for (sy, sx), v in values:
        acc[sy, sx] += v
        cnt[sy, sx] += 1
    return acc / np.maximum(cnt, 1)


# --- JPEG grid ---------------------------------------------------------------

def zero_counts(image: np.ndarray) -> np.ndarray:
    """Null AC coefficient count of the 8x8 block starting at every pixel.

    Output shape ``(H-7, W-7)``; entry ``[y, x]`` is the number of AC
    coefficients with magnitude below 0.5 in the block whose top-left corner
    is ``(y, x)``.
    """
    y = luminance(image) - 128.0
    rows = sliding_window_view(y, 8, axis=1) @ DCT.T  # (H, W-7, 8): horizontal freq
    counts = np.zeros((y.shape[0] - 7, y.shape[1] - 7), dtype=np.int32)
    for u in range(8):
        # vertical frequency u for all horizontal frequencies at once
        coef = np.tensordot(sliding_window_view(rows, 8, axis=0), DCT[u], axes=([3], [0]))
        small = np.abs(coef) < ZERO_THRESHOLD
        if u == 0:
            small[..., 0] = False  # DC
        counts += small.sum(-1, dtype=np.int32)
    return counts


def _grid_scores(counts: np.ndarray, region: Optional[np.ndarray] = None) -> np.ndarray:
    """Mean null count per block for each of the 64 origins, shape (8, 8) as [gy, gx]."""
    scores = np.full((8, 8), np.nan)
    for gy in range(8):
        for gx in range(8):
            c = counts[gy::8, gx::8]
            if region is not None:
                keep = region[gy::8, gx::8][:c.shape[0], :c.shape[1]]
                c = c[keep]
            if c.size:
                scores[gy, gx] = c.mean()
    return scores


def _significant_argmax(scores: np.ndarray) -> Optional[Tuple[int, int]]:
    flat = scores.ravel()
    if np.all(np.isnan(flat)):
        return None
    best = int(np.nanargmax(flat))
    others = np.delete(flat, best)
    others = others[~np.isnan(others)]
    spread = others.std()
    if spread == 0:
        if flat[best] > others.max(initial=-np.inf):
            gy, gx = divmod(best, 8)
            return gx, gy
        return None
    if (flat[best] - others.mean()) / spread <= SIGNIFICANCE_SIGMA:
        return None
    gy, gx = divmod(best, 8)
    return gx, gy


def block_region(mask: np.ndarray) -> np.ndarray:
    """Block top-left positions whose 8x8 block lies entirely inside ``mask``."""
    m = np.asarray(mask) != 0
    inside = sliding_window_view(m, (8, 8)).all(axis=(-1, -2))
    return inside


def zero_grid_estimate(image: np.ndarray, region: Optional[np.ndarray] = None,
                       counts: Optional[np.ndarray] = None) -> Optional[Tuple[int, int]]:
    """Grid origin ``(gx, gy)`` with the most null coefficients, or None.

    ``region`` restricts the vote to blocks lying fully inside a mask.
    """
    if counts is None:
        counts = zero_counts(image)
    reg = block_region(region) if region is not None else None
    return _significant_argmax(_grid_scores(counts, reg))


def zero_grid_probe(image: np.ndarray, window: int = WINDOW, stride: int = STRIDE):
    """Estimate the global JPEG grid and map regions aligned to another grid.

    Returns ``(estimate, heatmap)``; ``estimate`` is ``(gx, gy)`` or None when
    no origin stands out. Each window scores the normalized excess of its own
    best origin over the global one.
    """
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape[:2]
    if h < 64 or w < 64:
        raise ValueError(f"image too small for grid analysis: {h}x{w}")
    counts = zero_counts(image)
    scores = _grid_scores(counts)
    estimate = _significant_argmax(scores)
    gy0, gx0 = np.unravel_index(int(np.nanargmax(scores)), scores.shape)
    values = []
    for sy, sx in _windows((h, w), window, stride):
        sub = counts[sy.start:min(sy.stop, counts.shape[0]), sx.start:min(sx.stop, counts.shape[1])]
        local = np.zeros((8, 8))
        for gy in range(8):
            for gx in range(8):
                oy, ox = (gy - sy.start) % 8, (gx - sx.start) % 8
                c = sub[oy::8, ox::8]
                local[gy, gx] = c.mean() if c.size else 0.0
        best = local.max()
        excess = (best - local[gy0, gx0]) / best if best > 0 else 0.0
        values.append(((sy, sx), excess))
    return estimate, _paint((h, w), values)


# --- CFA ---------------------------------------------------------------------

def _extrema(plane: np.ndarray) -> np.ndarray:
    """Strict local maxima or minima of the 3x3 neighbourhood (borders excluded)."""
    win = sliding_window_view(plane, (3, 3))
    centre = win[..., 1, 1]
    neigh = np.delete(win.reshape(*win.shape[:2], 9), 4, axis=-1)
    is_ext = (centre > neigh.max(-1)) | (centre < neigh.min(-1))
    out = np.zeros(plane.shape, dtype=bool)
    out[1:-1, 1:-1] = is_ext
    return out


def extremal_scores(image: np.ndarray, sy=slice(None), sx=slice(None)):
    """Count of red/blue 3x3 extrema falling on each pattern's sampled sites.

    Higher is more likely. Indices are taken in global image coordinates.
    """
    image = np.asarray(image, dtype=np.float64)
    ext_r = _extrema(image[..., 0])
    ext_b = _extrema(image[..., 2])
    y0, x0 = sy.start or 0, sx.start or 0
    r, b = ext_r[sy, sx], ext_b[sy, sx]
    scores = {}
    for p in ALL_PATTERNS:
        ry, rx = (p.dy - y0) % 2, (p.dx - x0) % 2
        by, bx = (p.dy + 1 - y0) % 2, (p.dx + 1 - x0) % 2
        scores[p] = int(r[ry::2, rx::2].sum()) + int(b[by::2, bx::2].sum())
    return scores


class _PredictionDesign:
    """Neighbourhood regressors for every non-sampled (channel, phase) of a pattern.

    For a hypothesised pattern the image is re-mosaiced; each interpolated
    value should then be an (almost) linear function of nearby samples.
    """

    def __init__(self, image: np.ndarray, pattern: CFAPattern, radius: int):
        m = mosaic(image, pattern)
        k = 2 * radius + 1
        nb = sliding_window_view(np.pad(m, radius, mode="reflect"), (k, k))
        self.targets = []
        for c, sites in enumerate(site_masks(m.shape, pattern)):
            for py in (0, 1):
                for px in (0, 1):
                    if sites[py, px]:
                        continue
                    X = nb[py::2, px::2].reshape(*nb[py::2, px::2].shape[:2], k * k)
                    X = np.concatenate([X, np.ones((*X.shape[:2], 1))], axis=-1)
                    self.targets.append((py, px, X, image[py::2, px::2, c]))

    def score(self, sy=slice(None), sx=slice(None)) -> float:
        """Sum of log mean squared prediction residuals; lower fits better."""
        total = 0.0
        for py, px, X, y in self.targets:
            hy = _half_slice(sy, py)
            hx = _half_slice(sx, px)
            Xs = X[hy, hx].reshape(-1, X.shape[-1])
            ys = y[hy, hx].ravel()
            coef = np.linalg.lstsq(Xs, ys, rcond=None)[0]
            total += np.log(np.mean((ys - Xs @ coef) ** 2) + PREDICTION_FLOOR)
        return total


def _half_slice(s: slice, phase: int) -> slice:
    """Rows of a stride-2 subsampled plane (starting at ``phase``) inside ``s``."""
    start = 0 if s.start is None else s.start
    stop = s.stop
    lo = max(0, -(-(start - phase) // 2))
    hi = None if stop is None else -(-(stop - phase) // 2)
    return slice(lo, hi)


def prediction_scores(image: np.ndarray, radius: int = 1):
    """Linear-prediction misfit per candidate pattern (lower is more likely)."""
    image = np.asarray(image, dtype=np.float64)
    return {p: _PredictionDesign(image, p, radius).score() for p in ALL_PATTERNS}


def _unique_best(scores, lower_is_better: bool) -> Optional[CFAPattern]:
    sign = 1 if lower_is_better else -1
    ranked = sorted(scores.items(), key=lambda kv: sign * kv[1])
    if np.isclose(ranked[0][1], ranked[1][1], rtol=0, atol=1e-9):
        return None
    return ranked[0][0]


def cfa_probe(image: np.ndarray, window: int = WINDOW, stride: int = STRIDE,
              method: str = "prediction", radius: int = 1):
    """Estimate the Bayer phase; heatmap marks windows fitting another phase better.

    Returns ``(estimate, heatmap)``; ``estimate`` is a CFAPattern, or None
    when every phase scores the same (e.g. a constant image).

    ``method="prediction"`` re-mosaics the image with each candidate pattern
    and fits a linear predictor of the interpolated values from their
    ``(2r+1)^2`` sampled neighbourhood: the true pattern leaves the smallest
    residual. ``method="extremal"`` counts red/blue 3x3 extrema on sampled
    sites; it works for bilinear demosaicing but is fooled by demosaicers
    that copy or symmetrically blend samples.
    """
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape[:2]
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got {image.shape}")
    values = []
    if method == "extremal":
        estimate = _unique_best(extremal_scores(image), lower_is_better=False)
        for sy, sx in _windows((h, w), window, stride):
            local = extremal_scores(image, sy, sx)
            total = sum(local.values())
            best = max(local.values())
            ref = local[estimate] if estimate is not None else best
            values.append(((sy, sx), (best - ref) / total if total else 0.0))
        return estimate, _paint((h, w), values)
    if method != "prediction":
        raise ValueError(f"unknown cfa_probe method {method!r}")
    designs = {p: _PredictionDesign(image, p, radius) for p in ALL_PATTERNS}
    estimate = _unique_best({p: d.score() for p, d in designs.items()}, lower_is_better=True)
    for sy, sx in _windows((h, w), window, stride):
        local = {p: d.score(sy, sx) for p, d in designs.items()}
        ref = local[estimate] if estimate is not None else min(local.values())
        values.append(((sy, sx), max(0.0, ref - min(local.values()))))
    return estimate, _paint((h, w), values)


# --- noise -------------------------------------------------------------------

def haar_hh(plane: np.ndarray) -> np.ndarray:
    """Finest diagonal Haar detail, one coefficient per 2x2 cell."""
    p = plane[: plane.shape[0] // 2 * 2, : plane.shape[1] // 2 * 2]
    return (p[0::2, 0::2] - p[0::2, 1::2] - p[1::2, 0::2] + p[1::2, 1::2]) / 2


def block_noise_stats(image: np.ndarray, block: int = NOISE_BLOCK):
    """Per-block, per-channel noise std (MAD of Haar HH) and mean intensity.

    Both arrays have shape ``(H // block, W // block, C)``.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[..., None]
    if block < 2 or block % 2:
        raise ValueError(f"block must be an even size >= 2, got {block}")
    half = block // 2
    nby, nbx = image.shape[0] // block, image.shape[1] // block
    crop = image[: nby * block, : nbx * block]
    est = np.zeros((nby, nbx, image.shape[2]))
    for c in range(image.shape[2]):
        hh = haar_hh(crop[..., c])
        cells = hh.reshape(nby, half, nbx, half).transpose(0, 2, 1, 3).reshape(nby, nbx, -1)
        est[..., c] = np.median(np.abs(cells), axis=-1) * MAD_TO_STD
    mean = crop.reshape(nby, block, nbx, block, -1).mean(axis=(1, 3))
    return est, mean


def block_noise(image: np.ndarray, block: int = NOISE_BLOCK) -> np.ndarray:
    """Noise std per non-overlapping block, averaged over channels.

    Shape ``(H // block, W // block)``.
    """
    return block_noise_stats(image, block)[0].mean(axis=-1)


def _robust_z(x: np.ndarray) -> np.ndarray:
    med = np.median(x)
    mad = np.median(np.abs(x - med)) * MAD_TO_STD
    return np.abs(x - med) / mad if mad > 0 else np.zeros_like(x)


def _tukey_line(x: np.ndarray, y: np.ndarray, iters: int = 15):
    """Robust non-negative fit ``y ~ a + b x`` judged on log residuals.

    Returns ``(log_residuals, scale)``.
    """
    X = np.stack([np.ones_like(x), x], axis=1)
    w = np.ones_like(y)
    logy = np.log(y)
    for _ in range(iters):
        coef = np.maximum(np.linalg.lstsq(X * w[:, None], y * w, rcond=None)[0], 0.0)
        fit = np.maximum(X @ coef, 1e-6)
        r = logy - np.log(fit)
        scale = np.median(np.abs(r)) * MAD_TO_STD + 1e-9
        t = r / (TUKEY_C * scale)
        w = np.where(np.abs(t) < 1, (1 - t * t) ** 2, 0.0) / fit
    return r, scale


@dataclass
class NoiseModelFit:
    """Image-wide noise level function fitted to block statistics."""

    gamma: float
    residuals: np.ndarray  # (nby, nbx, C) log-variance residual, NaN where unused
    scales: np.ndarray  # (C,)


def fit_noise_model(est: np.ndarray, mean: np.ndarray, gammas=GAMMA_GRID,
                    lo: float = 10.0, hi: float = 240.0) -> NoiseModelFit:
    """Fit a signal-dependent noise law seen through a gamma curve.

    For each candidate ``gamma`` block means are linearized as
    ``v = 255 (m/255)^gamma`` and stds are divided by the local slope of the
    tone curve; the linear-domain variance is then fitted per channel as
    ``a + b v``. The gamma with the tightest residuals wins. Blocks close to
    clipping, or without any measured noise, are ignored.
    """
    nc = est.shape[-1]
    best = None
    for g in gammas:
        res = np.full(est.shape, np.nan)
        scales = np.zeros(nc)
        for c in range(nc):
            m, e = mean[..., c], est[..., c]
            ok = (m > lo) & (m < hi) & (e > 0)
            if ok.sum() < 3:
                continue
            v = 255.0 * (m[ok] / 255.0) ** g
            s = e[ok] * g * (m[ok] / 255.0) ** (g - 1)
            r, scales[c] = _tukey_line(v, s * s)
            res[..., c][ok] = r
        total = scales.sum()
        if best is None or total < best[0]:
            best = (total, NoiseModelFit(float(g), res, scales))
    return best[1]


def noise_probe(image: np.ndarray, block: int = NOISE_BLOCK, conditioned: bool = True) -> np.ndarray:
    """Heatmap of blockwise noise inconsistency.

    With ``conditioned=False`` each block gets the absolute robust z-score
    of its noise std against the image-wide median. The default first
    explains away the intensity dependence of the noise with
    :func:`fit_noise_model`, then scores each block by the absolute robust
    z-score of its residual, averaged over the channels where it was used.
    Pixels beyond the last full block get 0.
    """
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape[:2]
    est, mean = block_noise_stats(image, block)
    if not conditioned:
        z = _robust_z(est.mean(axis=-1))
    else:
        fit = fit_noise_model(est, mean)
        acc = np.zeros(est.shape[:2])
        cnt = np.zeros(est.shape[:2])
        for c in range(est.shape[-1]):
            r = fit.residuals[..., c]
            ok = ~np.isnan(r)
            if ok.sum() < 3 or fit.scales[c] <= 0:
                continue
            acc[ok] += np.abs(r[ok] - np.median(r[ok])) / fit.scales[c]
            cnt[ok] += 1
        z = acc / np.maximum(cnt, 1)
    heat = np.zeros((h, w))
    up = np.repeat(np.repeat(z, block, 0), block, 1)
    heat[: up.shape[0], : up.shape[1]] = up
    return heat
