"""Seeded synthetic reference scenes.

Scenes are a smooth coloured backdrop with a handful of flat-ish geometric
objects on top, every surface carrying mild fine-grained texture so that
demosaicing and JPEG leave measurable traces.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage


def _smooth_noise(rng, shape, sigma, channels=3):
    field = rng.standard_normal((*shape, channels))
    field = ndimage.gaussian_filter(field, (sigma, sigma, 0), mode="wrap")
    return field / (field.std() + 1e-12)


def _shape_mask(rng, h, w):
    yy, xx = np.mgrid[0:h, 0:w]
    cy, cx = rng.uniform(0.1, 0.9) * h, rng.uniform(0.1, 0.9) * w
    kind = int(rng.integers(3))
    if kind == 0:
        ry, rx = rng.uniform(0.06, 0.25, size=2) * (h, w)
        theta = rng.uniform(0, np.pi)
        c, s = np.cos(theta), np.sin(theta)
        u = ((xx - cx) * c + (yy - cy) * s) / rx
        v = (-(xx - cx) * s + (yy - cy) * c) / ry
        return u * u + v * v <= 1
    if kind == 1:
        hh, hw = rng.uniform(0.06, 0.22, size=2) * (h, w)
        return (np.abs(yy - cy) <= hh) & (np.abs(xx - cx) <= hw)
    # star-ish polygon from a radial profile
    r0 = rng.uniform(0.08, 0.22) * min(h, w)
    harmonics = rng.uniform(-0.25, 0.25, size=3)
    phases = rng.uniform(0, 2 * np.pi, size=3)
    ang = np.arctan2(yy - cy, xx - cx)
    radius = r0 * (1 + sum(a * np.cos((k + 2) * ang + p)
                           for k, (a, p) in enumerate(zip(harmonics, phases))))
    return np.hypot(yy - cy, xx - cx) <= radius


def synthetic_scene(rng: np.random.Generator, size=(512, 512), n_objects=None) -> np.ndarray:
    """Clean ``(H, W, 3)`` reference in [0, 255]."""
    h, w = size
    base = rng.uniform(60, 190, size=3)
    img = base + 35 * _smooth_noise(rng, (h, w), sigma=min(h, w) / 10)
    if n_objects is None:
        n_objects = int(rng.integers(4, 8))
    for _ in range(n_objects):
        m = _shape_mask(rng, h, w)
        if not m.any():
            continue
        colour = rng.uniform(20, 235, size=3)
        shade = 12 * _smooth_noise(rng, (h, w), sigma=min(h, w) / 16)
        img = np.where(m[..., None], colour + shade, img)
    texture = _smooth_noise(rng, (h, w), sigma=0.7)
    img = img + 6 * texture
    return np.clip(img, 2.0, 250.0)
