"""Forgery masks: endomasks from segmentation, exomasks by size-rank pairing."""

from __future__ import annotations

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

log = logging.getLogger(__name__)

MAX_MASK_FRACTION = 0.5
DEFAULT_MIN_FRACTION = 0.01


class NoAdmissibleRegion(ValueError):
    """No segmentation region satisfies the mask size bounds."""


class AssignmentError(ValueError):
    pass


# --- segmentation ------------------------------------------------------------

def _sorted_edges(image: np.ndarray):
    """4-neighbour edges sorted by (weight, y, x, orientation)."""
    h, w = image.shape[:2]
    idx = np.arange(h * w).reshape(h, w)
    wh = np.sqrt(((image[:, 1:] - image[:, :-1]) ** 2).sum(-1)).ravel()
    wv = np.sqrt(((image[1:] - image[:-1]) ** 2).sum(-1)).ravel()
    a = np.concatenate([idx[:, :-1].ravel(), idx[:-1].ravel()])
    b = np.concatenate([idx[:, 1:].ravel(), idx[1:].ravel()])
    weight = np.concatenate([wh, wv])
    orient = np.concatenate([np.zeros(wh.size, np.int8), np.ones(wv.size, np.int8)])
    ys, xs = np.divmod(a, w)
    order = np.lexsort((orient, xs, ys, weight))
    return a[order].tolist(), b[order].tolist(), weight[order].tolist()


def segment(image: np.ndarray, scale_k: float = 300.0, min_region: Optional[int] = None,
            sigma: float = 0.8) -> np.ndarray:
    """Greedy graph-based segmentation (Felzenszwalb-Huttenlocher style).

    Returns an ``(H, W)`` int array of labels ``0..K-1`` numbered in raster
    order of first appearance. Regions smaller than ``min_region`` pixels
    (default: 0.5% of the image) are merged into their most similar neighbour.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[..., None]
    h, w = image.shape[:2]
    n = h * w
    if min_region is None:
        min_region = max(1, n // 200)
    if sigma > 0:
        image = ndimage.gaussian_filter(image, (sigma, sigma, 0), mode="mirror")
    ea, eb, ew = _sorted_edges(image)

    parent = list(range(n))
    size = [1] * n
    thresh = [float(scale_k)] * n

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(ra, rb):
        if size[ra] < size[rb]:
            ra, rb = rb, ra
        parent[rb] = ra
        size[ra] += size[rb]
        return ra

    for a, b, wgt in zip(ea, eb, ew):
        ra, rb = find(a), find(b)
        if ra != rb and wgt <= thresh[ra] and wgt <= thresh[rb]:
            r = union(ra, rb)
            thresh[r] = wgt + scale_k / size[r]

    for a, b in zip(ea, eb):
        ra, rb = find(a), find(b)
        if ra != rb and (size[ra] < min_region or size[rb] < min_region):
            union(ra, rb)

    roots = np.fromiter((find(i) for i in range(n)), dtype=np.int64, count=n)
    _, first, inverse = np.unique(roots, return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first)] = np.arange(first.size)
    return rank[inverse].reshape(h, w)


# --- endomask ----------------------------------------------------------------

def pick_endomask(labels: np.ndarray, rng: np.random.Generator,
                  min_frac: float = DEFAULT_MIN_FRACTION, max_retries: int = 1000) -> np.ndarray:
    """Pick one segmentation region by sampling pixels until its size fits.

    A region is admissible when its area fraction lies in
    ``[min_frac, 0.5)``. After ``max_retries`` rejections the largest
    admissible region is used.
    """
    labels = np.asarray(labels)
    total = labels.size
    areas = np.bincount(labels.ravel())
    frac = areas / total
    admissible = (frac >= min_frac) & (frac < MAX_MASK_FRACTION)
    if not admissible.any():
        raise NoAdmissibleRegion(
            f"no region with area fraction in [{min_frac}, {MAX_MASK_FRACTION}) "
            f"among {areas.size} regions")
    flat = labels.ravel()
    for _ in range(max_retries):
        label = flat[int(rng.integers(total))]
        if admissible[label]:
            break
    else:
        label = int(np.argmax(np.where(admissible, areas, -1)))
        log.info("endomask: retries exhausted, falling back to region %d", label)
    return (labels == label).astype(np.uint8)


# --- exomask -----------------------------------------------------------------

def assign_exomasks(sizes: Sequence[Tuple[str, int]]) -> List[Tuple[str, str]]:
    """Pair images by endomask size rank.

    ``sizes`` holds ``(image_id, endomask_area)``. Returns
    ``(image_id, exomask_source_image_id)`` in size-rank order: ranks
    (0,1), (2,3), ... swap masks; with an odd count the last three images
    rotate (each takes the next one's mask, the last takes the first's).
    """
    if len(sizes) < 2:
        raise AssignmentError("exomask assignment needs at least two images")
    order = [image_id for image_id, _ in sorted(sizes, key=lambda s: (s[1], s[0]))]
    if len({*order}) != len(order):
        raise AssignmentError("duplicate image ids")
    n = len(order)
    pairs_end = n - 3 if n % 2 else n
    out = []
    for i in range(0, pairs_end, 2):
        a, b = order[i], order[i + 1]
        out += [(a, b), (b, a)]
    if n % 2:
        a, b, c = order[-3:]
        out += [(a, b), (b, c), (c, a)]
    return out


def resize_mask(mask: np.ndarray, shape: Tuple[int, int]) -> np.ndarray:
    """Nearest-neighbour resize of a binary mask, re-binarized."""
    mask = np.asarray(mask)
    if mask.shape == tuple(shape):
        return (mask != 0).astype(np.uint8)
    h, w = shape
    ys = np.minimum(((np.arange(h) + 0.5) * mask.shape[0] / h).astype(np.int64), mask.shape[0] - 1)
    xs = np.minimum(((np.arange(w) + 0.5) * mask.shape[1] / w).astype(np.int64), mask.shape[1] - 1)
    return (mask[ys[:, None], xs[None, :]] != 0).astype(np.uint8)


# --- content alignment -------------------------------------------------------

def contour(mask: np.ndarray) -> np.ndarray:
    """Inner 4-connected boundary pixels of a binary mask."""
    m = np.asarray(mask) != 0
    return m & ~ndimage.binary_erosion(m, border_value=1)


def boundary_alignment(image: np.ndarray, mask: np.ndarray) -> float:
    """Mean image-gradient magnitude along the mask contour."""
    image = np.asarray(image, dtype=np.float64)
    gray = image.mean(-1) if image.ndim == 3 else image
    grad = np.hypot(ndimage.sobel(gray, 0), ndimage.sobel(gray, 1))
    c = contour(mask)
    return float(grad[c].mean()) if c.any() else 0.0


def alignment_pvalue(image: np.ndarray, mask: np.ndarray, rng: np.random.Generator,
                     n_shifts: int = 100) -> float:
    """Fraction of random cyclic translations whose contour aligns at least as well."""
    score = boundary_alignment(image, mask)
    h, w = mask.shape
    hits = 0
    for _ in range(n_shifts):
        dy, dx = int(rng.integers(h)), int(rng.integers(w))
        hits += boundary_alignment(image, np.roll(mask, (dy, dx), (0, 1))) >= score
    return (hits + 1) / (n_shifts + 1)
