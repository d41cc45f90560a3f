import numpy as np
import pytest
from scipy import ndimage

from trace_forge import masks
from trace_forge.synthetic import synthetic_scene


def _same_partition(a, b):
    pairs = set(zip(a.ravel().tolist(), b.ravel().tolist()))
    return len(pairs) == len(np.unique(a)) == len(np.unique(b))


def test_half_planes_two_regions():
    img = np.zeros((40, 40, 3))
    img[:, :20] = 50
    img[:, 20:] = 200
    labels = masks.segment(img, min_region=100)
    # oracle: connected components of the pixels on each side of the strong gradient
    grad = np.abs(np.diff(img[..., 0], axis=1)) > 0
    assert grad.sum() == 40
    oracle, n = ndimage.label(img[..., 0] > 100)
    oracle = np.where(img[..., 0] > 100, oracle, 0)
    assert labels.max() + 1 == 2
    assert _same_partition(labels, oracle)


def test_constant_single_region():
    assert np.all(masks.segment(np.full((20, 30, 3), 9.0)) == 0)


def test_labels_contiguous_and_connected(scene):
    labels = masks.segment(scene)
    k = labels.max() + 1
    assert set(np.unique(labels)) == set(range(k))
    for r in range(k):
        _, n = ndimage.label(labels == r)  # 4-connectivity by default
        assert n == 1
    # numbering follows raster order of first appearance
    firsts = [np.flatnonzero(labels.ravel() == r)[0] for r in range(k)]
    assert firsts == sorted(firsts)


def test_segment_deterministic(scene):
    np.testing.assert_array_equal(masks.segment(scene), masks.segment(scene.copy()))


def test_min_region_respected(scene):
    labels = masks.segment(scene, min_region=200)
    assert np.bincount(labels.ravel()).min() >= 200


def _three_regions():
    labels = np.zeros((10, 100), dtype=int)
    labels[:, 10:40] = 1
    labels[:, 40:] = 2
    return labels  # 10%, 30%, 60%


def test_endomask_single_admissible_region():
    labels = np.zeros((10, 10), dtype=int)
    labels[:3] = 1  # 30% region, the rest is 70%
    for seed in range(20):
        m = masks.pick_endomask(labels, np.random.default_rng(seed))
        np.testing.assert_array_equal(m, (labels == 1).astype(np.uint8))


def test_endomask_frequencies_proportional_to_area():
    labels = _three_regions()
    rng = np.random.default_rng(0)
    picks = [int(masks.pick_endomask(labels, rng).sum()) for _ in range(1000)]
    assert set(picks) <= {100, 300}
    # rejection sampling picks an admissible region with probability proportional to area
    assert abs(picks.count(100) / 1000 - 0.25) < 0.05


def test_endomask_min_fraction_and_failure():
    labels = np.zeros((10, 10), dtype=int)
    labels[0, 0] = 1  # 1% speck, rest 99%
    with pytest.raises(masks.NoAdmissibleRegion):
        masks.pick_endomask(labels, np.random.default_rng(0), min_frac=0.05)


def test_endomask_fallback_after_retries():
    labels = np.zeros((10, 100), dtype=int)
    labels[0, :20] = 1  # 2% admissible
    labels[0, 20:40] = 2  # 2% admissible
    m = masks.pick_endomask(labels, np.random.default_rng(0), max_retries=0)
    assert m.sum() == 20 and m[0, 0] == 1  # largest admissible, lowest label on ties


def test_exomask_two_images_swap():
    assert sorted(masks.assign_exomasks([("a", 10), ("b", 30)])) == [("a", "b"), ("b", "a")]


def test_exomask_three_cycle():
    out = dict(masks.assign_exomasks([("five", 5), ("one", 1), ("three", 3)]))
    # order by size: one, three, five; each takes the next one's mask, the last the first's
    assert out == {"one": "three", "three": "five", "five": "one"}


def test_exomask_errors():
    with pytest.raises(masks.AssignmentError):
        masks.assign_exomasks([("a", 3)])
    with pytest.raises(masks.AssignmentError):
        masks.assign_exomasks([("a", 3), ("a", 4)])


@pytest.mark.parametrize("n", [2, 3, 4, 7, 10])
def test_exomask_is_a_derangement_of_neighbours(n):
    rng = np.random.default_rng(n)
    sizes = [(f"im{i}", int(a)) for i, a in enumerate(rng.integers(1, 50, size=n))]
    out = dict(masks.assign_exomasks(sizes))
    assert sorted(out) == sorted(out.values()) == sorted(i for i, _ in sizes)
    assert all(k != v for k, v in out.items())
    rank = {iid: r for r, (iid, _) in enumerate(sorted(sizes, key=lambda s: (s[1], s[0])))}
    for k, v in out.items():
        assert abs(rank[k] - rank[v]) <= (2 if n % 2 and rank[k] >= n - 3 else 1)


def test_resize_mask_nearest():
    m = np.array([[1, 0], [0, 1]], dtype=np.uint8)
    out = masks.resize_mask(m, (4, 4))
    np.testing.assert_array_equal(out, np.kron(m, np.ones((2, 2), dtype=np.uint8)))
    assert set(np.unique(masks.resize_mask(m * 200, (3, 5)))) <= {0, 1}


def test_contour_of_square():
    m = np.zeros((6, 6), dtype=np.uint8)
    m[1:5, 1:5] = 1
    assert masks.contour(m).sum() == 12


def _endomask(seed):
    img = synthetic_scene(np.random.default_rng(seed), size=(128, 128))
    return img, masks.pick_endomask(masks.segment(img), np.random.default_rng(0))


@pytest.mark.parametrize("seed", range(40, 46))
def test_exomask_independent_of_content(seed):
    a, _ = _endomask(seed)
    _, endo_b = _endomask(seed + 100)
    assert masks.alignment_pvalue(a, endo_b, np.random.default_rng(1)) > 0.05


def test_endomask_can_follow_content():
    a, endo_a = _endomask(41)
    assert masks.alignment_pvalue(a, endo_a, np.random.default_rng(1)) < 0.05
