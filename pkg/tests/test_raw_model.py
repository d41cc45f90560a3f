import numpy as np
import pytest
from scipy import stats

from trace_forge import raw_model, tone
from trace_forge.cfa import CFAPattern
from trace_forge.raster_io import RawPlane
from trace_forge.raw_model import NoiseParams


def test_half_sample_constant():
    out = raw_model.half_sample(RawPlane(np.full((6, 8), 42.0)), CFAPattern(0, 0))
    assert out.shape == (3, 4, 3)
    assert np.all(out == 42.0)


def test_half_sample_rggb_quad():
    raw = RawPlane(np.array([[10.0, 20.0], [40.0, 30.0]]), CFAPattern(0, 0))
    assert raw_model.half_sample(raw).tolist() == [[[10.0, 30.0, 30.0]]]


def test_half_sample_green_checkerboard():
    data = np.zeros((4, 4))
    data[0::2, 1::2] = 50.0  # one green per quad set to 50, the other 0
    out = raw_model.half_sample(RawPlane(data), CFAPattern(0, 0))
    assert np.all(out[..., 1] == 25.0)


def test_half_sample_needs_layout():
    with pytest.raises(raw_model.MissingLayoutError):
        raw_model.half_sample(RawPlane(np.zeros((2, 2))))


def test_half_sample_drops_odd_edge_and_commutes_with_shift(rng):
    data = rng.uniform(0, 200, size=(7, 9))
    a = raw_model.half_sample(RawPlane(data), CFAPattern(1, 1))
    b = raw_model.half_sample(RawPlane(data + 13.0), CFAPattern(1, 1))
    assert a.shape == (3, 4, 3)
    np.testing.assert_allclose(b, a + 13.0)


def test_zero_noise_is_identity(rng):
    plane = rng.uniform(0, 255, size=(8, 8))
    np.testing.assert_array_equal(raw_model.add_raw_noise(plane, NoiseParams(0, 0), rng), plane)


@pytest.mark.parametrize("u, a, b, tol", [(100.0, 2.0, 6.0, 0.02), (0.0, 2.0, 0.0, 0.03)])
def test_noise_variance_law(u, a, b, tol):
    plane = np.full(100_000, u)
    out = raw_model.add_raw_noise(plane, NoiseParams(a, b), np.random.default_rng(0))
    assert abs(out.var() / (a + b * u) - 1) < tol


def test_noise_is_reproducible():
    plane = np.full((16, 16), 80.0)
    a = raw_model.add_raw_noise(plane, NoiseParams(1, 3), np.random.default_rng(9))
    b = raw_model.add_raw_noise(plane, NoiseParams(1, 3), np.random.default_rng(9))
    np.testing.assert_array_equal(a, b)


def test_noise_params_validation():
    with pytest.raises(ValueError):
        NoiseParams(-1.0, 0.0)
    p = NoiseParams(0.5, 2.0)
    assert NoiseParams.from_json(p.to_json()) == p


def test_noise_pair_ordering_and_no_crossing():
    rng = np.random.default_rng(3)
    u = np.linspace(0.01, 255, 50)
    for _ in range(500):
        p0, p1 = raw_model.sample_noise_pair(rng)
        assert (p1.a - p0.a) * (p1.b - p0.b) > 0
        d = (p1.a + p1.b * u) - (p0.a + p0.b * u)
        assert np.all(d > 0) or np.all(d < 0)


def _brute_force_pairs(rng, n):
    """Independent uniform draws, kept when the ordering condition holds."""
    out = []
    while len(out) < n:
        a0, a1 = rng.uniform(0, 2, 2)
        b0, b1 = rng.uniform(0, 6, 2)
        if (a1 - a0) * (b1 - b0) > 0:
            out.append(a0)
    return np.array(out)


def test_noise_pair_marginal_is_uniform():
    rng = np.random.default_rng(11)
    a0 = np.array([raw_model.sample_noise_pair(rng)[0].a for _ in range(10_000)])
    assert stats.kstest(a0, stats.uniform(0, 2).cdf).pvalue > 0.01
    oracle = _brute_force_pairs(np.random.default_rng(12), 10_000)
    assert stats.ks_2samp(a0, oracle).pvalue > 0.01


def test_noise_curve_zero_when_clean(rng):
    ref = rng.uniform(0, 255, size=(32, 32, 3))
    curve = raw_model.measure_noise_curve(ref, ref)
    assert np.nanmax(curve.std) == 0.0


def test_noise_curve_recovers_law():
    ramp = np.tile(np.linspace(0, 255, 1024), (1000, 1))
    noisy = raw_model.add_raw_noise(ramp, NoiseParams(2, 6), np.random.default_rng(4))
    curve = raw_model.measure_noise_curve(noisy, ramp, nbins=64)
    assert curve.reliable.all()
    var = curve.std[:, 0] ** 2
    # weight each bin by the inverse variance of its variance estimate
    w = np.sqrt(curve.counts[:, 0]) / var
    slope, intercept = np.polyfit(curve.levels[:, 0], var, 1, w=w)
    assert abs(slope / 6 - 1) < 0.05
    assert abs(intercept - 2) < 0.3


def test_noise_curve_unreliable_bins_flagged():
    ref = np.concatenate([np.full(50, 10.0), np.full(500, 200.0)])[None, :]
    curve = raw_model.measure_noise_curve(ref + 1, ref, nbins=4, min_count=100)
    assert curve.reliable[:, 0].tolist() == [False, False, False, True]


def test_white_balance_scales_noise_std():
    clean = np.full((300, 300, 3), 60.0)
    noisy = raw_model.add_raw_noise(clean, NoiseParams(1, 2), np.random.default_rng(2))
    gains = (1.8, 1.0, 1.3)
    before = raw_model.measure_noise_curve(noisy, clean, nbins=1)
    after = raw_model.measure_noise_curve(tone.white_balance(noisy, gains),
                                          tone.white_balance(clean, gains), nbins=1)
    ratio = after.std[0] / before.std[0]
    np.testing.assert_allclose(ratio, gains, rtol=0.05)
