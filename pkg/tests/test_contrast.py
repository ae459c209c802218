import math

import numpy as np
import pytest

import evjoint.contrast as contrast
from evjoint.contrast import (
    ConfidenceMap,
    ContrastMap,
    hard_map,
    map_variance,
    smooth_map,
    variance_gradients,
    weighted_map,
)
from evjoint.events import SensorGeometry

G2 = SensorGeometry(2, 2)
G16 = SensorGeometry(16, 16)


def brute_count(positions, geometry):
    out = np.zeros(geometry.shape)
    for x, y in positions:
        j, i = math.floor(x), math.floor(y)
        if 0 <= j < geometry.width and 0 <= i < geometry.height:
            out[i, j] += 1
    return out


class TestHardMap:
    def test_two_positions(self):
        m = hard_map(np.array([[0.2, 0.7], [0.9, 0.1]]), G2)
        assert m.values[0, 0] == 2
        assert m.values.sum() == 2

    def test_empty(self):
        assert hard_map(np.zeros((0, 2)), G2).values.sum() == 0

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        pos = rng.uniform(-4, 20, (1000, 2))
        m = hard_map(pos, G16)
        assert np.array_equal(m.values, brute_count(pos, G16))
        inside = ((pos >= 0) & (pos < 16)).all(axis=1)
        assert m.values.sum() == inside.sum()


class TestSmoothMap:
    def test_pixel_center_values(self):
        g = SensorGeometry(9, 9)
        m = smooth_map(np.array([[4.5, 4.5]]), g, sigma=1.0)
        assert m.values[4, 4] == pytest.approx(1.0 / (2 * math.pi), abs=1e-12)
        assert m.values[4, 5] == pytest.approx(math.exp(-0.5) / (2 * math.pi), abs=1e-12)
        assert m.values[5, 4] == pytest.approx(math.exp(-0.5) / (2 * math.pi), abs=1e-12)

    def test_empty(self):
        assert smooth_map(np.zeros((0, 2)), G16).values.sum() == 0

    def test_mass_bounded_by_count(self):
        rng = np.random.default_rng(0)
        pos = rng.uniform(0, 16, (500, 2))
        m = smooth_map(pos, G16)
        assert m.values.min() >= 0
        assert m.values.sum() <= 500.0

    def test_integer_shift_equivariance(self):
        g = SensorGeometry(32, 32)
        rng = np.random.default_rng(1)
        pos = rng.uniform(9, 20, (40, 2))  # well clear of the borders
        base = smooth_map(pos, g).values
        shifted = smooth_map(pos + np.array([1.0, 0.0]), g).values
        assert np.max(np.abs(shifted[:, 1:] - base[:, :-1])) < 1e-9

    def test_sigma_validation(self):
        with pytest.raises(ValueError):
            smooth_map(np.zeros((1, 2)), G16, sigma=0.0)

    def test_narrow_sigma_approaches_hard_map(self):
        pos = np.array([[5.3, 7.6]])
        m = smooth_map(pos, G16, sigma=0.05)
        hard = hard_map(pos, G16)
        assert np.unravel_index(m.values.argmax(), m.values.shape) == (7, 5)
        assert hard.values[7, 5] == 1

    def test_numpy_fallback_matches_numba(self, monkeypatch):
        if not contrast._HAVE_NUMBA:
            pytest.skip("numba not installed")
        rng = np.random.default_rng(2)
        pos = rng.uniform(-2, 18, (300, 2))
        coef = rng.normal(size=G16.shape)
        fast = contrast._splat(pos, G16, 1.0)
        fast_grad = fast.position_gradient(coef)
        monkeypatch.setattr(contrast, "_HAVE_NUMBA", False)
        slow = contrast._splat(pos, G16, 1.0)
        slow_grad = slow.position_gradient(coef)
        assert np.allclose(fast.values, slow.values, atol=1e-13)
        assert np.allclose(fast_grad, slow_grad, atol=1e-13)


class TestWeightedMap:
    def test_saturated_weights_identity(self):
        rng = np.random.default_rng(0)
        m = ContrastMap(rng.uniform(0, 5, G16.shape), G16)
        conf = ConfidenceMap(np.full(G16.shape, 30.0))
        assert np.allclose(weighted_map(m, conf).values, m.values, rtol=1e-10)

    def test_zero_logits_halve(self):
        m = ContrastMap(np.full(G2.shape, 2.0), G2)
        conf = ConfidenceMap.zeros(G2)
        assert np.allclose(weighted_map(m, conf).values, 1.0)

    def test_matches_elementwise_oracle(self):
        rng = np.random.default_rng(3)
        vals = rng.uniform(0, 5, G16.shape)
        logits = rng.normal(size=G16.shape)
        got = weighted_map(ContrastMap(vals, G16), ConfidenceMap(logits)).values
        oracle = np.empty(G16.shape)
        for i in range(16):
            for j in range(16):
                oracle[i, j] = vals[i, j] / (1.0 + math.exp(-logits[i, j]))
        assert np.array_equal(got, oracle) or np.allclose(got, oracle, atol=1e-15)

    def test_shape_mismatch(self):
        m = ContrastMap(np.zeros(G2.shape), G2)
        with pytest.raises(ValueError):
            weighted_map(m, ConfidenceMap.zeros(G16))


class TestVariance:
    def test_constant_map_zero(self):
        assert map_variance(np.full((4, 4), 3.7)) == 0.0

    def test_hand_evaluated(self):
        assert map_variance(np.array([[4.0, 0.0], [0.0, 0.0]])) == pytest.approx(3.0)

    def test_shift_invariance(self):
        rng = np.random.default_rng(4)
        m = rng.uniform(0, 5, (8, 8))
        assert map_variance(m + 11.5) == pytest.approx(map_variance(m), rel=1e-9)

    def test_nonnegative_and_zero_iff_constant(self):
        rng = np.random.default_rng(5)
        m = rng.uniform(0, 5, (8, 8))
        assert map_variance(m) > 0


class TestVarianceGradients:
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        g = SensorGeometry(12, 12)
        n = 60
        pos = rng.uniform(0, 12, (n, 2))
        logits = rng.normal(0, 1.5, g.shape)
        conf = ConfidenceMap(logits)
        dpos, dlog = variance_gradients(pos, conf, g, sigma=1.0)

        def value(p, lg):
            return map_variance(weighted_map(smooth_map(p, g), ConfidenceMap(lg)))

        h = 1e-4
        for k in rng.choice(n, 6, replace=False):
            for ax in range(2):
                pp = pos.copy()
                pp[k, ax] += h
                pm = pos.copy()
                pm[k, ax] -= h
                fd = (value(pp, logits) - value(pm, logits)) / (2 * h)
                denom = max(abs(fd), abs(dpos[k, ax]), 1e-10)
                assert abs(fd - dpos[k, ax]) / denom < 1e-4
        for _ in range(6):
            i, j = rng.integers(0, 12, 2)
            lp = logits.copy()
            lp[i, j] += h
            lm = logits.copy()
            lm[i, j] -= h
            fd = (value(pos, lp) - value(pos, lm)) / (2 * h)
            denom = max(abs(fd), abs(dlog[i, j]), 1e-10)
            assert abs(fd - dlog[i, j]) / denom < 1e-4

    def test_zero_events(self):
        dpos, dlog = variance_gradients(np.zeros((0, 2)), ConfidenceMap.zeros(G16), G16)
        assert dpos.shape == (0, 2)
        assert np.all(dlog == 0.0)

    def test_sigma_validation(self):
        with pytest.raises(ValueError):
            variance_gradients(np.zeros((1, 2)), ConfidenceMap.zeros(G16), G16, sigma=-1.0)


def test_alignment_raises_smooth_variance_on_synthetic_edge():
    from evjoint.synth import MultiEdge, SceneSpec, generate
    from evjoint.warp import MotionParams, warp

    g = SensorGeometry(64, 64)
    spec = SceneSpec(g, MultiEdge(8.0), MotionParams.translation(30.0, -10.0), 0.1)
    window, _, theta_gt = generate(spec, seed=0)
    raw = map_variance(smooth_map(window.positions, g))
    aligned = map_variance(smooth_map(warp(window, theta_gt).positions, g))
    assert aligned > raw
