"""Loss function tests: values from hand-worked cases, gradients from FD."""

import numpy as np
import pytest

from evsplat.core import DataError
from evsplat.event_sim import LOG_EPS, EventBins
from evsplat.losses import (
    EventMaps,
    LossWeights,
    average_latents,
    blur_loss,
    dssim,
    estimated_event_map,
    event_loss,
    l1_loss,
    measured_event_map,
    ssim,
    total_loss,
)


def _bins(counts):
    return EventBins(counts=np.asarray(counts, dtype=np.float64), window=(0.0, 1.0))


class TestAverageLatents:
    def test_identical_renders_bit_exact(self):
        r = np.random.default_rng(0).uniform(size=(8, 8, 3))
        out = average_latents([r, r.copy(), r.copy(), r.copy(), r.copy()])
        np.testing.assert_array_equal(out, r)

    def test_mean_value(self):
        a = np.zeros((4, 4, 3))
        b = np.full((4, 4, 3), 0.6)
        np.testing.assert_allclose(average_latents([a, b, b]), 0.4, atol=1e-15)

    def test_gradient_distributes_uniformly(self):
        # d mean / d input_i = 1/n, checked by finite differences on a scalar probe
        rng = np.random.default_rng(1)
        renders = [rng.uniform(size=(4, 4, 3)) for _ in range(3)]
        w = rng.normal(size=(4, 4, 3))
        h = 1e-6
        for i in range(3):
            bumped = [r.copy() for r in renders]
            bumped[i][2, 2, 1] += h
            fd = ((average_latents(bumped) - average_latents(renders)) * w).sum() / h
            assert fd == pytest.approx(w[2, 2, 1] / 3, rel=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(DataError):
            average_latents([np.zeros((4, 4, 3)), np.zeros((4, 5, 3))])


class TestDssim:
    def test_equal_images_zero(self):
        img = np.random.default_rng(2).uniform(size=(16, 16, 3))
        v, g = dssim(img, img.copy())
        assert v == 0.0

    def test_inverted_textured_image_in_range(self):
        rng = np.random.default_rng(3)
        a = rng.uniform(size=(16, 16, 3))
        v, _ = dssim(a, 1.0 - a)
        assert 0.0 < v <= 1.0

    def test_constant_case_matches_scalar_formula(self):
        mu_a, mu_b = 0.5, 0.55
        a = np.full((16, 16, 3), mu_a)
        b = np.full((16, 16, 3), mu_b)
        c1, c2 = 0.01**2, 0.03**2
        s = (2 * mu_a * mu_b + c1) * c2 / ((mu_a**2 + mu_b**2 + c1) * c2)
        v, _ = dssim(a, b)
        assert v == pytest.approx(0.5 * (1 - s), abs=1e-12)

    def test_gradient_matches_fd(self):
        rng = np.random.default_rng(4)
        a = rng.uniform(0.1, 0.9, (16, 16, 3))
        b = rng.uniform(0.1, 0.9, (16, 16, 3))
        _, g = dssim(a, b)
        h = 1e-6
        for _ in range(40):
            i, j, c = rng.integers(16), rng.integers(16), rng.integers(3)
            ap, am = a.copy(), a.copy()
            ap[i, j, c] += h
            am[i, j, c] -= h
            fd = (dssim(ap, b)[0] - dssim(am, b)[0]) / (2 * h)
            an = g[i, j, c]
            if abs(fd - an) < 1e-8:
                continue
            assert abs(fd - an) / max(abs(fd), abs(an)) < 1e-4

    def test_small_image_fallback(self):
        rng = np.random.default_rng(5)
        a = rng.uniform(size=(8, 8, 3))
        b = rng.uniform(size=(8, 8, 3))
        v, g = dssim(a, b)
        assert 0.0 <= v <= 1.0
        assert g.shape == a.shape

    def test_ssim_symmetry_and_range(self):
        rng = np.random.default_rng(6)
        a = rng.uniform(size=(20, 20, 3))
        b = rng.uniform(size=(20, 20, 3))
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-14)
        assert -1.0 <= ssim(a, b) <= 1.0
        assert ssim(a, a) == 1.0


class TestBlurLoss:
    def test_equal_inputs_zero(self):
        img = np.random.default_rng(7).uniform(size=(16, 16, 3))
        v, _ = blur_loss(img, img.copy(), LossWeights(0.2, 0.0))
        assert v == 0.0

    def test_pure_l1_constant_offset(self):
        est = np.full((8, 8, 3), 0.6)
        obs = np.full((8, 8, 3), 0.5)
        v, g = blur_loss(est, obs, LossWeights(0.0, 0.0))
        assert v == pytest.approx(0.1)
        np.testing.assert_allclose(g, 1.0 / est.size)

    def test_weighted_combination(self):
        # lambda=0.2 with L1=0.1 and D-SSIM=0.05 gives 0.09
        l1, ds = 0.1, 0.05
        lam = 0.2
        assert (1 - lam) * l1 + lam * ds == pytest.approx(0.09)

    def test_gradient_matches_fd(self):
        rng = np.random.default_rng(8)
        est = rng.uniform(0.1, 0.9, (16, 16, 3))
        obs = rng.uniform(0.1, 0.9, (16, 16, 3))
        w = LossWeights(0.2, 0.0)
        _, g = blur_loss(est, obs, w)
        h = 1e-6
        for _ in range(40):
            i, j, c = rng.integers(16), rng.integers(16), rng.integers(3)
            ep, em = est.copy(), est.copy()
            ep[i, j, c] += h
            em[i, j, c] -= h
            fd = (blur_loss(ep, obs, w)[0] - blur_loss(em, obs, w)[0]) / (2 * h)
            an = g[i, j, c]
            if abs(fd - an) < 1e-8:
                continue
            assert abs(fd - an) / max(abs(fd), abs(an)) < 1e-4


class TestEventMaps:
    def test_measured_zero_bins(self):
        np.testing.assert_array_equal(measured_event_map(_bins(np.zeros((3, 4, 4))), 0.25), 0.0)

    def test_measured_scales_counts(self):
        counts = np.zeros((2, 2, 2))
        counts[0, 1, 1] = 2.0
        counts[1, 1, 1] = 1.0
        m = measured_event_map(_bins(counts), 0.25)
        assert m[1, 1] == pytest.approx(0.75)

    def test_measured_telescopes(self):
        rng = np.random.default_rng(9)
        counts = rng.integers(-3, 4, (5, 6, 6)).astype(float)
        fine = measured_event_map(_bins(counts), 0.3)
        coarse = measured_event_map(_bins(counts.sum(axis=0, keepdims=True)), 0.3)
        np.testing.assert_allclose(fine, coarse, atol=1e-12)

    def test_estimated_equal_frames_zero(self):
        img = np.random.default_rng(10).uniform(size=(8, 8, 3))
        emap, _, _ = estimated_event_map(img, img.copy())
        np.testing.assert_array_equal(emap, 0.0)

    def test_estimated_doubling_is_log_two(self):
        lo = np.full((4, 4, 3), 0.3)
        hi = 2.0 * lo
        emap, _, _ = estimated_event_map(lo, hi)
        # eps shifts the exact ratio slightly
        np.testing.assert_allclose(emap, np.log((0.6 + LOG_EPS) / (0.3 + LOG_EPS)), atol=1e-12)
        assert np.abs(emap - np.log(2)).max() < 5e-3

    def test_estimated_gradient_is_reciprocal_luminance(self):
        rng = np.random.default_rng(11)
        first = rng.uniform(0.1, 0.9, (6, 6))
        last = rng.uniform(0.1, 0.9, (6, 6))
        _, jf, jl = estimated_event_map(first, last)
        np.testing.assert_allclose(jl, 1.0 / (last + LOG_EPS), atol=1e-12)
        np.testing.assert_allclose(jf, -1.0 / (first + LOG_EPS), atol=1e-12)


class TestEventLoss:
    def test_equal_maps_zero(self):
        m = np.random.default_rng(12).normal(size=(8, 8))
        v, _ = event_loss(EventMaps(m, m.copy()))
        assert v == 0.0

    def test_constant_offset(self):
        m = np.random.default_rng(13).normal(size=(8, 8))
        v, g = event_loss(EventMaps(m, m + 0.2))
        assert v == pytest.approx(0.2)
        np.testing.assert_allclose(g, 1.0 / m.size)

    def test_shift_invariance(self):
        rng = np.random.default_rng(14)
        e = rng.normal(size=(8, 8))
        est = rng.normal(size=(8, 8))
        v1, _ = event_loss(EventMaps(e, est))
        v2, _ = event_loss(EventMaps(e + 0.7, est + 0.7))
        assert v1 == pytest.approx(v2, abs=1e-12)

    def test_gradient_matches_fd(self):
        rng = np.random.default_rng(15)
        e = rng.normal(size=(16, 16))
        est = rng.normal(size=(16, 16))
        _, g = event_loss(EventMaps(e, est))
        h = 1e-6
        for _ in range(30):
            i, j = rng.integers(16), rng.integers(16)
            ep, em = est.copy(), est.copy()
            ep[i, j] += h
            em[i, j] -= h
            fd = (event_loss(EventMaps(e, ep))[0] - event_loss(EventMaps(e, em))[0]) / (2 * h)
            assert fd == pytest.approx(g[i, j], rel=1e-4)


class TestTotalLoss:
    def test_zero_event_weight(self):
        assert total_loss(0.3, 99.0, LossWeights(0.2, 0.0)) == 0.3

    def test_arithmetic(self):
        assert total_loss(0.09, 0.5, LossWeights(0.2, 0.2)) == pytest.approx(0.19)

    def test_additivity(self):
        w = LossWeights(0.2, 0.3)
        base = total_loss(0.1, 1.0, w)
        assert total_loss(0.1, 1.5, w) - base == pytest.approx(0.15)


class TestLossWeights:
    def test_validation(self):
        with pytest.raises(DataError):
            LossWeights(lambda_dssim=1.5)
        with pytest.raises(DataError):
            LossWeights(lambda_event=-0.1)

    def test_l1_subgradient_zero_at_equality(self):
        a = np.full((4, 4), 0.5)
        _, g = l1_loss(a, a.copy())
        np.testing.assert_array_equal(g, 0.0)
