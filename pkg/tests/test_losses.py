"""Photometric and feature losses with their analytic gradients."""

import numpy as np
import pytest

from featsplat.losses import (dssim_loss, feature_loss, l1_loss,
                              photometric_loss, psnr)
from featsplat.scene import FeatureMap

from helpers import central_difference, max_relative_error


class TestPhotometric:
    def test_identical_images_zero(self, rng):
        img = rng.uniform(0, 1, (16, 16, 3))
        loss, grad = photometric_loss(img, img.copy(), lambda_dssim=0.2)
        assert loss == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(grad, 0.0, atol=1e-9)

    def test_constant_offset_pure_l1(self, rng):
        target = rng.uniform(0.2, 0.6, (8, 8, 3))
        delta = 0.07
        loss, grad = photometric_loss(target + delta, target, lambda_dssim=0.0)
        assert loss == pytest.approx(delta, rel=1e-12)
        np.testing.assert_allclose(grad, 1.0 / target.size, atol=1e-15)

    def test_resolution_mismatch(self, rng):
        with pytest.raises(ValueError, match="mismatch"):
            photometric_loss(np.zeros((4, 4, 3)), np.zeros((5, 4, 3)), 0.2)

    def test_gradient_matches_finite_differences(self, rng):
        target = rng.uniform(0.1, 0.9, (12, 12, 3))
        # keep a margin away from the L1 kink so differences stay one-sided
        offset = rng.choice([-1, 1], size=target.shape) * rng.uniform(
            0.05, 0.2, target.shape)
        rendered = np.clip(target + offset, 0.0, 1.0)

        def loss():
            return photometric_loss(rendered, target, lambda_dssim=0.2)[0]

        _, analytic = photometric_loss(rendered, target, lambda_dssim=0.2)
        fd = central_difference(loss, rendered, h=1e-5)
        assert max_relative_error(analytic, fd, cutoff=1e-7) < 1e-3

    def test_dssim_bounded(self, rng):
        a = rng.uniform(0, 1, (16, 16, 3))
        b = rng.uniform(0, 1, (16, 16, 3))
        loss, _ = dssim_loss(a, b)
        assert 0.0 <= loss <= 1.0

    def test_mix_weights(self, rng):
        a = rng.uniform(0, 1, (10, 10, 3))
        b = rng.uniform(0, 1, (10, 10, 3))
        l1, _ = l1_loss(a, b)
        ds, _ = dssim_loss(a, b)
        lam = 0.3
        mixed, _ = photometric_loss(a, b, lam)
        assert mixed == pytest.approx((1 - lam) * l1 + lam * ds, rel=1e-12)


class TestFeatureLoss:
    def test_identical_zero(self, rng):
        fmap = FeatureMap(rng.standard_normal((6, 6, 5)))
        loss, grad = feature_loss(fmap, fmap.copy())
        assert loss == 0.0
        np.testing.assert_array_equal(grad, 0.0)

    def test_constant_offset(self, rng):
        base = FeatureMap(rng.standard_normal((5, 4, 3)))
        shifted = FeatureMap(base.data + 2.0)
        loss, grad = feature_loss(shifted, base)
        assert loss == pytest.approx(2.0, rel=1e-12)
        np.testing.assert_allclose(grad, 1.0 / base.data.size)

    def test_matches_scalar_loop(self, rng):
        a = FeatureMap(rng.standard_normal((4, 3, 2)))
        b = FeatureMap(rng.standard_normal((4, 3, 2)))
        loss, grad = feature_loss(a, b)
        total = 0.0
        for y in range(4):
            for x in range(3):
                for d in range(2):
                    total += abs(a.data[y, x, d] - b.data[y, x, d])
        assert loss == pytest.approx(total / 24, rel=1e-12)
        # sign-based gradient
        np.testing.assert_array_equal(grad, np.sign(a.data - b.data) / 24)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            feature_loss(FeatureMap(np.zeros((2, 2, 2))),
                         FeatureMap(np.zeros((2, 2, 3))))


class TestPsnr:
    def test_identical_infinite(self):
        img = np.full((4, 4, 3), 0.5)
        assert psnr(img, img) == np.inf

    def test_known_value(self):
        a = np.zeros((2, 2, 3))
        b = np.full((2, 2, 3), 0.1)
        assert psnr(a, b) == pytest.approx(20.0)
