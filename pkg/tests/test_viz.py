"""PCA feature visualization, segmentation rendering, mIoU, image I/O."""

import numpy as np
import pytest

from featsplat.oracle import make_codebook
from featsplat.scene import FeatureMap
from featsplat.viz import (fit_pca, label_color, load_png, load_png_gray,
                           miou, palette_for, save_png, save_png_gray,
                           segmentation_map, visualize_features)


def subspace_map(rng, h, w, dim, spanned=3):
    """Features confined to the span of the first ``spanned`` axes."""
    scales = np.array([3.0, 2.0, 1.0])[:spanned]
    coeffs = rng.standard_normal((h, w, spanned)) * scales
    data = np.zeros((h, w, dim))
    data[..., :spanned] = coeffs
    return FeatureMap(data)


class TestFitPca:
    def test_recovers_known_subspace(self, rng):
        fmap = subspace_map(rng, 16, 16, 10)
        basis = fit_pca(fmap)
        # projector onto the found components equals projector onto e1..e3
        P = basis.components.T @ basis.components
        expected = np.zeros((10, 10))
        expected[:3, :3] = np.eye(3)
        np.testing.assert_allclose(P, expected, atol=1e-6)

    def test_constant_map_degenerate(self):
        fmap = FeatureMap(np.full((8, 8, 6), 1.3))
        with pytest.raises(ValueError, match="degenerate"):
            fit_pca(fmap)

    def test_rank_two_degenerate(self, rng):
        fmap = subspace_map(rng, 12, 12, 8, spanned=2)
        with pytest.raises(ValueError, match="degenerate"):
            fit_pca(fmap)

    def test_components_orthonormal(self, rng):
        fmap = FeatureMap(rng.standard_normal((20, 20, 12)))
        basis = fit_pca(fmap)
        gram = basis.components @ basis.components.T
        np.testing.assert_allclose(gram, np.eye(3), atol=1e-5)

    def test_subsampling_stride_used(self, rng):
        fmap = FeatureMap(rng.standard_normal((10, 9, 6)))
        # poison all pixels whose flat index is not a multiple of 3; the
        # fit must not see them
        poisoned = fmap.data.reshape(-1, 6).copy()
        basis_clean = fit_pca(fmap, stride=3)
        poisoned[1::3] = 1e6
        poisoned[2::3] = -1e6
        basis_poisoned = fit_pca(FeatureMap(poisoned.reshape(10, 9, 6)),
                                 stride=3)
        np.testing.assert_allclose(basis_poisoned.components,
                                   basis_clean.components, atol=1e-9)

    def test_too_few_samples(self, rng):
        with pytest.raises(ValueError, match="samples"):
            fit_pca(FeatureMap(rng.standard_normal((1, 2, 5))), stride=3)


class TestVisualizeFeatures:
    def test_mean_pixel_lands_at_normalized_zero(self, rng):
        fmap = subspace_map(rng, 12, 12, 6)
        basis = fit_pca(fmap)
        probe = FeatureMap(basis.mean[None, None, :])
        img = visualize_features(probe, basis)
        expected = np.clip(
            (0.0 - basis.channel_min)
            / (basis.channel_max - basis.channel_min), 0, 1)
        np.testing.assert_allclose(img[0, 0], expected, atol=1e-12)

    def test_motion_along_first_component_fixes_gb(self, rng):
        fmap = subspace_map(rng, 12, 12, 6)
        basis = fit_pca(fmap)
        a = basis.mean + 0.5 * basis.components[0]
        b = basis.mean - 0.7 * basis.components[0]
        img = visualize_features(FeatureMap(np.stack([[a, b]])), basis)
        # components are orthonormal to the power-method tolerance only
        assert img[0, 0, 1] == pytest.approx(img[0, 1, 1], abs=1e-6)
        assert img[0, 0, 2] == pytest.approx(img[0, 1, 2], abs=1e-6)
        assert abs(img[0, 0, 0] - img[0, 1, 0]) > 1e-3

    def test_output_in_unit_range(self, rng):
        fmap = FeatureMap(rng.standard_normal((16, 16, 8)) * 10)
        basis = fit_pca(fmap)
        img = visualize_features(fmap, basis)
        assert img.min() >= 0.0 and img.max() <= 1.0

    def test_rotation_invariance_up_to_sign(self, rng):
        fmap = FeatureMap(rng.standard_normal((20, 20, 7))
                          * np.array([5, 4, 3, 0.1, 0.1, 0.1, 0.1]))
        basis = fit_pca(fmap)
        img = visualize_features(fmap, basis)
        # random orthogonal rotation of the feature space
        Q, _ = np.linalg.qr(rng.standard_normal((7, 7)))
        rotated = FeatureMap(fmap.data @ Q.T)
        basis_r = fit_pca(rotated)
        img_r = visualize_features(rotated, basis_r)
        for ch in range(3):
            direct = np.abs(img_r[..., ch] - img[..., ch]).max()
            flipped = np.abs(img_r[..., ch] - (1.0 - img[..., ch])).max()
            assert min(direct, flipped) < 1e-6

    def test_dim_mismatch(self, rng):
        fmap = subspace_map(rng, 8, 8, 6)
        basis = fit_pca(fmap)
        with pytest.raises(ValueError, match="dim"):
            visualize_features(FeatureMap(np.zeros((2, 2, 5))), basis)


class TestSegmentationMap:
    def test_exact_embedding_classifies(self):
        cb = make_codebook(3, 16, seed=1)
        data = np.stack([[cb.embeddings[k] for k in range(4)]])
        ids, overlay = segmentation_map(FeatureMap(data), cb)
        np.testing.assert_array_equal(ids, [[0, 1, 2, 3]])
        assert overlay.shape == (1, 4, 3)

    def test_zero_feature_ties_to_class_zero(self):
        cb = make_codebook(2, 12, seed=0)
        ids, _ = segmentation_map(FeatureMap(np.zeros((2, 2, 12))), cb)
        np.testing.assert_array_equal(ids, 0)

    def test_alpha_rule_optional(self):
        cb = make_codebook(2, 12, seed=0)
        data = np.tile(cb.embeddings[1], (2, 2, 1))
        alpha = np.array([[0.9, 0.1], [0.8, 0.2]])
        ids, _ = segmentation_map(FeatureMap(data), cb, alpha_map=alpha)
        np.testing.assert_array_equal(ids, [[1, 0], [1, 0]])

    def test_overlay_blends_half(self):
        cb = make_codebook(2, 12, seed=0)
        data = np.tile(cb.embeddings[1], (1, 1, 1))
        image = np.full((1, 1, 3), 0.4)
        ids, overlay = segmentation_map(FeatureMap(data), cb, image=image)
        expected = 0.5 * 0.4 + 0.5 * label_color(cb.labels[1])
        np.testing.assert_allclose(overlay[0, 0], expected, atol=1e-12)

    def test_palette_deterministic(self):
        cb = make_codebook(3, 16, seed=2)
        np.testing.assert_array_equal(palette_for(cb), palette_for(cb))


class TestMiou:
    def test_perfect_prediction(self):
        gt = np.array([[0, 1], [2, 1]])
        per, mean = miou(gt, gt, 3)
        np.testing.assert_array_equal(per, [1.0, 1.0, 1.0])
        assert mean == 1.0

    def test_disjoint_single_class_maps(self):
        pred = np.zeros((3, 3), dtype=int)
        gt = np.ones((3, 3), dtype=int)
        per, mean = miou(pred, gt, 2)
        np.testing.assert_array_equal(per, [0.0, 0.0])
        assert mean == 0.0

    def test_empty_union_excluded_from_mean(self):
        pred = np.array([[0, 1]])
        gt = np.array([[0, 1]])
        per, mean = miou(pred, gt, 4)
        assert per[0] == 1.0 and per[1] == 1.0
        assert np.isnan(per[2]) and np.isnan(per[3])
        assert mean == 1.0

    def test_matches_brute_force_tally(self, rng):
        pred = rng.integers(0, 4, (20, 20))
        gt = rng.integers(0, 4, (20, 20))
        per, mean = miou(pred, gt, 4)
        vals = []
        for k in range(4):
            inter = 0
            union = 0
            for y in range(20):
                for x in range(20):
                    p = pred[y, x] == k
                    g = gt[y, x] == k
                    inter += p and g
                    union += p or g
            assert per[k] == pytest.approx(inter / union)
            vals.append(inter / union)
        assert mean == pytest.approx(np.mean(vals))

    def test_per_class_symmetry(self, rng):
        pred = rng.integers(0, 3, (10, 10))
        gt = rng.integers(0, 3, (10, 10))
        a, _ = miou(pred, gt, 3)
        b, _ = miou(gt, pred, 3)
        np.testing.assert_array_equal(a, b)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            miou(np.zeros((2, 2)), np.zeros((3, 2)), 2)


class TestImageIO:
    def test_rgb_roundtrip_within_quantization(self, rng, tmp_path):
        img = rng.uniform(0, 1, (12, 9, 3))
        path = tmp_path / "img.png"
        save_png(img, path)
        loaded = load_png(path)
        assert loaded.shape == (12, 9, 3)
        assert np.abs(loaded - img).max() <= 0.5 / 255 + 1e-9

    def test_gray_ids_roundtrip_exact(self, rng, tmp_path):
        ids = rng.integers(0, 7, (8, 8)).astype(np.uint8)
        path = tmp_path / "ids.png"
        save_png_gray(ids, path)
        np.testing.assert_array_equal(load_png_gray(path), ids)
