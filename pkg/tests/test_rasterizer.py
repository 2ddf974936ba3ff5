"""Fused forward/backward rasterization: exactness, invariants, gradients."""

import numpy as np
import pytest

from featsplat.projection import bin_tiles, project_cloud
from featsplat.rasterizer import (GradientBuffer, render, render_backward,
                                  view_space_grad_norms)
from featsplat.scene import CameraView, GaussianCloud, logit, sigmoid

from helpers import (GRADCHECK_VIEW, back_to_front_reference,
                     central_difference, gradcheck_cloud, general_cloud,
                     max_relative_error, pixel_walk)


def centered_cloud(alphas, colors, features, z_start=5.0):
    """Gaussians stacked on the optical axis, huge and flat so the
    falloff at the central pixel is exactly 1."""
    n = len(alphas)
    return GaussianCloud(
        positions=np.array([[0.0, 0.0, z_start + i] for i in range(n)]),
        rotations=np.tile([1.0, 0, 0, 0], (n, 1)),
        log_scales=np.log(np.full((n, 3), 50.0)),
        opacity_logits=logit(np.array(alphas, dtype=np.float64)),
        colors=np.array(colors, dtype=np.float64),
        features=np.array(features, dtype=np.float64),
        scene_extent=1.0,
    )


# principal point on the center of pixel (4, 4)
PIXEL_VIEW = CameraView(fx=8.0, fy=8.0, cx=4.5, cy=4.5, width=9, height=9)


class TestRenderForward:
    def test_empty_coverage_is_background(self, rng):
        cloud = general_cloud(rng, 5)
        cloud.positions[:, 2] = -10.0  # all behind the camera
        view = CameraView(fx=20, fy=20, cx=8, cy=8, width=16, height=16)
        out = render(cloud, view, background=(0.2, 0.4, 0.6),
                     feature_background=0.0)
        assert np.all(out.image == np.array([0.2, 0.4, 0.6]))
        assert np.all(out.feature_map.data == 0.0)
        assert np.all(out.alpha_map == 0.0)
        assert np.all(out.contrib_counts == 0)

    def test_single_gaussian_center_pixel(self):
        cloud = centered_cloud([0.9], [[1.0, 0.0, 0.0]], [[1.0, 2.0]])
        out = render(cloud, PIXEL_VIEW, background=(0.0, 0.0, 1.0))
        center = out.image[4, 4]
        np.testing.assert_allclose(center, [0.9, 0.0, 0.1], atol=1e-9)
        np.testing.assert_allclose(out.feature_map.data[4, 4], [0.9, 1.8],
                                   atol=1e-9)
        assert out.alpha_map[4, 4] == pytest.approx(0.9, abs=1e-9)

    def test_two_gaussian_expansion(self):
        cloud = centered_cloud(
            [0.5, 0.5],
            [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            [[1.0, 0.0], [0.0, 1.0]])
        out = render(cloud, PIXEL_VIEW, background=(0.0, 0.0, 0.0))
        np.testing.assert_allclose(out.image[4, 4], [0.5, 0.25, 0.0],
                                   atol=1e-9)
        np.testing.assert_allclose(out.feature_map.data[4, 4], [0.5, 0.25],
                                   atol=1e-9)

    def test_alpha_clamp_applies(self):
        cloud = centered_cloud([0.9999], [[1.0, 1.0, 1.0]], [[1.0]])
        out = render(cloud, PIXEL_VIEW)
        # effective alpha clamped to 0.99 even though sigmoid gave more
        assert out.alpha_map[4, 4] == pytest.approx(0.99, abs=1e-12)

    def test_feature_dim_argument_checked(self, rng):
        cloud = general_cloud(rng, 4, feature_dim=3)
        with pytest.raises(ValueError, match="feature dim"):
            render(cloud, PIXEL_VIEW, feature_dim=5)

    def test_deterministic(self, rng):
        cloud = general_cloud(rng, 40)
        view = CameraView(fx=40, fy=40, cx=16, cy=16, width=32, height=32)
        a = render(cloud, view)
        b = render(cloud, view)
        np.testing.assert_array_equal(a.image, b.image)
        np.testing.assert_array_equal(a.feature_map.data, b.feature_map.data)

    def test_color_path_independent_of_feature_dim(self, rng):
        cloud = general_cloud(rng, 30, feature_dim=4)
        wide = cloud.copy()
        wide.features = np.hstack([wide.features, wide.features])  # dim 8
        view = CameraView(fx=40, fy=40, cx=16, cy=16, width=32, height=32)
        a = render(cloud, view)
        b = render(wide, view)
        np.testing.assert_array_equal(a.image, b.image)
        np.testing.assert_array_equal(a.alpha_map, b.alpha_map)
        np.testing.assert_array_equal(a.contrib_counts, b.contrib_counts)

    def test_fused_equals_single_purpose_renders(self, rng):
        # zeroing one payload must not change the other or the weights
        cloud = general_cloud(rng, 25, feature_dim=3)
        view = CameraView(fx=40, fy=40, cx=16, cy=16, width=32, height=32)
        both = render(cloud, view)
        no_feat = cloud.copy()
        no_feat.features = np.zeros_like(no_feat.features)
        color_only = render(no_feat, view)
        np.testing.assert_array_equal(both.image, color_only.image)
        np.testing.assert_array_equal(both.contrib_counts,
                                      color_only.contrib_counts)
        black = cloud.copy()
        black.colors = np.zeros_like(black.colors)
        feat_only = render(black, view)
        np.testing.assert_array_equal(both.feature_map.data,
                                      feat_only.feature_map.data)
        np.testing.assert_array_equal(both.contrib_counts,
                                      feat_only.contrib_counts)

    def test_empty_cloud_rejected(self, rng):
        cloud = general_cloud(rng, 1)
        for name in ("positions", "rotations", "log_scales", "colors",
                     "features"):
            setattr(cloud, name, getattr(cloud, name)[:0])
        cloud.opacity_logits = cloud.opacity_logits[:0]
        with pytest.raises(ValueError, match="empty"):
            render(cloud, PIXEL_VIEW)


class TestCompositingInvariants:
    def _walk(self, cloud, view):
        proj, _ = project_cloud(cloud, view)
        binning = bin_tiles(proj, view)
        opac = sigmoid(cloud.opacity_logits)[proj.source_index]
        return proj, binning, opac, pixel_walk(proj, binning, opac, view)

    def test_transmittance_monotone_and_telescoping(self, rng):
        view = CameraView(fx=30, fy=30, cx=12, cy=12, width=24, height=24)
        for case in range(5):
            cloud = general_cloud(np.random.default_rng(40 + case), 30)
            out = render(cloud, view)
            _, _, _, traces = self._walk(cloud, view)
            for (py, px), (alphas, ts, t_final) in traces.items():
                ts_arr = np.array(ts + [t_final])
                assert np.all(np.diff(ts_arr) <= 1e-15)
                woven = sum(a * t for a, t in zip(alphas, ts))
                assert woven == pytest.approx(1.0 - t_final, abs=1e-6)
                assert out.alpha_map[py, px] == pytest.approx(
                    1.0 - t_final, abs=1e-9)
                assert out.contrib_counts[py, px] == len(alphas)

    def test_front_to_back_equals_back_to_front(self, rng):
        # scenes shallow enough that termination never triggers, since
        # over-compositing has no notion of early stopping
        view = CameraView(fx=24, fy=24, cx=8, cy=8, width=16, height=16)
        for case in range(3):
            case_rng = np.random.default_rng(80 + case)
            cloud = general_cloud(case_rng, 8)
            cloud.opacity_logits = logit(
                case_rng.uniform(0.1, 0.55, cloud.count))
            out = render(cloud, view, background=(0.3, 0.1, 0.2),
                         feature_background=0.5)
            proj, _ = project_cloud(cloud, view)
            binning = bin_tiles(proj, view)
            opac = sigmoid(cloud.opacity_logits)[proj.source_index]
            img_ref, feat_ref = back_to_front_reference(
                proj, binning, opac, cloud.colors[proj.source_index],
                cloud.features[proj.source_index], view,
                np.array([0.3, 0.1, 0.2]), np.full(3, 0.5))
            np.testing.assert_allclose(out.image, img_ref, atol=1e-6)
            np.testing.assert_allclose(out.feature_map.data, feat_ref,
                                       atol=1e-6)


class TestRenderBackward:
    def test_zero_upstream_zero_grads(self, rng):
        cloud = gradcheck_cloud(rng)
        out = render(cloud, GRADCHECK_VIEW)
        buf = render_backward(out.state, np.zeros((8, 8, 3)),
                              np.zeros((8, 8, 4)))
        for arr in (buf.d_positions, buf.d_rotations, buf.d_log_scales,
                    buf.d_opacity_logits, buf.d_colors, buf.d_features):
            assert not arr.any()

    def test_single_gaussian_color_gradient_is_weight(self):
        cloud = centered_cloud([0.7], [[0.3, 0.5, 0.9]], [[1.0]])
        out = render(cloud, PIXEL_VIEW)
        upstream = np.zeros((9, 9, 3))
        upstream[4, 4] = [1.0, 0.0, 0.0]
        buf = render_backward(out.state, upstream, np.zeros((9, 9, 1)))
        # dC_r/dc_r = alpha' at that pixel; other channels untouched
        assert buf.d_colors[0, 0] == pytest.approx(0.7, abs=1e-9)
        assert buf.d_colors[0, 1] == 0.0
        assert buf.d_colors[0, 2] == 0.0

    def test_shape_mismatch_rejected(self, rng):
        cloud = gradcheck_cloud(rng)
        out = render(cloud, GRADCHECK_VIEW)
        with pytest.raises(ValueError, match="grad_image"):
            render_backward(out.state, np.zeros((4, 4, 3)),
                            np.zeros((8, 8, 4)))
        with pytest.raises(ValueError, match="grad_feature"):
            render_backward(out.state, np.zeros((8, 8, 3)),
                            np.zeros((8, 8, 7)))

    def test_finite_difference_full_sweep(self):
        worst = 0.0
        for case in range(8):
            rng = np.random.default_rng(300 + case)
            cloud = gradcheck_cloud(rng)
            w_img = rng.standard_normal((8, 8, 3))
            w_feat = rng.standard_normal((8, 8, 4))
            bg = rng.uniform(0, 1, 3)

            def loss():
                out = render(cloud, GRADCHECK_VIEW, background=bg)
                return float(np.sum(out.image * w_img)
                             + np.sum(out.feature_map.data * w_feat))

            out = render(cloud, GRADCHECK_VIEW, background=bg)
            buf = render_backward(out.state, w_img, w_feat)
            blocks = {
                "positions": buf.d_positions,
                "rotations": buf.d_rotations,
                "log_scales": buf.d_log_scales,
                "opacity_logits": buf.d_opacity_logits,
                "colors": buf.d_colors,
                "features": buf.d_features,
            }
            for name, analytic in blocks.items():
                fd = central_difference(loss, getattr(cloud, name), h=1e-3)
                worst = max(worst, max_relative_error(analytic, fd))
        assert worst < 1e-3


class TestViewSpaceStats:
    def test_never_seen_is_zero(self):
        buf = GradientBuffer.zeros(3, 2)
        norms = view_space_grad_norms(buf)
        np.testing.assert_array_equal(norms, [0.0, 0.0, 0.0])

    def test_single_contribution(self):
        buf = GradientBuffer.zeros(1, 2)
        buf.mean2d_norm_sum[0] = np.hypot(3.0, 4.0)
        buf.seen_count[0] = 1
        assert view_space_grad_norms(buf)[0] == pytest.approx(5.0)

    def test_accumulation_over_renders_averages(self, rng):
        cloud = gradcheck_cloud(rng, count=6)
        total = GradientBuffer.zeros(cloud.count, cloud.feature_dim)
        per_render_norms = []
        for k in range(3):
            out = render(cloud, GRADCHECK_VIEW)
            w = np.zeros((8, 8, 3))
            w[:, :, k] = 1.0 + k
            buf = render_backward(out.state, w, np.zeros((8, 8, 4)))
            per_render_norms.append(buf.mean2d_norm_sum.copy())
            total.absorb(buf)
        expected = sum(per_render_norms) / 3.0
        np.testing.assert_allclose(view_space_grad_norms(total), expected,
                                   atol=1e-12)
        np.testing.assert_array_equal(total.seen_count, 3)
