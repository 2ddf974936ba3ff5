"""Scene types: construction, invariants, cameras, random initialization."""

import numpy as np
import pytest

from featsplat.scene import (CameraView, FeatureMap, GaussianCloud,
                             bounding_radius, compact_cloud, logit,
                             look_at_camera, orbit_camera, random_init,
                             sigmoid, KILL_LOGIT)

from helpers import general_cloud


class TestSigmoidLogit:
    def test_roundtrip(self):
        p = np.linspace(0.01, 0.99, 50)
        np.testing.assert_allclose(sigmoid(logit(p)), p, atol=1e-12)

    def test_kill_logit_is_exactly_zero_opacity(self):
        assert sigmoid(np.array([KILL_LOGIT]))[0] == 0.0


class TestRandomInit:
    def test_single_gaussian_inside_cube(self):
        cloud = random_init(1, feature_dim=2, extent=1.0, seed=0)
        assert cloud.count == 1
        assert np.all(np.abs(cloud.positions) <= 1.0)

    def test_same_seed_identical(self):
        a = random_init(50, 4, 2.0, seed=7)
        b = random_init(50, 4, 2.0, seed=7)
        for name in ("positions", "rotations", "log_scales", "opacity_logits",
                     "colors", "features"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    def test_position_mean_near_origin(self):
        # statistical check over a handful of seeds
        extent = 2.0
        for seed in range(5):
            cloud = random_init(1000, 2, extent, seed=seed)
            assert np.linalg.norm(cloud.positions.mean(axis=0)) < 0.1 * extent

    def test_documented_initial_values(self):
        cloud = random_init(10, 3, 1.5, seed=1)
        np.testing.assert_allclose(cloud.opacities, 0.1, atol=1e-6)
        np.testing.assert_array_equal(cloud.rotations[:, 0], 1.0)
        np.testing.assert_array_equal(cloud.rotations[:, 1:], 0.0)
        expected_scale = 1.5 / 10 ** (1 / 3)
        np.testing.assert_allclose(cloud.scales, expected_scale, rtol=1e-6)
        assert np.all((cloud.colors >= 0) & (cloud.colors <= 1))
        assert np.abs(cloud.features).max() < 0.1

    def test_count_must_be_positive(self):
        with pytest.raises(ValueError):
            random_init(0, 2, 1.0, seed=0)

    def test_values_are_float32_representable(self):
        cloud = random_init(20, 4, 1.0, seed=3)
        for name in ("positions", "rotations", "log_scales", "opacity_logits",
                     "colors", "features"):
            arr = getattr(cloud, name)
            np.testing.assert_array_equal(
                arr, arr.astype(np.float32).astype(np.float64))


class TestCloudInvariants:
    def test_validate_accepts_fresh_cloud(self, rng):
        general_cloud(rng, 30).validate()

    def test_validate_rejects_nan(self, rng):
        cloud = general_cloud(rng, 5)
        cloud.opacity_logits[3] = np.nan
        with pytest.raises(ValueError, match="record 3"):
            cloud.validate()

    def test_validate_rejects_non_unit_rotation(self, rng):
        cloud = general_cloud(rng, 5)
        cloud.rotations[2] *= 3.0
        with pytest.raises(ValueError, match="rotation"):
            cloud.validate()

    def test_validate_rejects_out_of_range_color(self, rng):
        cloud = general_cloud(rng, 5)
        cloud.colors[1, 2] = 1.5
        with pytest.raises(ValueError, match="color"):
            cloud.validate()

    def test_gaussian_view_roundtrip(self, rng):
        cloud = general_cloud(rng, 8)
        g = cloud.gaussian(5)
        np.testing.assert_array_equal(g.position, cloud.positions[5])
        np.testing.assert_allclose(g.scale, np.exp(cloud.log_scales[5]))
        rebuilt = GaussianCloud.from_gaussians(
            [cloud.gaussian(i) for i in range(cloud.count)],
            scene_extent=cloud.scene_extent)
        np.testing.assert_allclose(rebuilt.log_scales, cloud.log_scales,
                                   atol=1e-12)
        np.testing.assert_array_equal(rebuilt.features, cloud.features)

    def test_copy_is_deep(self, rng):
        cloud = general_cloud(rng, 4)
        dup = cloud.copy()
        dup.positions[0, 0] += 1.0
        assert cloud.positions[0, 0] != dup.positions[0, 0]

    def test_compact_drops_killed(self, rng):
        cloud = general_cloud(rng, 10)
        cloud.opacity_logits[[2, 7]] = KILL_LOGIT
        compacted = compact_cloud(cloud)
        assert compacted.count == 8
        assert np.all(compacted.opacities > 0)

    def test_compact_all_killed_errors(self, rng):
        cloud = general_cloud(rng, 3)
        cloud.opacity_logits[:] = KILL_LOGIT
        with pytest.raises(ValueError):
            compact_cloud(cloud)

    def test_bounding_radius(self):
        pts = np.array([[0.0, 0, 0], [2, 0, 0], [-2, 0, 0]])
        assert bounding_radius(pts) == pytest.approx(2.0)


class TestCameraView:
    def test_validate_rejects_sheared_rotation(self):
        w2c = np.eye(4)
        w2c[0, 1] = 0.3
        view = CameraView(fx=50, fy=50, cx=32, cy=32, width=64, height=64,
                          world_to_camera=w2c)
        with pytest.raises(ValueError, match="orthonormal"):
            view.validate()

    def test_validate_rejects_negative_focal(self):
        view = CameraView(fx=-1, fy=50, cx=32, cy=32, width=64, height=64)
        with pytest.raises(ValueError):
            view.validate()

    def test_scaled_halves_everything(self):
        view = CameraView(fx=60, fy=50, cx=32, cy=30, width=64, height=60)
        half = view.scaled(0.5)
        assert (half.fx, half.fy, half.cx, half.cy) == (30, 25, 16, 15)
        assert (half.width, half.height) == (32, 30)

    def test_look_at_projects_target_to_principal_point(self):
        view = look_at_camera(eye=(3, 1, 2), target=(0.2, -0.1, 0.4),
                              up=(0, 0, 1), fx=60, width=64, height=64)
        view.validate()
        target_cam = view.rotation @ np.array([0.2, -0.1, 0.4]) + view.translation
        assert target_cam[2] > 0
        u = view.fx * target_cam[0] / target_cam[2] + view.cx
        v = view.fy * target_cam[1] / target_cam[2] + view.cy
        assert (u, v) == pytest.approx((view.cx, view.cy), abs=1e-9)

    def test_orbit_radius_and_validity(self):
        view = orbit_camera(theta=1.0, phi=0.7, radius=3.0, fx=50,
                            width=32, height=32)
        view.validate()
        eye = -view.rotation.T @ view.translation
        assert np.linalg.norm(eye) == pytest.approx(3.0)


class TestFeatureMap:
    def test_shape_accessors(self):
        fmap = FeatureMap(np.zeros((4, 6, 8)))
        assert (fmap.height, fmap.width, fmap.dim) == (4, 6, 8)

    def test_rejects_bad_rank(self):
        with pytest.raises(ValueError):
            FeatureMap(np.zeros((4, 6)))

    def test_validate_rejects_nan(self):
        fmap = FeatureMap(np.zeros((2, 2, 1)))
        fmap.data[0, 0, 0] = np.inf
        with pytest.raises(ValueError):
            fmap.validate()
