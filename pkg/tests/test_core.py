"""Geometry and image primitive tests."""

import numpy as np
import pytest

from evsplat.core import (
    CameraView,
    DataError,
    Gaussian,
    GaussianCloud,
    covariance_from,
    inverse_sigmoid,
    load_png,
    look_at_view,
    luminance,
    quat_from_axis_angle,
    quat_multiply,
    quat_normalize,
    quat_to_rotmat,
    rotmat_to_quat,
    save_png,
    sigmoid,
    srgb_decode,
    srgb_encode,
)


class TestQuatToRotmat:
    def test_identity_quaternion(self):
        np.testing.assert_allclose(quat_to_rotmat([1, 0, 0, 0]), np.eye(3))

    def test_half_turn_about_z(self):
        np.testing.assert_allclose(
            quat_to_rotmat([0, 0, 0, 1]), np.diag([-1.0, -1.0, 1.0]), atol=1e-15
        )

    def test_random_quaternions_are_orthonormal(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            q = rng.normal(size=4)
            R = quat_to_rotmat(q)
            np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)
            assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)

    def test_double_cover(self):
        rng = np.random.default_rng(1)
        q = quat_normalize(rng.normal(size=4))
        np.testing.assert_allclose(quat_to_rotmat(q), quat_to_rotmat(-q), atol=1e-15)

    def test_zero_quaternion_raises(self):
        with pytest.raises(DataError, match="degenerate rotation"):
            quat_to_rotmat([0, 0, 0, 0])

    def test_rotmat_round_trip(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            q = quat_normalize(rng.normal(size=4))
            if q[0] < 0:
                q = -q
            np.testing.assert_allclose(rotmat_to_quat(quat_to_rotmat(q)), q, atol=1e-12)

    def test_multiply_matches_matrix_product(self):
        rng = np.random.default_rng(3)
        a = quat_normalize(rng.normal(size=4))
        b = quat_normalize(rng.normal(size=4))
        np.testing.assert_allclose(
            quat_to_rotmat(quat_multiply(a, b)),
            quat_to_rotmat(a) @ quat_to_rotmat(b),
            atol=1e-12,
        )

    def test_axis_angle(self):
        q = quat_from_axis_angle([0, 0, 1], np.pi / 2)
        R = quat_to_rotmat(q)
        np.testing.assert_allclose(R @ [1, 0, 0], [0, 1, 0], atol=1e-15)


class TestCovarianceFrom:
    def test_unit_sphere(self):
        np.testing.assert_allclose(covariance_from([1, 1, 1], [1, 0, 0, 0]), np.eye(3))

    def test_axis_aligned(self):
        np.testing.assert_allclose(
            covariance_from([2, 1, 1], [1, 0, 0, 0]), np.diag([4.0, 1.0, 1.0])
        )

    def test_random_psd_with_eigensolver_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            s = rng.uniform(0.1, 2.0, 3)
            q = quat_normalize(rng.normal(size=4))
            cov = covariance_from(s, q)
            np.testing.assert_allclose(cov, cov.T, atol=1e-14)
            eig = np.sort(np.linalg.eigvalsh(cov))
            assert eig[0] > 0
            np.testing.assert_allclose(eig, np.sort(s**2), rtol=1e-10)

    def test_trace_is_rotation_invariant(self):
        rng = np.random.default_rng(5)
        s = np.array([0.5, 1.0, 2.0])
        for _ in range(20):
            q = quat_normalize(rng.normal(size=4))
            assert np.trace(covariance_from(s, q)) == pytest.approx((s**2).sum(), rel=1e-12)

    def test_invalid_scale(self):
        with pytest.raises(DataError, match="invalid scale"):
            covariance_from([1.0, -0.5, 1.0], [1, 0, 0, 0])


class TestLuminance:
    def test_white_is_one(self):
        img = np.ones((4, 4, 3))
        np.testing.assert_allclose(luminance(img), 1.0)

    def test_pure_red(self):
        img = np.zeros((2, 2, 3))
        img[:, :, 0] = 1.0
        np.testing.assert_allclose(luminance(img), 0.299)

    def test_gray_invariance(self):
        img = np.full((3, 3, 3), 0.5)
        np.testing.assert_allclose(luminance(img), 0.5)

    def test_single_channel_passthrough(self):
        img = np.random.default_rng(0).uniform(size=(5, 5))
        np.testing.assert_array_equal(luminance(img), img)

    def test_linearity(self):
        rng = np.random.default_rng(6)
        x = rng.uniform(size=(6, 6, 3))
        y = rng.uniform(size=(6, 6, 3))
        np.testing.assert_allclose(
            luminance(2.0 * x + 0.5 * y), 2.0 * luminance(x) + 0.5 * luminance(y), atol=1e-14
        )


class TestReparameterizations:
    def test_sigmoid_logit_round_trip(self):
        p = np.linspace(0.01, 0.99, 50)
        np.testing.assert_allclose(sigmoid(inverse_sigmoid(p)), p, atol=1e-12)

    def test_srgb_round_trip(self):
        x = np.linspace(0, 1, 100)
        np.testing.assert_allclose(srgb_decode(srgb_encode(x)), x, atol=1e-12)


class TestGaussianTypes:
    def test_gaussian_validation(self):
        g = Gaussian([0, 0, 0], [1, 0, 0, 0], [0.1, 0.1, 0.1], 0.5, [1, 0, 0])
        assert abs(np.linalg.norm(g.rotation) - 1.0) < 1e-9
        with pytest.raises(DataError):
            Gaussian([0, 0, 0], [1, 0, 0, 0], [0.1, -0.1, 0.1], 0.5, [1, 0, 0])
        with pytest.raises(DataError):
            Gaussian([0, 0, 0], [1, 0, 0, 0], [0.1, 0.1, 0.1], 1.0, [1, 0, 0])
        with pytest.raises(DataError):
            Gaussian([0, 0, 0], [1, 0, 0, 0], [0.1, 0.1, 0.1], 0.5, [1.5, 0, 0])

    def test_cloud_round_trip(self):
        gs = [
            Gaussian([0, 0, 1], [1, 0, 0, 0], [0.1, 0.2, 0.3], 0.25, [0.1, 0.5, 0.9]),
            Gaussian([1, 2, 3], [0, 0, 0, 1], [0.5, 0.5, 0.5], 0.75, [0, 0, 0]),
        ]
        cloud = GaussianCloud.from_gaussians(gs)
        assert len(cloud) == 2
        back = cloud.gaussian(0)
        np.testing.assert_allclose(back.position, gs[0].position)
        np.testing.assert_allclose(back.scale, gs[0].scale, rtol=1e-12)
        assert back.opacity == pytest.approx(0.25, rel=1e-12)

    def test_empty_cloud(self):
        assert len(GaussianCloud.empty()) == 0
        assert len(GaussianCloud.from_gaussians([])) == 0


class TestCameraView:
    def test_validation(self):
        with pytest.raises(DataError):
            CameraView([1, 0, 0, 0], [0, 0, 0], (0.0, 10.0), (8, 8), (16, 16))
        with pytest.raises(DataError):
            CameraView([1, 0, 0, 0], [0, 0, 0], (10.0, 10.0), (2, 2), (4, 4))

    def test_look_at_points_camera_at_target(self):
        view = look_at_view([0, 0, -3], [0, 0, 0], [0, 1, 0], 50.0, (32, 32))
        p_cam = view.rotmat @ np.zeros(3) + view.translation
        assert p_cam[2] == pytest.approx(3.0)
        np.testing.assert_allclose(p_cam[:2], 0.0, atol=1e-12)
        np.testing.assert_allclose(view.camera_center, [0, 0, -3], atol=1e-12)


class TestPngIO:
    def test_round_trip_8bit(self, tmp_path):
        rng = np.random.default_rng(7)
        img = rng.uniform(size=(16, 16, 3))
        path = tmp_path / "img.png"
        save_png(path, img)
        back = load_png(path)
        # half an 8-bit sRGB step, through the steepest part of the decode curve
        assert np.abs(back - img).max() < 0.006

    def test_deterministic_bytes(self, tmp_path):
        img = np.random.default_rng(8).uniform(size=(8, 8, 3))
        save_png(tmp_path / "a.png", img)
        save_png(tmp_path / "b.png", img)
        assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()
