"""Tests for cameras, normalization and plane homographies."""

import numpy as np
import pytest

from planesweep_glr.camera import (
    Camera,
    DepthPlanes,
    angular_encoding,
    camera_center,
    check_rotation,
    fundamental_matrix,
    look_at,
    normalize_to_target,
    plane_homographies,
    plane_homography,
    rotation_from_axis_angle,
    sample_depths,
    unproject_project_oracle,
)
from planesweep_glr.exceptions import (
    BehindCameraError,
    BoundsError,
    DegenerateGeometryError,
    InvalidCameraError,
)
from planesweep_glr.models import SamplingMode


class TestCamera:
    """Tests for the Camera value type."""

    def test_rejects_non_orthonormal_rotation(self, intrinsics):
        """Test that a scaled rotation is rejected."""
        with pytest.raises(InvalidCameraError, match="orthonormal"):
            Camera(intrinsics, 1.01 * np.eye(3), np.zeros(3), 32, 24)

    def test_rejects_reflection(self, intrinsics):
        """Test that det(R) = -1 is rejected."""
        with pytest.raises(InvalidCameraError, match="determinant"):
            Camera(intrinsics, np.diag([1.0, 1.0, -1.0]), np.zeros(3), 32, 24)

    def test_rejects_non_positive_focal(self, intrinsics):
        """Test that a zero focal length is rejected."""
        bad = intrinsics.copy()
        bad[0, 0] = 0.0
        with pytest.raises(InvalidCameraError, match="focal"):
            Camera(bad, np.eye(3), np.zeros(3), 32, 24)

    def test_rejects_empty_image(self, intrinsics):
        """Test that a zero-width image is rejected."""
        with pytest.raises(InvalidCameraError):
            Camera(intrinsics, np.eye(3), np.zeros(3), 0, 24)

    def test_rejects_wrong_shape(self, intrinsics):
        """Test that a 2-vector translation is rejected."""
        with pytest.raises(InvalidCameraError, match="translation"):
            Camera(intrinsics, np.eye(3), np.zeros(2), 32, 24)

    def test_arrays_are_read_only(self, canonical_camera):
        """Test that camera arrays cannot be modified in place."""
        with pytest.raises(ValueError):
            canonical_camera.rotation[0, 0] = 2.0

    def test_project_principal_point(self, canonical_camera):
        """Test that the optical axis projects onto the principal point."""
        pix = canonical_camera.project([[0.0, 0.0, 5.0]])
        np.testing.assert_allclose(pix, [[15.5, 11.5]])

    def test_project_behind_raises(self, canonical_camera):
        """Test that a point behind the camera cannot be projected."""
        with pytest.raises(BehindCameraError):
            canonical_camera.project([[0.0, 0.0, -1.0]])

    def test_is_canonical(self, canonical_camera, shifted_camera):
        """Test canonical detection."""
        assert canonical_camera.is_canonical
        assert not shifted_camera.is_canonical


class TestRotations:
    """Tests for rotation helpers."""

    def test_axis_angle_is_rotation(self):
        """Test that Rodrigues' formula yields a proper rotation."""
        rotation = rotation_from_axis_angle([0.1, -0.2, 0.3])
        check_rotation(rotation)

    def test_axis_angle_zero_is_identity(self):
        """Test the zero rotation."""
        np.testing.assert_array_equal(rotation_from_axis_angle([0.0, 0.0, 0.0]), np.eye(3))

    def test_axis_angle_quarter_turn(self):
        """Test a 90 degree turn about z maps x onto y."""
        rotation = rotation_from_axis_angle([0.0, 0.0, np.pi / 2])
        np.testing.assert_allclose(rotation @ [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], atol=1e-12)

    def test_camera_center(self, shifted_camera):
        """Test that the camera center maps to the camera origin."""
        center = camera_center(shifted_camera)
        np.testing.assert_allclose(shifted_camera.to_camera(center), [[0.0, 0.0, 0.0]], atol=1e-12)

    def test_look_at_points_axis(self, intrinsics):
        """Test that the look-at point lands on the principal point."""
        cam = look_at([1.0, 0.5, -2.0], [0.0, 0.0, 4.0], intrinsics, 32, 24)
        np.testing.assert_allclose(cam.project([[0.0, 0.0, 4.0]]), [[15.5, 11.5]], atol=1e-9)

    def test_look_at_degenerate(self, intrinsics):
        """Test that looking at one's own center fails."""
        with pytest.raises(DegenerateGeometryError):
            look_at([0.0, 0.0, 0.0], [0.0, 0.0, 0.0], intrinsics, 32, 24)


class TestNormalization:
    """Tests for target-centric normalization."""

    def test_target_becomes_canonical(self, shifted_camera, canonical_camera):
        """Test that the normalized target has R = I and t = 0."""
        _, target = normalize_to_target([canonical_camera], shifted_camera)
        assert target.is_canonical
        np.testing.assert_array_equal(target.intrinsics, shifted_camera.intrinsics)

    def test_target_as_input_is_exactly_canonical(self, shifted_camera):
        """Test that the target itself normalizes to exact identity."""
        (normalized,), _ = normalize_to_target([shifted_camera], shifted_camera)
        np.testing.assert_array_equal(normalized.rotation, np.eye(3))
        np.testing.assert_array_equal(normalized.translation, np.zeros(3))

    def test_projections_preserved(self, shifted_camera, canonical_camera):
        """Test that every camera keeps its world-to-pixel map under the frame change."""
        points = np.array([[0.2, -0.1, 3.0], [-0.5, 0.3, 6.0], [0.0, 0.0, 2.0]])
        (view,), target = normalize_to_target([canonical_camera], shifted_camera)
        moved = shifted_camera.to_camera(points)
        np.testing.assert_allclose(view.project(moved), canonical_camera.project(points), atol=1e-9)
        np.testing.assert_allclose(target.project(moved), shifted_camera.project(points), atol=1e-9)


class TestDepthSampling:
    """Tests for depth plane placement."""

    def test_uniform_depth(self):
        """Test evenly spaced depths with exact endpoints."""
        planes = sample_depths(1.0, 5.0, 5, SamplingMode.UNIFORM_DEPTH)
        np.testing.assert_allclose(planes.distances, [1.0, 2.0, 3.0, 4.0, 5.0])

    def test_uniform_disparity(self):
        """Test evenly spaced inverse depths."""
        planes = sample_depths(1.0, 4.0, 4, "disparity")
        np.testing.assert_allclose(np.diff(1.0 / planes.distances), -0.25, atol=1e-12)
        assert planes.near == 1.0
        assert planes.far == 4.0

    def test_disparity_denser_near(self):
        """Test that disparity sampling puts more planes near the camera."""
        planes = sample_depths(1.0, 10.0, 16, "disparity")
        gaps = np.diff(planes.distances)
        assert np.all(np.diff(gaps) > 0)

    @pytest.mark.parametrize(
        "near,far,count",
        [(0.0, 1.0, 4), (2.0, 1.0, 4), (1.0, 1.0, 4), (1.0, 2.0, 1)],
    )
    def test_invalid_bounds(self, near, far, count):
        """Test that invalid bounds or counts raise BoundsError."""
        with pytest.raises(BoundsError):
            sample_depths(near, far, count, "depth")

    def test_depth_planes_must_increase(self):
        """Test that unordered distances are rejected."""
        with pytest.raises(BoundsError):
            DepthPlanes(np.array([1.0, 3.0, 2.0]))


class TestHomographies:
    """Tests for plane-induced homographies."""

    def test_identity_for_target_itself(self, canonical_camera):
        """Test that a view equal to the target yields the identity."""
        matrix = plane_homography(canonical_camera, canonical_camera, 3.0)
        np.testing.assert_allclose(matrix, np.eye(3), atol=1e-12)

    def test_matches_oracle(self, shifted_camera, canonical_camera):
        """Test agreement with explicit unprojection and projection."""
        pixels = [(0.0, 0.0), (31.0, 23.0), (10.25, 7.5)]
        for distance in (1.5, 4.0, 20.0):
            matrix = plane_homography(shifted_camera, canonical_camera, distance)
            for pixel in pixels:
                mapped = matrix @ np.array([*pixel, 1.0])
                expected = unproject_project_oracle(shifted_camera, canonical_camera, distance, pixel)
                np.testing.assert_allclose(mapped[:2] / mapped[2], expected, atol=1e-9)

    def test_stack_matches_single(self, shifted_camera, canonical_camera):
        """Test that batched and single homographies agree."""
        stack = plane_homographies(shifted_camera, canonical_camera, [2.0, 5.0])
        np.testing.assert_allclose(stack[1], plane_homography(shifted_camera, canonical_camera, 5.0))

    def test_requires_canonical_target(self, shifted_camera, canonical_camera):
        """Test that an unnormalized target is rejected."""
        with pytest.raises(InvalidCameraError, match="normalized"):
            plane_homography(canonical_camera, shifted_camera, 2.0)

    def test_rejects_non_positive_distance(self, shifted_camera, canonical_camera):
        """Test that planes must lie in front of the target."""
        with pytest.raises(BoundsError):
            plane_homographies(shifted_camera, canonical_camera, [1.0, 0.0])


class TestEncodings:
    """Tests for angular encoding and epipolar geometry."""

    def test_angular_encoding_on_axis(self, canonical_camera):
        """Test that the target itself has cosine 1."""
        assert angular_encoding(canonical_camera, 3.0) == pytest.approx(1.0)

    def test_angular_encoding_off_axis(self, intrinsics):
        """Test a view displaced sideways by the plane distance."""
        view = Camera(intrinsics, np.eye(3), np.array([-2.0, 0.0, 0.0]), 32, 24)
        assert angular_encoding(view, 2.0) == pytest.approx(np.sqrt(0.5))

    def test_angular_encoding_degenerate(self, intrinsics):
        """Test a view centered on the plane center."""
        view = Camera(intrinsics, np.eye(3), np.array([0.0, 0.0, -2.0]), 32, 24)
        with pytest.raises(DegenerateGeometryError):
            angular_encoding(view, 2.0)

    def test_angular_encoding_ignores_world_frame(self, intrinsics):
        """Test that a rigid change of world frame leaves the encoding unchanged."""
        target = Camera(intrinsics, rotation_from_axis_angle([0.1, -0.2, 0.05]), np.array([0.3, 0.1, 0.5]), 32, 24)
        view = Camera(intrinsics, rotation_from_axis_angle([-0.05, 0.15, 0.0]), np.array([-0.8, 0.2, 0.4]), 32, 24)
        frame_rotation = rotation_from_axis_angle([0.7, 0.3, -0.4])
        frame_shift = np.array([2.0, -1.0, 5.0])

        def moved(cam: Camera) -> Camera:
            rotation = cam.rotation @ frame_rotation.T
            return cam.with_pose(rotation, cam.translation - rotation @ frame_shift)

        (before,), _ = normalize_to_target([view], target)
        (after,), _ = normalize_to_target([moved(view)], moved(target))
        for distance in (1.0, 3.0, 10.0):
            assert angular_encoding(after, distance) == pytest.approx(angular_encoding(before, distance), abs=1e-12)

    def test_fundamental_constraint(self, shifted_camera, canonical_camera):
        """Test x_view^T F x_target = 0 for a transferred pixel."""
        fundamental = fundamental_matrix(shifted_camera, canonical_camera)
        target_pixel = np.array([12.0, 9.0, 1.0])
        view_pixel = np.append(
            unproject_project_oracle(shifted_camera, canonical_camera, 3.0, target_pixel[:2]), 1.0
        )
        residual = view_pixel @ fundamental @ target_pixel
        assert abs(residual) / np.linalg.norm(fundamental) < 1e-9

    def test_fundamental_zero_baseline(self, canonical_camera):
        """Test that a pure rotation has no fundamental matrix."""
        with pytest.raises(DegenerateGeometryError):
            fundamental_matrix(canonical_camera, canonical_camera)
