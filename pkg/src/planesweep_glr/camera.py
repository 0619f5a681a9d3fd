"""Pinhole cameras, target-centric normalization and plane-induced homographies.

Convention: a world point ``X`` maps to camera coordinates
``x_cam = R @ X + t``; the camera looks down ``+z`` and pixel coordinates are
the perspective division of ``K @ x_cam``. Pixel ``(i, j)`` (row, column) sits
at the continuous coordinate ``(j, i)``.
"""

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from planesweep_glr.exceptions import (
    BehindCameraError,
    BoundsError,
    DegenerateGeometryError,
    InvalidCameraError,
    SingularMatrixError,
)
from planesweep_glr.models import SamplingMode

Array = npt.NDArray[np.float64]

ORTHONORMAL_TOL = 1e-9
TARGET_NORMAL = np.array([0.0, 0.0, 1.0])


def _frozen(values: npt.ArrayLike, shape: tuple[int, ...], name: str) -> Array:
    array = np.array(values, dtype=np.float64)
    if array.shape != shape:
        raise InvalidCameraError(f"{name} must have shape {shape}, got {array.shape}")
    if not np.all(np.isfinite(array)):
        raise InvalidCameraError(f"{name} contains non-finite values")
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Camera:
    """Intrinsics and world-to-camera extrinsics of one pinhole view."""

    intrinsics: Array
    rotation: Array
    translation: Array
    width: int
    height: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "intrinsics", _frozen(self.intrinsics, (3, 3), "intrinsics"))
        object.__setattr__(self, "rotation", _frozen(self.rotation, (3, 3), "rotation"))
        object.__setattr__(self, "translation", _frozen(self.translation, (3,), "translation"))
        if self.width < 1 or self.height < 1:
            raise InvalidCameraError(f"image size must be positive, got {self.width}x{self.height}")
        if self.intrinsics[0, 0] <= 0 or self.intrinsics[1, 1] <= 0:
            raise InvalidCameraError("focal lengths fx, fy must be positive")
        check_rotation(self.rotation)

    @property
    def fx(self) -> float:
        return float(self.intrinsics[0, 0])

    @property
    def fy(self) -> float:
        return float(self.intrinsics[1, 1])

    @property
    def size(self) -> tuple[int, int]:
        """Image size as (height, width)."""
        return self.height, self.width

    @property
    def is_canonical(self) -> bool:
        """True when the camera sits at the world origin looking down +z."""
        return bool(
            np.max(np.abs(self.rotation - np.eye(3))) < ORTHONORMAL_TOL
            and np.max(np.abs(self.translation)) < ORTHONORMAL_TOL
        )

    def to_camera(self, points: npt.ArrayLike) -> Array:
        """Transform (N, 3) world points into camera coordinates."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return pts @ self.rotation.T + self.translation

    def project(self, points: npt.ArrayLike) -> Array:
        """Project (N, 3) world points to (N, 2) pixel coordinates.

        Raises:
            BehindCameraError: If any point has non-positive depth.
        """
        cam = self.to_camera(points)
        if np.any(cam[:, 2] <= 0):
            raise BehindCameraError("point at or behind the camera plane")
        pix = cam @ self.intrinsics.T
        return pix[:, :2] / pix[:, 2:3]

    def with_pose(self, rotation: npt.ArrayLike, translation: npt.ArrayLike) -> "Camera":
        """Return a copy with new extrinsics."""
        return Camera(self.intrinsics, np.asarray(rotation), np.asarray(translation), self.width, self.height)


def check_rotation(rotation: npt.ArrayLike) -> None:
    """Validate that a matrix is a proper rotation.

    Raises:
        InvalidCameraError: If the matrix is not orthonormal with det +1.
    """
    r = np.asarray(rotation, dtype=np.float64)
    if np.max(np.abs(r.T @ r - np.eye(3))) >= ORTHONORMAL_TOL:
        raise InvalidCameraError("rotation is not orthonormal")
    if np.linalg.det(r) <= 0:
        raise InvalidCameraError("rotation has negative determinant")


def rotation_from_axis_angle(axis_angle: npt.ArrayLike) -> Array:
    """Rodrigues' formula: rotation by ``|w|`` radians about ``w / |w|``."""
    w = np.asarray(axis_angle, dtype=np.float64)
    theta = float(np.linalg.norm(w))
    if theta == 0.0:
        return np.eye(3)
    k = skew(w / theta)
    return np.eye(3) + math.sin(theta) * k + (1.0 - math.cos(theta)) * (k @ k)


def camera_center(cam: Camera) -> Array:
    """Camera center in world coordinates, C = -R^T t."""
    return -cam.rotation.T @ cam.translation


def look_at(
    center: npt.ArrayLike,
    point: npt.ArrayLike,
    intrinsics: npt.ArrayLike,
    width: int,
    height: int,
) -> Camera:
    """Build a camera at ``center`` whose optical axis passes through ``point``.

    Image rows grow along world +y.
    """
    c = np.asarray(center, dtype=np.float64)
    forward = np.asarray(point, dtype=np.float64) - c
    norm = np.linalg.norm(forward)
    if norm == 0:
        raise DegenerateGeometryError("look_at point coincides with the camera center")
    forward /= norm
    right = np.cross([0.0, 1.0, 0.0], forward)
    if np.linalg.norm(right) < 1e-12:
        raise DegenerateGeometryError("viewing direction is parallel to the down axis")
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward])
    return Camera(np.asarray(intrinsics), rotation, -rotation @ c, width, height)


def normalize_to_target(cameras: Sequence[Camera], target: Camera) -> tuple[list[Camera], Camera]:
    """Move the world origin to the target camera center.

    The returned target has identity rotation and zero translation; every
    input camera induces the same world-to-pixel map composed with the rigid
    change of frame X_new = R* X + t*.
    """
    r_t, t_t = target.rotation, target.translation
    check_rotation(r_t)
    normalized = []
    for cam in cameras:
        check_rotation(cam.rotation)
        if np.array_equal(cam.rotation, r_t) and np.array_equal(cam.translation, t_t):
            rotation, translation = np.eye(3), np.zeros(3)
        else:
            rotation = cam.rotation @ r_t.T
            translation = cam.translation - rotation @ t_t
        normalized.append(cam.with_pose(rotation, translation))
    return normalized, target.with_pose(np.eye(3), np.zeros(3))


@dataclass(frozen=True, eq=False)
class DepthPlanes:
    """Fronto-parallel planes at distances ``a_1 < ... < a_D`` from the target."""

    distances: Array
    mode: SamplingMode = SamplingMode.UNIFORM_DEPTH
    normal: Array = field(default_factory=lambda: TARGET_NORMAL.copy())

    def __post_init__(self) -> None:
        distances = np.array(self.distances, dtype=np.float64).reshape(-1)
        if distances.size < 1:
            raise BoundsError("at least one depth plane is required")
        if np.any(distances <= 0):
            raise BoundsError("depth plane distances must be positive")
        if np.any(np.diff(distances) <= 0):
            raise BoundsError("depth plane distances must be strictly increasing")
        distances.setflags(write=False)
        normal = np.array(self.normal, dtype=np.float64)
        normal.setflags(write=False)
        object.__setattr__(self, "distances", distances)
        object.__setattr__(self, "normal", normal)

    def __len__(self) -> int:
        return int(self.distances.size)

    @property
    def near(self) -> float:
        return float(self.distances[0])

    @property
    def far(self) -> float:
        return float(self.distances[-1])


def sample_depths(near: float, far: float, count: int, mode: SamplingMode | str) -> DepthPlanes:
    """Place ``count`` planes between ``near`` and ``far``, both included.

    Raises:
        BoundsError: If ``near <= 0``, ``near >= far`` or ``count < 2``.
    """
    mode = SamplingMode(mode)
    if near <= 0 or near >= far:
        raise BoundsError(f"need 0 < near < far, got near={near}, far={far}")
    if count < 2:
        raise BoundsError(f"need at least 2 depth planes, got {count}")
    if mode is SamplingMode.UNIFORM_DEPTH:
        distances = np.linspace(near, far, count)
    else:
        distances = 1.0 / np.linspace(1.0 / near, 1.0 / far, count)
    distances[0], distances[-1] = near, far
    return DepthPlanes(distances, mode)


def _require_canonical(target: Camera) -> None:
    if not target.is_canonical:
        raise InvalidCameraError("target camera must be normalized (R = I, t = 0)")


def _inverse(matrix: Array, name: str) -> Array:
    try:
        return np.linalg.inv(matrix)
    except np.linalg.LinAlgError as e:
        raise SingularMatrixError(f"{name} is singular") from e


def plane_homographies(view: Camera, target: Camera, distances: npt.ArrayLike) -> Array:
    """Stack of homographies for several plane distances, shape (D, 3, 3).

    Each ``H_d = K_v (R_v + t_v n^T / a_d) K*^-1`` maps homogeneous target
    pixels to view pixels for points on the plane ``z = a_d``. The plus sign
    follows from ``x_cam = R X + t`` and ``n^T X = a_d`` on the plane.
    """
    _require_canonical(target)
    a = np.asarray(distances, dtype=np.float64).reshape(-1)
    if np.any(a <= 0):
        raise BoundsError("plane distances must be positive")
    k_target_inv = _inverse(target.intrinsics, "target intrinsics")
    shift = np.outer(view.translation, TARGET_NORMAL)
    planar = view.rotation[None] + shift[None] / a[:, None, None]
    return view.intrinsics[None] @ planar @ k_target_inv[None]


def plane_homography(view: Camera, target: Camera, distance: float) -> Array:
    """Homography induced by the plane ``z = distance`` in the target frame."""
    return plane_homographies(view, target, [distance])[0]


def unproject_project_oracle(
    view: Camera, target: Camera, distance: float, pixel: npt.ArrayLike
) -> Array:
    """Brute-force transfer of a target pixel to the view through plane ``z = distance``.

    Raises:
        BehindCameraError: If the plane point lies behind the view camera.
    """
    _require_canonical(target)
    if distance <= 0:
        raise BoundsError("plane distance must be positive")
    u, v = np.asarray(pixel, dtype=np.float64)
    try:
        ray = np.linalg.solve(target.intrinsics, np.array([u, v, 1.0]))
    except np.linalg.LinAlgError as e:
        raise SingularMatrixError("target intrinsics are singular") from e
    point = ray * (distance / ray[2])
    cam = view.rotation @ point + view.translation
    if cam[2] <= 0:
        raise BehindCameraError(f"plane point {point} is behind the view camera")
    pix = view.intrinsics @ cam
    return pix[:2] / pix[2]


def angular_encoding(view: Camera, distance: float) -> float:
    """Cosine between the view-to-plane-center direction and the target normal.

    The plane center is where the target optical axis meets the plane,
    ``(0, 0, distance)`` in the normalized frame.

    Raises:
        DegenerateGeometryError: If the view center coincides with the plane center.
    """
    direction = distance * TARGET_NORMAL - camera_center(view)
    norm = np.linalg.norm(direction)
    if norm == 0:
        raise DegenerateGeometryError("camera center lies on the plane center")
    return float(np.clip(direction @ TARGET_NORMAL / norm, -1.0, 1.0))


def skew(vector: npt.ArrayLike) -> Array:
    """Cross-product matrix [v]_x."""
    x, y, z = np.asarray(vector, dtype=np.float64)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def fundamental_matrix(view: Camera, target: Camera) -> Array:
    """Fundamental matrix with ``x_view^T F x_target = 0`` for correspondences.

    Raises:
        DegenerateGeometryError: If the view has no translation (pure rotation).
    """
    _require_canonical(target)
    if np.linalg.norm(view.translation) < 1e-12:
        raise DegenerateGeometryError("fundamental matrix undefined for zero baseline")
    k_view_inv = _inverse(view.intrinsics, "view intrinsics")
    k_target_inv = _inverse(target.intrinsics, "target intrinsics")
    return k_view_inv.T @ skew(view.translation) @ view.rotation @ k_target_inv
