"""Procedural plane scenes with an analytic ground-truth renderer.

Scenes are stacks of opaque, world-axis-aligned planes at world depth
``z = depth`` carrying band-limited sinusoid textures. Cameras sit on a
short horizontal arc looking at the scene center; the arc passes through the
world origin, so the middle view of an odd-sized rig is canonical.
"""

import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from planesweep_glr.camera import Camera, camera_center, look_at
from planesweep_glr.exceptions import BoundsError, ShapeMismatchError
from planesweep_glr.psv import ImageBuffer

logger = logging.getLogger(__name__)

GENERATOR_VERSION = 1

# Shortest texture period in pixels at the plane's own depth.
MIN_PERIOD_PX = 8.0
ARC_HALF_ANGLE = 0.3
SINGLE_PLANE_DEPTH = 4.0
TERMS_PER_CHANNEL = 2


@dataclass(frozen=True, eq=False)
class TextureSpec:
    """Sum of separable sinusoids per color channel.

    ``value(x, y) = 0.5 + sum_k a_k sin(w1_k x + p1_k) sin(w2_k y + p2_k)``,
    clamped to [0, 1]. Arrays have shape (3, K), (3, K, 2) and (3, K, 2).
    """

    amplitudes: npt.NDArray[np.float64]
    frequencies: npt.NDArray[np.float64]
    phases: npt.NDArray[np.float64]

    def __post_init__(self) -> None:
        channels, terms = self.amplitudes.shape
        if channels != 3 or self.frequencies.shape != (3, terms, 2) or self.phases.shape != (3, terms, 2):
            raise ShapeMismatchError(
                f"texture arrays must be (3, K), (3, K, 2), (3, K, 2); got "
                f"{self.amplitudes.shape}, {self.frequencies.shape}, {self.phases.shape}"
            )

    def value(self, x: npt.ArrayLike, y: npt.ArrayLike) -> npt.NDArray[np.float64]:
        """Evaluate the texture at plane coordinates; returns (3, *x.shape)."""
        xs = np.asarray(x, dtype=np.float64)
        ys = np.asarray(y, dtype=np.float64)
        out = np.full((3, *xs.shape), 0.5)
        for c in range(3):
            for k in range(self.amplitudes.shape[1]):
                (w1, w2), (p1, p2) = self.frequencies[c, k], self.phases[c, k]
                out[c] += self.amplitudes[c, k] * np.sin(w1 * xs + p1) * np.sin(w2 * ys + p2)
        return np.clip(out, 0.0, 1.0)

    @property
    def max_frequency(self) -> float:
        return float(np.max(np.abs(self.frequencies)))


@dataclass(frozen=True, eq=False)
class Plane:
    """Opaque rectangle ``x0 <= x <= x1, y0 <= y <= y1`` at world ``z = depth``."""

    depth: float
    extent: tuple[float, float, float, float]
    texture: TextureSpec

    def __post_init__(self) -> None:
        if not self.depth > 0:
            raise BoundsError(f"plane depth must be positive, got {self.depth}")
        x0, x1, y0, y1 = self.extent
        if not (x0 < x1 and y0 < y1):
            raise BoundsError(f"empty plane extent {self.extent}")


@dataclass(frozen=True, eq=False)
class Scene:
    """Procedural scene: planes, a camera rig and depth bounds."""

    planes: tuple[Plane, ...]
    cameras: tuple[Camera, ...]
    near: float
    far: float
    background: npt.NDArray[np.float64]
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        depths = [p.depth for p in self.planes]
        if not self.planes or not 0 < self.near < min(depths) <= max(depths) < self.far:
            raise BoundsError(
                f"need 0 < near < plane depths < far, got near={self.near}, far={self.far}, depths={depths}"
            )


@dataclass(frozen=True, eq=False)
class SceneData:
    """A scene as stored on disk: cameras and images keyed by view id."""

    cameras: dict[int, Camera]
    images: dict[int, ImageBuffer]
    near: float
    far: float
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if set(self.cameras) != set(self.images):
            raise ShapeMismatchError(
                f"camera ids {sorted(self.cameras)} differ from image ids {sorted(self.images)}"
            )
        for view_id, cam in self.cameras.items():
            if self.images[view_id].shape != (3, cam.height, cam.width):
                raise ShapeMismatchError(
                    f"view {view_id}: image {self.images[view_id].shape} does not match camera "
                    f"{cam.width}x{cam.height}"
                )
        if not 0 < self.near < self.far:
            raise BoundsError(f"need 0 < near < far, got near={self.near}, far={self.far}")

    @property
    def view_ids(self) -> list[int]:
        return sorted(self.cameras)


def default_intrinsics(width: int, height: int) -> npt.NDArray[np.float64]:
    """Square pixels, ~45 degree horizontal field of view, centered principal point."""
    focal = 1.2 * width
    return np.array([[focal, 0.0, (width - 1) / 2], [0.0, focal, (height - 1) / 2], [0.0, 0.0, 1.0]])


def arc_rig(rig_size: int, look_depth: float, width: int, height: int) -> list[Camera]:
    """Inward-facing cameras on an arc through the origin, centered on ``(0, 0, look_depth)``."""
    intrinsics = default_intrinsics(width, height)
    target = np.array([0.0, 0.0, look_depth])
    cameras = []
    for i in range(rig_size):
        theta = 2.0 * ARC_HALF_ANGLE * (i / (rig_size - 1) - 0.5)
        center = np.array([look_depth * math.sin(theta), 0.0, look_depth - look_depth * math.cos(theta)])
        cameras.append(look_at(center, target, intrinsics, width, height))
    return cameras


def _random_texture(rng: np.random.Generator, depth: float, focal: float) -> TextureSpec:
    limit = 2.0 * math.pi / MIN_PERIOD_PX * focal / depth
    amplitudes = rng.uniform(0.05, 0.2, size=(3, TERMS_PER_CHANNEL))
    frequencies = rng.uniform(0.3, 1.0, size=(3, TERMS_PER_CHANNEL, 2)) * limit
    phases = rng.uniform(0.0, 2.0 * math.pi, size=(3, TERMS_PER_CHANNEL, 2))
    return TextureSpec(amplitudes, frequencies, phases)


def generate_scene(seed: int, n_planes: int, rig_size: int, width: int = 64, height: int = 64) -> Scene:
    """Build a deterministic procedural scene.

    A single-plane scene puts a plane covering every view at depth 4.
    Otherwise the deepest plane is such a backdrop and the nearer planes are
    smaller rectangles in front of it. Bounds are ``0.75 * nearest`` and
    ``1.5 * deepest``.

    Raises:
        BoundsError: If ``n_planes < 1``, ``rig_size < 2`` or the image is empty.
    """
    if n_planes < 1:
        raise BoundsError(f"n_planes must be >= 1, got {n_planes}")
    if rig_size < 2:
        raise BoundsError(f"rig_size must be >= 2, got {rig_size}")
    if width < 1 or height < 1:
        raise BoundsError(f"image size must be positive, got {width}x{height}")

    rng = np.random.default_rng(seed)
    focal = float(default_intrinsics(width, height)[0, 0])
    if n_planes == 1:
        depths = np.array([SINGLE_PLANE_DEPTH])
    else:
        depths = np.sort(rng.uniform(2.5, 5.5, size=n_planes))
        depths[-1] = max(depths[-1], depths[-2] + 0.5)
    look_depth = float(np.median(depths))
    cameras = arc_rig(rig_size, look_depth, width, height)

    planes = []
    for index, depth in enumerate(depths):
        depth = float(depth)
        if index == len(depths) - 1:
            half = depth * max(width, height) / focal + 2.0 * look_depth * math.sin(ARC_HALF_ANGLE)
            extent = (-half, half, -half, half)
        else:
            view_half = depth * min(width, height) / (2.0 * focal)
            size = rng.uniform(0.3, 0.6, size=2) * view_half
            cx, cy = rng.uniform(-0.5, 0.5, size=2) * view_half
            extent = (cx - size[0], cx + size[0], cy - size[1], cy + size[1])
        planes.append(Plane(depth, extent, _random_texture(rng, depth, focal)))

    background = rng.uniform(0.05, 0.2, size=3)
    meta = {
        "seed": str(seed),
        "generator_version": str(GENERATOR_VERSION),
        "n_planes": str(n_planes),
        "rig_size": str(rig_size),
        "width": str(width),
        "height": str(height),
    }
    logger.debug("generated scene seed=%d with depths %s", seed, depths.tolist())
    return Scene(
        tuple(planes), tuple(cameras), 0.75 * float(depths[0]), 1.5 * float(depths[-1]), background, meta
    )


def camera_rays(cam: Camera) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]:
    """World-space ray origin (3,) and unnormalized directions (3, H, W)."""
    rows, cols = np.meshgrid(np.arange(cam.height, dtype=np.float64), np.arange(cam.width, dtype=np.float64), indexing="ij")
    pixels = np.stack([cols, rows, np.ones_like(rows)])
    directions = np.einsum("ij,jhw->ihw", cam.rotation.T @ np.linalg.inv(cam.intrinsics), pixels)
    return camera_center(cam), directions


def render_ground_truth(scene: Scene, cam: Camera) -> ImageBuffer:
    """Ray-cast ``cam`` against the scene planes; returns (3, H, W) float64.

    Each pixel takes the texture of the nearest plane hit along its ray, or
    the background color when no plane is hit.
    """
    origin, directions = camera_rays(cam)
    image = np.broadcast_to(scene.background[:, None, None], (3, cam.height, cam.width)).copy()
    nearest = np.full((cam.height, cam.width), np.inf)
    dz = directions[2]
    for plane in scene.planes:
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(dz > 0, (plane.depth - origin[2]) / dz, np.inf)
            x = origin[0] + s * directions[0]
            y = origin[1] + s * directions[1]
        x0, x1, y0, y1 = plane.extent
        hit = (s > 0) & np.isfinite(s) & (s < nearest) & (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)
        if not np.any(hit):
            continue
        nearest = np.where(hit, s, nearest)
        image[:, hit] = plane.texture.value(x[hit], y[hit])
    return image


def scaled_camera(cam: Camera, factor: int) -> Camera:
    """The same camera at ``factor`` times the resolution.

    Pixel ``(i, j)`` of the original covers pixels ``factor*i .. factor*i+factor-1``
    (and likewise for columns) of the scaled camera.
    """
    intrinsics = cam.intrinsics.copy()
    intrinsics[:2, :2] *= factor
    intrinsics[:2, 2] = factor * intrinsics[:2, 2] + (factor - 1) / 2
    return Camera(intrinsics, cam.rotation, cam.translation, cam.width * factor, cam.height * factor)


def render_views(scene: Scene, dtype: npt.DTypeLike = np.float64) -> SceneData:
    """Render every rig camera into an in-memory scene with view ids 0..V-1."""
    cameras = dict(enumerate(scene.cameras))
    images = {view_id: render_ground_truth(scene, cam).astype(dtype) for view_id, cam in cameras.items()}
    return SceneData(cameras, images, scene.near, scene.far, dict(scene.meta))
