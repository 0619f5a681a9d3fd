"""Plane sweep volumes: inverse warping of input views onto target depth planes.

Layouts:
    PlaneSweepVolume.data   (D, V, Cin, H, W), Cin = 3 colors (+1 angular)
    GroupedPSV.data         (D/G, G*V*Cin (+2 positional), H, W)

Within a depth group the channel order is depth-major, then view, then
color (angular encoding last among the per-view channels). Positional
channels (row, column) come after all PSV channels.
"""

import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from planesweep_glr import runtime
from planesweep_glr.camera import Camera, DepthPlanes, angular_encoding, plane_homographies
from planesweep_glr.exceptions import ShapeMismatchError, SingularMatrixError

logger = logging.getLogger(__name__)

ImageBuffer = npt.NDArray[np.floating]

# Sample coordinates this close to a pixel center are snapped onto it, so
# identity warps reproduce their source exactly.
SNAP_TOL = 1e-9
_OUTSIDE = -1e6


@dataclass(frozen=True)
class Rect:
    """Axis-aligned pixel rectangle in full target-image coordinates."""

    x0: int
    y0: int
    width: int
    height: int

    @classmethod
    def full(cls, height: int, width: int) -> "Rect":
        return cls(0, 0, width, height)

    def fits(self, height: int, width: int) -> bool:
        """True when the rectangle lies inside a ``height x width`` image."""
        return (
            self.width >= 1
            and self.height >= 1
            and self.x0 >= 0
            and self.y0 >= 0
            and self.x0 + self.width <= width
            and self.y0 + self.height <= height
        )

    def crop(self, image: ImageBuffer) -> ImageBuffer:
        """Cut this rectangle out of a (C, H, W) image."""
        return image[:, self.y0 : self.y0 + self.height, self.x0 : self.x0 + self.width]


@dataclass(frozen=True, eq=False)
class PlaneSweepVolume:
    """Input views reprojected onto the target's depth planes."""

    data: ImageBuffer
    depths: DepthPlanes
    patch: Rect
    full_size: tuple[int, int]

    def __post_init__(self) -> None:
        if self.data.ndim != 5:
            raise ShapeMismatchError(f"PSV data must be 5D, got shape {self.data.shape}")
        if self.data.shape[0] != len(self.depths):
            raise ShapeMismatchError(
                f"PSV has {self.data.shape[0]} depth slices but {len(self.depths)} planes"
            )
        if self.data.shape[3:] != (self.patch.height, self.patch.width):
            raise ShapeMismatchError(
                f"PSV spatial size {self.data.shape[3:]} does not match patch {self.patch}"
            )

    @property
    def num_depths(self) -> int:
        return self.data.shape[0]

    @property
    def num_views(self) -> int:
        return self.data.shape[1]

    @property
    def color_channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True, eq=False)
class GroupedPSV:
    """A PSV viewed as D/G depth groups with stacked channels."""

    data: ImageBuffer
    group_size: int
    num_views: int
    color_channels: int
    depths: DepthPlanes
    patch: Rect
    full_size: tuple[int, int]
    positional: bool = False

    @property
    def num_groups(self) -> int:
        return self.data.shape[0]


def as_image(values: npt.ArrayLike, dtype: npt.DTypeLike = np.float32) -> ImageBuffer:
    """Validate a (C, H, W) color image with finite values in [0, 1]."""
    image = np.asarray(values, dtype=dtype)
    if image.ndim != 3:
        raise ShapeMismatchError(f"image must be (C, H, W), got shape {image.shape}")
    if not np.all(np.isfinite(image)):
        raise ValueError("image contains non-finite values")
    if image.size and (image.min() < 0 or image.max() > 1):
        raise ValueError("color image values must lie in [0, 1]")
    return image


def _pixel_grid(rect: Rect) -> npt.NDArray[np.float64]:
    ys, xs = np.meshgrid(
        np.arange(rect.y0, rect.y0 + rect.height, dtype=np.float64),
        np.arange(rect.x0, rect.x0 + rect.width, dtype=np.float64),
        indexing="ij",
    )
    return np.stack([xs.ravel(), ys.ravel(), np.ones(xs.size)])


def _dehomogenize(points: npt.NDArray[np.float64], shape: tuple[int, ...]) -> tuple[
    npt.NDArray[np.float64], npt.NDArray[np.bool_]
]:
    w = points[..., 2, :]
    valid = w > 0
    safe_w = np.where(valid, w, 1.0)
    coords = np.stack([points[..., 0, :] / safe_w, points[..., 1, :] / safe_w], axis=-1)
    rounded = np.round(coords)
    # absolute, in pixels
    coords = np.where(np.abs(coords - rounded) < SNAP_TOL, rounded, coords)
    coords = np.where(valid[..., None], coords, _OUTSIDE)
    return coords.reshape(*shape, 2), valid.reshape(shape)


def apply_homography(matrix: npt.ArrayLike, rect: Rect) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.bool_]]:
    """Source coordinates ``H @ (x, y, 1)`` for every pixel of ``rect``.

    Returns:
        (H, W, 2) coordinates (x, y) and a mask of pixels with positive
        homogeneous depth.
    """
    points = np.asarray(matrix, dtype=np.float64) @ _pixel_grid(rect)
    return _dehomogenize(points, (rect.height, rect.width))


def source_coordinates(
    view: Camera, target: Camera, depths: DepthPlanes, patch: Rect
) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.bool_]]:
    """Per-depth sampling coordinates in ``view`` for every patch pixel.

    Returns:
        (D, H, W, 2) coordinates and a (D, H, W) positive-depth mask.
    """
    homographies = plane_homographies(view, target, depths.distances)
    points = homographies @ _pixel_grid(patch)[None]
    return _dehomogenize(points, (len(depths), patch.height, patch.width))


def bilinear_sample(
    src: ImageBuffer, coords: npt.NDArray[np.float64], valid: npt.NDArray[np.bool_] | None = None
) -> npt.NDArray[np.float64]:
    """Bilinearly sample a (C, H, W) image at (..., 2) coordinates.

    Each of the four neighbours outside the image contributes zero.

    Returns:
        Array of shape (C, ...).
    """
    image = np.asarray(src, dtype=np.float64)
    _, height, width = image.shape
    x, y = coords[..., 0], coords[..., 1]
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx, fy = x - x0, y - y0
    x0i, y0i = x0.astype(np.int64), y0.astype(np.int64)
    out = np.zeros((image.shape[0], *x.shape))
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            xi, yi = x0i + dx, y0i + dy
            inside = (xi >= 0) & (xi < width) & (yi >= 0) & (yi < height)
            weight = np.where(inside, wx * wy, 0.0)
            values = image[:, np.clip(yi, 0, height - 1), np.clip(xi, 0, width - 1)]
            out += values * weight
    if valid is not None:
        out = np.where(valid, out, 0.0)
    return out


def warp_image(src: ImageBuffer, matrix: npt.ArrayLike, out_rect: Rect) -> ImageBuffer:
    """Inverse-warp ``src`` onto ``out_rect`` with homography ``matrix``.

    Raises:
        SingularMatrixError: If the homography is singular.
    """
    h = np.asarray(matrix, dtype=np.float64)
    if h.shape != (3, 3) or not np.all(np.isfinite(h)):
        raise SingularMatrixError("homography must be a finite 3x3 matrix")
    if abs(np.linalg.det(h)) <= 1e-12 * np.max(np.abs(h)) ** 3:
        raise SingularMatrixError("homography is singular")
    coords, valid = apply_homography(h, out_rect)
    src_array = np.asarray(src)
    return bilinear_sample(src_array, coords, valid).astype(src_array.dtype, copy=False)


def build_psv(
    images: Sequence[ImageBuffer],
    views: Sequence[Camera],
    target: Camera,
    depths: DepthPlanes,
    patch: Rect,
    with_angular: bool = False,
    dtype: npt.DTypeLike = np.float32,
) -> PlaneSweepVolume:
    """Warp every input view onto every depth plane of the target.

    Args:
        images: V color images (3, H_v, W_v).
        views: V cameras normalized to the target.
        target: Canonical target camera.
        depths: Plane distances from the target.
        patch: Region of the target image to build.
        with_angular: Append the per-(depth, view) angular encoding channel.
        dtype: Floating dtype of the volume.

    Returns:
        The plane sweep volume over ``patch``.
    """
    if len(images) != len(views) or not views:
        raise ShapeMismatchError(
            f"need matching non-empty image and camera lists, got {len(images)} and {len(views)}"
        )
    if not patch.fits(target.height, target.width):
        raise ShapeMismatchError(
            f"patch {patch} lies outside the {target.width}x{target.height} target image"
        )
    channels = 4 if with_angular else 3
    data = np.zeros((len(depths), len(views), channels, patch.height, patch.width), dtype=dtype)

    def fill(v: int) -> None:
        image = np.asarray(images[v])
        if image.ndim != 3 or image.shape[0] != 3:
            raise ShapeMismatchError(f"input image {v} must be (3, H, W), got {image.shape}")
        coords, valid = source_coordinates(views[v], target, depths, patch)
        warped = bilinear_sample(image, coords, valid)
        data[:, v, :3] = np.moveaxis(warped, 0, 1)
        if with_angular:
            for d, distance in enumerate(depths.distances):
                data[d, v, 3] = angular_encoding(views[v], float(distance))

    if runtime.deterministic_mode() or len(views) == 1:
        for v in range(len(views)):
            fill(v)
    else:
        with ThreadPoolExecutor(max_workers=min(len(views), 8)) as pool:
            list(pool.map(fill, range(len(views))))
    logger.debug("built PSV %s for patch %s", data.shape, patch)
    return PlaneSweepVolume(data, depths, patch, (target.height, target.width))


def ray_slice(psv: PlaneSweepVolume, h: int, w: int) -> ImageBuffer:
    """The (D, V, Cin) encoding of the camera ray through patch pixel (h, w)."""
    if not (0 <= h < psv.patch.height and 0 <= w < psv.patch.width):
        raise IndexError(f"pixel ({h}, {w}) outside {psv.patch.height}x{psv.patch.width} patch")
    return psv.data[:, :, :, h, w]


def group_depths(psv: PlaneSweepVolume, group_size: int) -> GroupedPSV:
    """View D depths as D/G groups of G consecutive depths (no arithmetic)."""
    depth, views, channels, height, width = psv.data.shape
    if group_size < 1 or depth % group_size:
        raise ShapeMismatchError(f"D={depth} is not divisible by G={group_size}")
    data = np.ascontiguousarray(psv.data).reshape(
        depth // group_size, group_size * views * channels, height, width
    )
    return GroupedPSV(data, group_size, views, channels, psv.depths, psv.patch, psv.full_size)


def ungroup_depths(grouped: GroupedPSV) -> PlaneSweepVolume:
    """Inverse of :func:`group_depths`; positional channels are dropped."""
    data = grouped.data
    if grouped.positional:
        data = data[:, :-2]
    groups, _, height, width = data.shape
    volume = np.ascontiguousarray(data).reshape(
        groups * grouped.group_size, grouped.num_views, grouped.color_channels, height, width
    )
    return PlaneSweepVolume(volume, grouped.depths, grouped.patch, grouped.full_size)


def positional_channels(patch: Rect, full_size: tuple[int, int], dtype: npt.DTypeLike = np.float32) -> ImageBuffer:
    """(2, H, W) global row and column coordinates normalized to [0, 1]."""
    full_h, full_w = full_size
    rows = np.arange(patch.y0, patch.y0 + patch.height, dtype=np.float64)
    cols = np.arange(patch.x0, patch.x0 + patch.width, dtype=np.float64)
    rows = rows / (full_h - 1) if full_h > 1 else np.zeros_like(rows)
    cols = cols / (full_w - 1) if full_w > 1 else np.zeros_like(cols)
    grid = np.stack(np.meshgrid(rows, cols, indexing="ij"))
    return grid.astype(dtype)


def append_positional_channels(grouped: GroupedPSV) -> GroupedPSV:
    """Append global (row, column) coordinate channels to every depth group."""
    if grouped.positional:
        raise ValueError("positional channels are already present")
    coords = positional_channels(grouped.patch, grouped.full_size, grouped.data.dtype)
    tiled = np.broadcast_to(coords, (grouped.num_groups, *coords.shape))
    data = np.concatenate([grouped.data, tiled], axis=1)
    return GroupedPSV(
        data,
        grouped.group_size,
        grouped.num_views,
        grouped.color_channels,
        grouped.depths,
        grouped.patch,
        grouped.full_size,
        positional=True,
    )


def mean_psv(psv: PlaneSweepVolume) -> list[ImageBuffer]:
    """Per-depth view average of the color channels (the focus stack)."""
    if psv.num_views < 2:
        logger.warning("focus stack from a single view carries no matching information")
    means = np.clip(psv.data[:, :, :3].mean(axis=1), 0.0, 1.0)
    return [means[d] for d in range(psv.num_depths)]


def mean_psv_all(psv: PlaneSweepVolume) -> ImageBuffer:
    """Average over views and depths: a blurry estimate of the target view."""
    return np.clip(psv.data[:, :, :3].mean(axis=(0, 1)), 0.0, 1.0)


def focus_curve(psv: PlaneSweepVolume, margin: int | None = None) -> npt.NDArray[np.float64]:
    """Mean cross-view color variance per depth over the patch interior.

    Args:
        psv: Volume with at least two views.
        margin: Border pixels excluded on each side; defaults to 1/8 of the
            smaller patch side.
    """
    height, width = psv.patch.height, psv.patch.width
    if margin is None:
        margin = min(height, width) // 8
    if 2 * margin >= min(height, width):
        raise ValueError(f"margin {margin} leaves no interior in a {height}x{width} patch")
    interior = psv.data[:, :, :3, margin : height - margin, margin : width - margin]
    variance = np.asarray(interior, dtype=np.float64).var(axis=1)
    return variance.mean(axis=(1, 2, 3))


def sharpest_depth(psv: PlaneSweepVolume, margin: int | None = None) -> int:
    """Index of the depth plane with the lowest cross-view variance."""
    return int(np.argmin(focus_curve(psv, margin)))
