"""Built-in verification suites run by ``glr selftest``."""

import logging
import time
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from planesweep_glr.camera import (
    Camera,
    fundamental_matrix,
    plane_homographies,
    rotation_from_axis_angle,
    sample_depths,
    unproject_project_oracle,
)
from planesweep_glr.exceptions import BehindCameraError
from planesweep_glr.models import ModelConfig
from planesweep_glr.network import init_weights, render_grouped
from planesweep_glr.nn.blocks import Tape
from planesweep_glr.nn.gradcheck import finite_diff_report
from planesweep_glr.nn.ops import conv2d_backward, conv2d_forward
from planesweep_glr.nn.tensor import CHECK_DTYPE, TRAIN_DTYPE, Params
from planesweep_glr.psv import Rect, source_coordinates

logger = logging.getLogger(__name__)

HOMOGRAPHY_TOL = 1e-6
COLLINEAR_TOL = 1e-6
EPIPOLAR_TOL = 1e-8
GRAD_TOL_64 = 1e-6
GRAD_TOL_32 = 1e-3
# float64 central-difference step: small enough that few coordinates straddle a ReLU kink
FD_STEP_64 = 1e-5


@dataclass(frozen=True)
class SuiteResult:
    """Outcome of one verification suite."""

    name: str
    passed: bool
    metric: float
    tolerance: float
    detail: str
    seconds: float = 0.0


def random_camera(
    rng: np.random.Generator,
    width: int = 64,
    height: int = 48,
    max_angle: float = 0.2,
    max_offset: float = 0.5,
) -> Camera:
    """A camera near the origin with a random small rotation and offset."""
    focal = rng.uniform(0.8, 1.5) * width
    intrinsics = np.array(
        [
            [focal * rng.uniform(0.95, 1.05), rng.uniform(-0.01, 0.01) * focal, rng.uniform(0.4, 0.6) * width],
            [0.0, focal, rng.uniform(0.4, 0.6) * height],
            [0.0, 0.0, 1.0],
        ]
    )
    rotation = rotation_from_axis_angle(rng.uniform(-max_angle, max_angle, size=3))
    translation = rng.uniform(-max_offset, max_offset, size=3)
    return Camera(intrinsics, rotation, translation, width, height)


def canonical_camera(rng: np.random.Generator, width: int = 64, height: int = 48) -> Camera:
    cam = random_camera(rng, width, height)
    return cam.with_pose(np.eye(3), np.zeros(3))


def homography_suite(seed: int = 0, cameras: int = 100, samples: int = 100) -> SuiteResult:
    """Plane homographies against explicit unproject/project, ``cameras * samples`` triples."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    checked = 0
    for _ in range(cameras):
        target = canonical_camera(rng)
        view = random_camera(rng)
        distances = rng.uniform(1.0, 10.0, size=samples)
        pixels = rng.uniform((0.0, 0.0), (target.width, target.height), size=(samples, 2))
        homographies = plane_homographies(view, target, distances)
        for d in range(samples):
            try:
                expected = unproject_project_oracle(view, target, float(distances[d]), pixels[d])
            except BehindCameraError:
                continue
            mapped = homographies[d] @ np.array([pixels[d, 0], pixels[d, 1], 1.0])
            worst = max(worst, float(np.max(np.abs(mapped[:2] / mapped[2] - expected))))
            checked += 1
    return SuiteResult(
        "homography-oracle",
        worst < HOMOGRAPHY_TOL and checked > 0,
        worst,
        HOMOGRAPHY_TOL,
        f"{checked} triples, max deviation {worst:.3e} px",
    )


def epipolar_suite(seed: int = 0, rays: int = 100, num_depths: int = 32) -> SuiteResult:
    """Source samples along each target ray are collinear and satisfy the epipolar constraint."""
    rng = np.random.default_rng(seed)
    target = canonical_camera(rng)
    views = [random_camera(rng) for _ in range(2)]
    depths = sample_depths(1.0, 10.0, num_depths, "depth")
    worst_line = 0.0
    worst_epipolar = 0.0
    for view in views:
        fundamental = fundamental_matrix(view, target)
        fundamental = fundamental / np.linalg.norm(fundamental)
        for _ in range(rays):
            x, y = int(rng.integers(target.width)), int(rng.integers(target.height))
            coords, valid = source_coordinates(view, target, depths, Rect(x, y, 1, 1))
            points = coords[:, 0, 0][valid[:, 0, 0]]
            if len(points) < 3:
                continue
            direction = points[-1] - points[0]
            length = float(np.linalg.norm(direction))
            if length > 1e-9:
                offsets = points - points[0]
                distances = np.abs(direction[0] * offsets[:, 1] - direction[1] * offsets[:, 0]) / length
                worst_line = max(worst_line, float(distances.max()))
            x_target = np.array([x, y, 1.0])
            line = fundamental @ x_target
            for point in points:
                x_view = np.array([point[0], point[1], 1.0])
                residual = abs(x_view @ line) / (np.linalg.norm(x_view) * np.linalg.norm(line))
                worst_epipolar = max(worst_epipolar, float(residual))
    passed = worst_line < COLLINEAR_TOL and worst_epipolar < EPIPOLAR_TOL
    return SuiteResult(
        "epipolar",
        passed,
        max(worst_line, worst_epipolar),
        COLLINEAR_TOL,
        f"collinearity {worst_line:.3e} px, normalized epipolar residual {worst_epipolar:.3e}",
    )


def _network_gradcheck(cfg: ModelConfig, size: int, seed: int, num_coords: int) -> float:
    rng = np.random.default_rng(seed)
    weights = init_weights(cfg, seed, CHECK_DTYPE)
    x = rng.uniform(0.0, 1.0, size=(cfg.num_groups, cfg.input_channels, size, size))
    weighting = rng.standard_normal((3, size, size))

    def objective(params: Params) -> float:
        return float(np.sum(render_grouped(x, cfg, params) * weighting))

    tape = Tape()
    render_grouped(x, cfg, weights, tape)
    _, grads = tape.backward(weighting)
    report = finite_diff_report(objective, weights, grads, h=FD_STEP_64, num_coords=num_coords, seed=seed)
    logger.debug("network gradcheck: %d checked, %d kinks skipped", report.checked, report.skipped)
    return report.max_rel_error


def _conv_gradcheck_32(seed: int) -> float:
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, size=(2, 4, 8, 8)).astype(TRAIN_DTYPE)
    params = {
        "weight": rng.uniform(-0.5, 0.5, size=(6, 4, 3, 3)).astype(TRAIN_DTYPE),
        "bias": rng.uniform(-0.5, 0.5, size=(6,)).astype(TRAIN_DTYPE),
    }
    weighting = rng.uniform(-1.0, 1.0, size=(2, 6, 8, 8)).astype(TRAIN_DTYPE)

    def objective(p: Params) -> float:
        y, _ = conv2d_forward(x, p["weight"], p["bias"])
        return float(np.sum(y * weighting, dtype=np.float64))

    _, cache = conv2d_forward(x, params["weight"], params["bias"])
    _, dw, db = conv2d_backward(weighting, cache)
    return finite_diff_report(
        objective, params, {"weight": dw, "bias": db}, h=1.0, num_coords=230, seed=seed
    ).max_rel_error


def gradient_suite(seed: int = 0, quick: bool = False) -> SuiteResult:
    """Finite-difference check of the full renderer (64-bit) and of convolution (32-bit)."""
    if quick:
        cfg, size = ModelConfig(num_depths=4, group_size=2, channels=2, num_views=1), 8
    else:
        cfg, size = ModelConfig(num_depths=8, group_size=2, channels=8, num_views=2), 16
    error64 = _network_gradcheck(cfg, size, seed, num_coords=200)
    error32 = _conv_gradcheck_32(seed)
    return SuiteResult(
        "gradient",
        error64 < GRAD_TOL_64 and error32 < GRAD_TOL_32,
        error64,
        GRAD_TOL_64,
        f"renderer float64 max rel error {error64:.3e}, conv float32 {error32:.3e}",
    )


def run_selftest(seed: int = 0, quick: bool = False) -> list[SuiteResult]:
    """Run every suite and return their results in order."""
    suites: list[tuple[str, Callable[[], SuiteResult]]] = [
        ("homography-oracle", lambda: homography_suite(seed)),
        ("epipolar", lambda: epipolar_suite(seed)),
        ("gradient", lambda: gradient_suite(seed, quick)),
    ]
    results = []
    for name, suite in suites:
        started = time.perf_counter()
        result = suite()
        elapsed = time.perf_counter() - started
        results.append(
            SuiteResult(result.name, result.passed, result.metric, result.tolerance, result.detail, elapsed)
        )
        logger.info("%s: %s (%.2fs)", name, "ok" if result.passed else "FAILED", elapsed)
    return results
