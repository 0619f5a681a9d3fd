"""Shared test fixtures for planesweep-glr."""

from collections.abc import Iterator
from pathlib import Path

import numpy as np
import pytest

from planesweep_glr import runtime
from planesweep_glr.camera import Camera
from planesweep_glr.models import ModelConfig, TrainConfig
from planesweep_glr.scenes import SceneData, default_intrinsics, generate_scene, render_views
from planesweep_glr.storage import save_scene

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(autouse=True)
def _reset_runtime() -> Iterator[None]:
    """Every test starts with deterministic mode deferred to the environment."""
    runtime.set_deterministic(None)
    yield
    runtime.set_deterministic(None)


# =============================================================================
# Camera Fixtures
# =============================================================================


@pytest.fixture
def intrinsics() -> np.ndarray:
    """Intrinsics of a 32x24 camera."""
    return np.array([[40.0, 0.0, 15.5], [0.0, 40.0, 11.5], [0.0, 0.0, 1.0]])


@pytest.fixture
def canonical_camera(intrinsics: np.ndarray) -> Camera:
    """A camera at the world origin looking down +z."""
    return Camera(intrinsics, np.eye(3), np.zeros(3), 32, 24)


@pytest.fixture
def shifted_camera(intrinsics: np.ndarray) -> Camera:
    """A camera translated sideways and slightly rotated about y."""
    angle = 0.05
    rotation = np.array(
        [
            [np.cos(angle), 0.0, np.sin(angle)],
            [0.0, 1.0, 0.0],
            [-np.sin(angle), 0.0, np.cos(angle)],
        ]
    )
    return Camera(intrinsics, rotation, np.array([-0.3, 0.05, 0.1]), 32, 24)


# =============================================================================
# Scene Fixtures
# =============================================================================


@pytest.fixture(scope="session")
def small_scene() -> SceneData:
    """Three 16x16 views of a two-plane procedural scene."""
    return render_views(generate_scene(seed=3, n_planes=2, rig_size=3, width=16, height=16))


@pytest.fixture(scope="session")
def focus_scene() -> SceneData:
    """Five 64x64 views of a single plane at depth 4 (bounds 3 and 6)."""
    return render_views(generate_scene(seed=7, n_planes=1, rig_size=5))


@pytest.fixture
def scene_dir(tmp_path: Path, small_scene: SceneData) -> Path:
    """The small scene written to disk with lossless float images."""
    return save_scene(small_scene, tmp_path / "scene", float_images=True)


@pytest.fixture
def two_view_dir() -> Path:
    """Bundled hand-written 8x8 two-view scene."""
    return FIXTURES / "two_view"


@pytest.fixture
def square_intrinsics() -> np.ndarray:
    """Default intrinsics of a 16x16 image."""
    return default_intrinsics(16, 16)


# =============================================================================
# Config Fixtures
# =============================================================================


@pytest.fixture
def tiny_model() -> ModelConfig:
    """Smallest useful renderer: two depth groups, two views."""
    return ModelConfig(num_depths=4, group_size=2, channels=2, num_views=2)


@pytest.fixture
def train_config(tmp_path: Path) -> TrainConfig:
    """A few-step training run on the small scene."""
    return TrainConfig(
        input_views=[0, 2],
        target_views=[1],
        D=4,
        G=2,
        C=2,
        patch=8,
        steps=3,
        lr=1e-3,
        out_dir=str(tmp_path / "run"),
    )
