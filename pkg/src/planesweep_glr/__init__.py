"""planesweep-glr - generalizable novel view synthesis with plane sweep volumes."""

__version__ = "0.1.0"
__author__ = "planesweep-glr contributors"

from planesweep_glr.camera import Camera, DepthPlanes, normalize_to_target, plane_homography, sample_depths
from planesweep_glr.models import ModelConfig, TrainConfig, Variant
from planesweep_glr.network import forward, init_weights
from planesweep_glr.psv import PlaneSweepVolume, Rect, build_psv, group_depths
from planesweep_glr.trainer import evaluate, train

__all__ = [
    "Camera",
    "DepthPlanes",
    "ModelConfig",
    "PlaneSweepVolume",
    "Rect",
    "TrainConfig",
    "Variant",
    "build_psv",
    "evaluate",
    "forward",
    "group_depths",
    "init_weights",
    "normalize_to_target",
    "plane_homography",
    "sample_depths",
    "train",
    "__version__",
]
