"""Image quality metrics."""

import math

import numpy as np
from skimage.metrics import mean_squared_error, structural_similarity

from planesweep_glr.exceptions import ShapeMismatchError
from planesweep_glr.psv import ImageBuffer

PSNR_CAP = 99.0
SSIM_WINDOW = 11


def _pair(a: ImageBuffer, b: ImageBuffer) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeMismatchError(f"image shapes differ: {x.shape} vs {y.shape}")
    if x.ndim != 3:
        raise ShapeMismatchError(f"images must be (C, H, W), got {x.shape}")
    return x, y


def psnr(a: ImageBuffer, b: ImageBuffer) -> float:
    """Peak signal-to-noise ratio in dB for images in [0, 1], capped at 99 dB."""
    x, y = _pair(a, b)
    mse = float(mean_squared_error(x, y))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def ssim(a: ImageBuffer, b: ImageBuffer) -> float:
    """Mean structural similarity over 11x11 Gaussian windows (sigma 1.5).

    Uses K1 = 0.01, K2 = 0.03 and a dynamic range of 1.0, averaged over
    color channels.

    Raises:
        ShapeMismatchError: If the images differ in shape or are smaller
            than the window.
    """
    x, y = _pair(a, b)
    if min(x.shape[1:]) < SSIM_WINDOW:
        raise ShapeMismatchError(f"SSIM needs H, W >= {SSIM_WINDOW}, got {x.shape[1]}x{x.shape[2]}")
    return float(
        structural_similarity(
            x,
            y,
            data_range=1.0,
            channel_axis=0,
            gaussian_weights=True,
            sigma=1.5,
            use_sample_covariance=False,
            K1=0.01,
            K2=0.03,
        )
    )
