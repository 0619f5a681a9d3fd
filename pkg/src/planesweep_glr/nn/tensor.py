"""Tensor type and shared numerical helpers.

Tensors are row-major numpy arrays (last dimension fastest). Training runs
in float32; float64 exists for gradient verification.
"""

from collections.abc import Mapping

import numpy as np
import numpy.typing as npt

from planesweep_glr import runtime
from planesweep_glr.exceptions import ShapeMismatchError

Tensor = npt.NDArray[np.floating]
Params = dict[str, Tensor]

TRAIN_DTYPE = np.float32
CHECK_DTYPE = np.float64


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched ``a @ b`` over a leading group axis: (G, N, K) x (G, K, M) -> (G, N, M).

    Deterministic mode uses an unoptimized einsum (fixed reduction order, no
    BLAS threading); otherwise the product goes through BLAS.
    """
    if runtime.deterministic_mode():
        return np.einsum("gnk,gkm->gnm", a, b, optimize=False)
    return np.matmul(a, b)


def is_finite(tensor: Tensor) -> bool:
    """True when no element is NaN or infinite."""
    return bool(np.all(np.isfinite(tensor)))


def require_shape(tensor: Tensor, shape: tuple[int | None, ...], name: str) -> None:
    """Check a tensor against a shape pattern; ``None`` matches any extent.

    Raises:
        ShapeMismatchError: On rank or extent mismatch.
    """
    if tensor.ndim != len(shape) or any(
        want is not None and got != want for got, want in zip(tensor.shape, shape, strict=True)
    ):
        raise ShapeMismatchError(f"{name}: expected shape {shape}, got {tensor.shape}")


def cast_params(params: Mapping[str, Tensor], dtype: npt.DTypeLike) -> Params:
    """Copy a parameter collection to another floating dtype."""
    return {name: np.asarray(value, dtype=dtype).copy() for name, value in params.items()}


def zeros_like_params(params: Mapping[str, Tensor]) -> Params:
    """Gradient store shaped like ``params``."""
    return {name: np.zeros_like(value) for name, value in params.items()}
