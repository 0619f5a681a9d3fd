"""Per-pixel L1 and L2 losses (means over all elements)."""

import numpy as np

from planesweep_glr.losses.base import LossFunction
from planesweep_glr.nn.tensor import Tensor


class L1Loss(LossFunction):
    """Mean absolute error; the subgradient at zero residual is zero."""

    @property
    def name(self) -> str:
        return "l1"

    def evaluate(self, pred: Tensor, gt: Tensor) -> tuple[float, Tensor]:
        residual = pred - gt
        value = float(np.mean(np.abs(residual, dtype=np.float64)))
        grad = (np.sign(residual) / residual.size).astype(pred.dtype, copy=False)
        return value, grad


class L2Loss(LossFunction):
    """Mean squared error."""

    @property
    def name(self) -> str:
        return "l2"

    def evaluate(self, pred: Tensor, gt: Tensor) -> tuple[float, Tensor]:
        residual = pred - gt
        value = float(np.mean(np.square(residual, dtype=np.float64)))
        grad = (2.0 * residual / residual.size).astype(pred.dtype, copy=False)
        return value, grad
