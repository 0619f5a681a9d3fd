"""Abstract base class for training losses."""

from abc import ABC, abstractmethod

import numpy as np

from planesweep_glr.exceptions import ShapeMismatchError
from planesweep_glr.nn.tensor import Tensor


class LossFunction(ABC):
    """A scalar image loss with its analytic gradient.

    Subclasses implement :meth:`evaluate`; :meth:`__call__` adds the shape
    check. A perceptual loss plugs in by subclassing and registering with
    :class:`~planesweep_glr.losses.factory.LossFactory`.
    """

    @property
    @abstractmethod
    def name(self) -> str:
        """Return the loss name identifier."""
        ...

    @abstractmethod
    def evaluate(self, pred: Tensor, gt: Tensor) -> tuple[float, Tensor]:
        """Compute the loss.

        Args:
            pred: Predicted image.
            gt: Ground-truth image of the same shape.

        Returns:
            Tuple of (loss value, gradient with respect to ``pred``).
        """
        ...

    def __call__(self, pred: Tensor, gt: Tensor) -> tuple[float, Tensor]:
        if np.shape(pred) != np.shape(gt):
            raise ShapeMismatchError(f"{self.name} loss: pred {np.shape(pred)} vs gt {np.shape(gt)}")
        return self.evaluate(pred, gt)
