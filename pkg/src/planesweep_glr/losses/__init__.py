"""Training losses."""

from planesweep_glr.losses.base import LossFunction
from planesweep_glr.losses.factory import LossFactory, loss_for_step, loss_name_for_step
from planesweep_glr.losses.pixel import L1Loss, L2Loss

__all__ = [
    "L1Loss",
    "L2Loss",
    "LossFactory",
    "LossFunction",
    "loss_for_step",
    "loss_name_for_step",
]
