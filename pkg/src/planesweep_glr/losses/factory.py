"""Loss factory and the step-dependent loss schedule."""

from typing import Any

from planesweep_glr.losses.base import LossFunction
from planesweep_glr.models import LossSchedule

# The schedule switches from L2 to L1 once step >= total * 9 / 10.
L1_SWITCH = (9, 10)


class LossFactory:
    """Factory for creating loss instances.

    Supports registration of custom losses (e.g. a perceptual loss).
    """

    _losses: dict[str, type[LossFunction]] = {}

    @classmethod
    def _ensure_registered(cls) -> None:
        """Ensure built-in losses are registered."""
        if not cls._losses:
            from planesweep_glr.losses.pixel import L1Loss, L2Loss

            cls._losses = {"l1": L1Loss, "l2": L2Loss}

    @classmethod
    def create(cls, loss_name: str, **kwargs: Any) -> LossFunction:
        """Create a loss instance by name.

        Raises:
            ValueError: If the loss is not registered.
        """
        cls._ensure_registered()
        loss_name = loss_name.lower()
        if loss_name not in cls._losses:
            available = ", ".join(cls._losses.keys())
            raise ValueError(f"Unknown loss '{loss_name}'. Available: {available}")
        return cls._losses[loss_name](**kwargs)

    @classmethod
    def register(cls, name: str, loss_class: type[LossFunction]) -> None:
        """Register a custom loss under ``name``."""
        cls._ensure_registered()
        cls._losses[name.lower()] = loss_class

    @classmethod
    def available_losses(cls) -> list[str]:
        cls._ensure_registered()
        return list(cls._losses.keys())


def loss_name_for_step(step: int, total: int, schedule: LossSchedule | str = LossSchedule.SCHEDULE) -> str:
    """Loss in effect at ``step``: L2 before 90% of ``total`` steps, L1 after."""
    schedule = LossSchedule(schedule)
    if schedule is not LossSchedule.SCHEDULE:
        return schedule.value
    num, den = L1_SWITCH
    return "l1" if den * step >= num * total else "l2"


def loss_for_step(step: int, total: int, schedule: LossSchedule | str = LossSchedule.SCHEDULE) -> LossFunction:
    return LossFactory.create(loss_name_for_step(step, total, schedule))
