"""Process-wide execution switches."""

import os

_override: bool | None = None


def deterministic_mode() -> bool:
    """Return True when computations must be bit-reproducible.

    ``set_deterministic`` takes precedence over the ``GLR_DETERMINISTIC``
    environment variable.
    """
    if _override is not None:
        return _override
    return os.environ.get("GLR_DETERMINISTIC", "0").strip() == "1"


def set_deterministic(enabled: bool | None) -> None:
    """Force deterministic mode on or off; ``None`` defers to the environment."""
    global _override
    _override = enabled
