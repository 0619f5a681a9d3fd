"""Error hierarchy for planesweep-glr.

Every error derives from :class:`GLRError` and from the builtin exception a
caller would naturally catch for the same situation, so ``except ValueError``
keeps working for bad inputs.
"""


class GLRError(Exception):
    """Base class for all planesweep-glr errors."""


class InvalidCameraError(GLRError, ValueError):
    """A camera violates the pinhole model invariants."""


class BoundsError(GLRError, ValueError):
    """Near/far bounds or plane counts are out of range."""


class BehindCameraError(GLRError, ValueError):
    """A 3D point lies at or behind the camera plane."""


class DegenerateGeometryError(GLRError, ValueError):
    """A geometric quantity is undefined for the given configuration."""


class SingularMatrixError(GLRError, ValueError):
    """A matrix that must be inverted is singular."""


class ShapeMismatchError(GLRError, ValueError):
    """Tensor or list shapes do not agree."""


class ConfigError(GLRError, ValueError):
    """Invalid configuration value or key."""


class FormatError(GLRError, ValueError):
    """Malformed on-disk file."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None) -> None:
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{location}{message}")


class MissingFileError(FormatError):
    """A required input file or directory does not exist."""


class TrainingDivergedError(GLRError, RuntimeError):
    """The training loss became non-finite."""

    def __init__(self, step: int, lr: float, grad_norm: float, loss: float) -> None:
        self.step = step
        self.lr = lr
        self.grad_norm = grad_norm
        self.loss = loss
        super().__init__(
            f"non-finite loss {loss} at step {step} (lr={lr:g}, grad_norm={grad_norm:g})"
        )
