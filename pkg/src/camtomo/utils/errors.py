"""Exception hierarchy shared by all camtomo modules."""

from typing import Any, Optional


class CamtomoError(Exception):
    """Base class for every error raised by camtomo."""


class GeometryError(CamtomoError, ValueError):
    """Invalid cam, hypersurface or affine map."""


class ConfigError(CamtomoError, ValueError):
    """Malformed configuration, preset or phantom specification."""


class SliceError(CamtomoError):
    """A level set could not be discretized to the required accuracy."""


class GeometryMismatchError(CamtomoError, ValueError):
    """A sinogram was produced for a different geometry than the one used to invert it."""


class ConditionViolation(CamtomoError):
    """An admissibility condition fails at a concrete witness."""

    def __init__(self, condition: str, message: str, witness: Optional[Any] = None):
        """Initialize the violation.

        Args:
            condition: Condition tag, e.g. "E", "I", "II", "III"
            message: Human readable description
            witness: Offending sample (point, pair or incidence)
        """
        super().__init__(f"condition ({condition}) violated: {message}")
        self.condition = condition
        self.witness = witness


class ProjectionError(CamtomoError):
    """Forward projection failed at a cam grid node."""

    def __init__(self, omega: Any, cause: Exception):
        super().__init__(f"forward projection failed at omega={list(omega)}: {cause}")
        self.omega = omega
        self.cause = cause


class StageError(CamtomoError):
    """A harness stage aborted."""

    def __init__(self, stage: str, cause: Exception):
        """Initialize the stage error.

        Args:
            stage: Name of the failing stage (validate, project, invert, ...)
            cause: Underlying exception
        """
        witness = getattr(cause, "witness", None)
        message = f"stage '{stage}' failed: {cause}"
        if witness is not None:
            message += f" (witness: {witness})"
        super().__init__(message)
        self.stage = stage
        self.cause = cause
        self.witness = witness
