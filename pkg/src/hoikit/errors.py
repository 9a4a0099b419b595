"""Exception types shared across the package."""


class HoikitError(Exception):
    """Base class for all package errors."""


class ValidationError(HoikitError, ValueError):
    """Input violates a documented precondition or invariant."""


class DegenerateRotationError(ValidationError):
    """6-DOF rotation input cannot be orthonormalized (zero or parallel columns)."""


class ContainerError(HoikitError, ValueError):
    """Motion container file is malformed, truncated, or of an unknown version."""


class TrainingError(HoikitError, RuntimeError):
    """Non-finite values or other unrecoverable states encountered while training."""
