"""Exception types shared across the toolkit."""


class StabcheckError(Exception):
    """Base class for all toolkit errors."""


class DomainError(StabcheckError):
    """A state lies outside the ball on which checks are defined."""


class FieldEvaluationError(StabcheckError):
    """The vector field returned a non-finite value inside its domain."""

    def __init__(self, t, x, message="vector field returned a non-finite value"):
        self.t = float(t)
        self.x = tuple(float(v) for v in x)
        super().__init__(f"{message} at t={self.t!r}, x={self.x!r}")


class EmptySampleError(StabcheckError):
    """An operation that needs a nonempty point sample received an empty one."""


class UnboundedTrajectoryError(StabcheckError):
    """Limit-set analysis was requested for a trajectory that left the domain."""


class CertificateError(StabcheckError):
    """A certificate callback failed or is internally inconsistent."""


class PerturbationGenerationError(StabcheckError):
    """A generated perturbation violated its own sector bound (internal bug guard)."""


class ExpressionError(StabcheckError):
    """Parse or evaluation failure of a field/certificate expression."""

    def __init__(self, message, position=None):
        self.position = position
        if position is not None:
            message = f"{message} (column {position + 1})"
        super().__init__(message)


class ConfigError(StabcheckError):
    """Invalid analysis configuration."""
