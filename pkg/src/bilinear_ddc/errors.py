"""Exception hierarchy shared by all modules."""


class BilinearDDCError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgument(BilinearDDCError, ValueError):
    pass


class ValidationError(BilinearDDCError, ValueError):
    """A serialized object failed to parse or violates an invariant.

    ``field`` names the offending entry when it is known.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class SimulationOverflow(BilinearDDCError, ArithmeticError):
    """A simulated state became non-finite."""

    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


class ExperimentDiverged(SimulationOverflow):
    pass


class CertificateViolation(BilinearDDCError):
    """A precondition of a closed-loop certificate does not hold numerically."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class PreconditionError(BilinearDDCError):
    pass


class NotFound(BilinearDDCError, LookupError):
    pass


class InternalConsistencyError(BilinearDDCError, AssertionError):
    """Two independent computations of the same quantity disagree."""
