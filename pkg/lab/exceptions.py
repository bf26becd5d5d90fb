"""Error types raised by the laboratory.

Argument problems subclass ``ValueError`` so callers that only guard against
bad input keep working; numerical failures derive from ``LabError`` alone.
Blow-up of the exponential is never raised: reports carry a ``saturated`` flag.
"""


class LabError(Exception):
    """Base class for every error raised by the lab modules."""


class InvalidResolutionError(LabError, ValueError):
    pass


class GridMismatchError(LabError, ValueError):
    pass


class BoundaryClosureError(LabError, ValueError):
    pass


class PlacementError(LabError, ValueError):
    pass


class MeasureDomainError(LabError, ValueError):
    pass


class KernelDomainError(LabError, ValueError):
    pass


class NormOverflowError(LabError, ArithmeticError):
    pass


class ConvergenceError(LabError):
    def __init__(self, message, residual_trace=None):
        super().__init__(message)
        self.residual_trace = list(residual_trace or [])


class ConsistencyError(LabError):
    """An invariant that holds for exact arithmetic was violated (solver bug)."""


class ThresholdRangeError(LabError, ValueError):
    pass


class NonFiniteFieldError(LabError, ValueError):
    pass
