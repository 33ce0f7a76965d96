"""Exception hierarchy shared by all modules.

Every failure surfaced to callers derives from :class:`AhyError` and carries
a short machine-readable ``stage`` label so pipeline errors can be traced to
the step that raised them.
"""


class AhyError(Exception):
    """Base class for all library errors."""

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage


class DimensionError(AhyError):
    """Dimension outside the supported range (n < 2, or n < 3 for conformal ops)."""


class ParameterError(AhyError):
    """A scalar parameter violates its documented range."""


class MetricDegeneracyError(AhyError):
    """Metric coefficient a or b fails positivity on [0, 1]."""


class PositivityError(AhyError):
    """A field required to be positive is not."""


class ObstructionError(AhyError):
    """Conformal correction requested at the obstructed order."""


class PreconditionError(AhyError):
    """Caller-side precondition violated (e.g. scalar curvature not lowered)."""


class MonotonicityError(AhyError):
    """Iterate ordering violated; signals a bad shift or discretization fault."""


class MaxIterationsError(AhyError):
    """Fixed-point iteration failed to converge within the iteration cap."""


class InsufficientDataError(AhyError):
    """Not enough usable samples in a fit window."""


class FitQualityError(AhyError):
    """A least-squares diagnostic fit fell below its quality threshold."""


class SingularSystemError(AhyError):
    """Discrete linear system is singular or numerically unusable."""


class DomainExhaustionError(AhyError):
    """Requested evaluation points fall outside the sampled domain."""
