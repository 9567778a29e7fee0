"""Exception hierarchy.

Every error carries a short name matching the failure it reports, so the
command line can map precondition failures and tolerance failures onto
distinct exit codes.
"""


class GaussIsoError(Exception):
    """Base class for all package errors."""


class PreconditionError(GaussIsoError):
    """Input does not satisfy an operation's precondition."""


class ToleranceError(GaussIsoError):
    """A computed quantity missed its required tolerance."""


class NonPositiveRadius(PreconditionError):
    pass


class OpenCurve(PreconditionError):
    pass


class NonMonotoneProfile(PreconditionError):
    pass


class ChartOutOfRange(PreconditionError):
    pass


class GridMismatch(PreconditionError):
    pass


class ResolutionTooLow(PreconditionError):
    pass


class UnboundedRegionWithoutClosedForm(PreconditionError):
    pass


class NoBracket(PreconditionError):
    pass


class UnsupportedSurface(PreconditionError):
    pass


class NotLambdaSurface(PreconditionError):
    pass


class DegenerateTrial(PreconditionError):
    pass


class MissingNormalDerivative(PreconditionError):
    pass


class SelfIntersection(PreconditionError):
    pass


class NotMeanZero(PreconditionError):
    pass


class NotSymmetric(PreconditionError):
    pass


class NotEigenfunction(PreconditionError):
    pass


class ZeroDenominator(PreconditionError):
    pass


class AdjacencyUnavailable(PreconditionError):
    pass


class NoRootInBracket(PreconditionError):
    pass


class NonConvexSolution(ToleranceError):
    pass


class ConvergenceFailure(ToleranceError):
    pass


class StepUnderflow(ToleranceError):
    pass


class StepLimitExceeded(ToleranceError):
    """Raised with the best state reached attached as ``state``."""

    def __init__(self, message, state=None, trajectory=None):
        super().__init__(message)
        self.state = state
        self.trajectory = trajectory
