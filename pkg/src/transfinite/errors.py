"""Exception types raised by the library."""


class TransfiniteError(Exception):
    """Base class for all library errors."""


class OrderOutOfRange(TransfiniteError, ValueError):
    pass


class DerivativeOrderTooHigh(TransfiniteError, ValueError):
    pass


class OverflowRisk(TransfiniteError, ArithmeticError):
    pass


class InvalidKnots(TransfiniteError, ValueError):
    pass


class InsufficientKnots(InvalidKnots):
    pass


class NotPositiveDefinite(TransfiniteError, ArithmeticError):
    def __init__(self, message, cond_estimate=float("nan")):
        super().__init__(message)
        self.cond_estimate = cond_estimate


class SingularSystem(TransfiniteError, ArithmeticError):
    pass


class SolverError(TransfiniteError, ArithmeticError):
    """A per-frequency solve failed; ``xi`` names the offending frequency."""

    def __init__(self, message, xi=None):
        super().__init__(message)
        self.xi = xi


class InadmissibleTestFunction(TransfiniteError, ValueError):
    pass


class PsiNotVanishing(InadmissibleTestFunction):
    pass


class CompetitorNotInterpolating(InadmissibleTestFunction):
    pass


class XiBelowHalf(TransfiniteError, ValueError):
    pass


class GridTooCoarse(TransfiniteError, ValueError):
    pass


class PointTooClose(TransfiniteError, ValueError):
    pass
