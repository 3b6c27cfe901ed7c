"""Exception hierarchy for attnsteer."""


class AttnSteerError(Exception):
    """Base class for all package errors."""


class SymmetryViolation(AttnSteerError, ValueError):
    pass


class NotPositiveDefinite(AttnSteerError, ValueError):
    pass


class SingularMatrix(AttnSteerError, ValueError):
    pass


class NoRealLog(AttnSteerError, ValueError):
    """The matrix has a real eigenvalue on the closed negative axis."""


class NoRealLogAnywhere(AttnSteerError):
    """Every orthogonal factor examined produced :class:`NoRealLog`."""


class OutOfHorizon(AttnSteerError, ValueError):
    pass


class GridMismatch(AttnSteerError, ValueError):
    pass


class IndefiniteCovariance(AttnSteerError):
    """Covariance lost positive definiteness during propagation."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class BoundsUnavailable(AttnSteerError, ValueError):
    pass


class IllConditionedState(AttnSteerError):
    pass


class NoConvergence(AttnSteerError):
    """Iterative solver stopped before reaching tolerance.

    ``best`` carries the best iterate found so far (solver specific).
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class SweepAborted(AttnSteerError):
    pass


class FlowDiverged(AttnSteerError):
    pass


class InfeasibleWithinBudget(AttnSteerError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ProblemFileError(AttnSteerError, ValueError):
    """Malformed problem file; ``key`` names the offending entry."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
