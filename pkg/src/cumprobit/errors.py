"""Exception and warning types raised across the package."""


class CumprobitError(Exception):
    """Base class for all domain errors raised by this package."""


class DomainError(CumprobitError, ValueError):
    """An argument lies outside the mathematical domain of a function."""


class NotPositiveDefinite(CumprobitError, ValueError):
    pass


class SingularUpdate(CumprobitError, ArithmeticError):
    """A rank-one update would produce a (numerically) singular matrix."""


class DimensionMismatch(CumprobitError, ValueError):
    pass


class CategoryOutOfRange(CumprobitError, ValueError):
    pass


class NonFiniteInput(CumprobitError, ValueError):
    pass


class UnorderedThresholds(CumprobitError, ValueError):
    pass


class EmptyCategory(CumprobitError, ValueError):
    """A response category has no observations, so its cutpoint is unidentifiable."""


class ConfoundedIntercept(CumprobitError, ValueError):
    """The design contains a constant column while thresholds are being estimated."""


class DegenerateLeverage(CumprobitError, ArithmeticError):
    """Some observation has leverage x'Vx numerically equal to one."""


class DegenerateCutoffs(CumprobitError, RuntimeError):
    pass


class InsufficientSamples(CumprobitError, ValueError):
    pass


class MaxIterationsExceeded(RuntimeWarning):
    """Emitted (as a warning) when a fitter stops before meeting its tolerance."""


class NewtonDivergence(RuntimeWarning):
    """Emitted when the threshold Newton search falls back to coordinate search."""
