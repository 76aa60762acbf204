"""Exception hierarchy shared by all modules."""


class RobustPayoffError(Exception):
    """Base class for every error raised by this package."""


class DomainError(RobustPayoffError, ValueError):
    """An argument lies outside the domain of the operation."""


class PreconditionError(RobustPayoffError, ValueError):
    """An input violates a documented precondition (e.g. an atomic law)."""


class BracketError(RobustPayoffError, ValueError):
    """A root finder was given an interval without a sign change."""


class DivergenceError(RobustPayoffError, ArithmeticError):
    """A required moment or integral is infinite."""


class SingularityError(RobustPayoffError, ArithmeticError):
    """A quantity required as a divisor vanished."""


class ConvergenceError(RobustPayoffError, ArithmeticError):
    """An iterative method stopped before meeting its tolerance.

    ``estimate`` carries the best value obtained so far.
    """

    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class HypothesisViolated(RobustPayoffError):
    """A hypothesis of the optimality result does not hold for the input.

    ``condition`` names the failed condition so callers can report it.
    """

    def __init__(self, message, condition=""):
        super().__init__(message)
        self.condition = condition


class Unsupported(HypothesisViolated):
    """No least favorable measure is known for the requested combination."""


class NotCovered(HypothesisViolated):
    """The parameter region is not covered by any available reduction."""
