"""Exception types shared across spikecap."""


class ValidationError(ValueError):
    """An input violates a documented precondition."""


class DomainError(ValidationError):
    """A channel parameter or argument lies outside its domain."""


class ConvergenceError(RuntimeError):
    """An iterative solver stopped before reaching its tolerance.

    ``best`` carries the best value or object found so far, ``bracket`` the
    last certified (lower, upper) interval when one is available.
    """

    def __init__(self, message, best=None, bracket=None):
        super().__init__(message)
        self.best = best
        self.bracket = bracket


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested accuracy."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved
