"""Exception types raised by the library."""


class ConfigurationError(ValueError):
    """Invalid configuration: bad coefficients, singular mass matrix, non-skew structure, ..."""


class ContractViolation(ValueError):
    """An argument breaks an operation's precondition (usually a dimension mismatch)."""


class ConvergenceError(RuntimeError):
    """The implicit solver did not reach its tolerance.

    Attributes
    ----------
    best : ndarray
        Iterate with the smallest residual seen.
    residual : float
        Scaled sup-norm residual of ``best``.
    iterations : int
        Iterations spent.
    """

    def __init__(self, message, best=None, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.iterations = iterations


class StepFailure(ConvergenceError):
    """A time step could not be completed.

    ``index`` is the number of the step that failed (1-based); ``trajectory``
    holds the partial trajectory when raised from :func:`dphs.integrate`.
    """

    def __init__(self, message, index=0, best=None, residual=float("nan"), iterations=0):
        super().__init__(message, best=best, residual=residual, iterations=iterations)
        self.index = index
        self.trajectory = None
