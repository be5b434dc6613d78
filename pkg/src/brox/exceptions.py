"""Exception hierarchy shared by all modules."""


class BroxError(Exception):
    """Base class for every error raised by this package."""


class ArgumentError(BroxError, ValueError):
    """Invalid input: dimension mismatch, infeasible point, bad parameter."""


class NumericError(BroxError, ArithmeticError):
    """A dense linear-algebra kernel (SVD, factorization) failed."""


class UnsupportedError(BroxError, NotImplementedError):
    """The requested combination is outside what the routine supports."""


class ConvergenceError(BroxError, RuntimeError):
    """An inner solver exhausted its iteration budget.

    ``step`` is filled in by the outer loop so callers can report which
    outer iteration failed.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step

    def __str__(self):
        base = super().__str__()
        if self.step is None:
            return base
        return f"step {self.step}: {base}"


class SearchFailure(BroxError, RuntimeError):
    """A counterexample search exhausted its seed range."""
