"""Exception hierarchy shared by all graphbo modules."""


class GraphBOError(Exception):
    """Base class for every error raised by graphbo."""


class InputError(GraphBOError, ValueError):
    """Invalid arguments or malformed input data."""


class ParseError(InputError):
    """Malformed line in an edge-list file."""

    def __init__(self, path, lineno, line, reason):
        self.path = path
        self.lineno = lineno
        self.line = line
        super().__init__(f"{path}:{lineno}: {reason}: {line!r}")


class ConvergenceError(GraphBOError):
    """An iterative method ran out of iterations.

    The last iterate is kept on ``last`` so callers can still use it.
    """

    def __init__(self, message, last=None, residual=None):
        super().__init__(message)
        self.last = last
        self.residual = residual


class ParameterError(GraphBOError, ValueError):
    """Kernel or model parameters outside their valid domain."""


class FactorizationError(GraphBOError, ArithmeticError):
    """Cholesky factorization failed even after jitter escalation."""


class NonFiniteLossError(GraphBOError, FloatingPointError):
    """Training produced a non-finite loss that could not be recovered."""


class BudgetError(GraphBOError):
    """Requested more node queries than the domain provides."""
