"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class NumericalError(ArithmeticError):
    """A numerical routine failed (factorization, degenerate weights, ...)."""


class FactorizationError(NumericalError):
    """Cholesky factorization failed even at the largest jitter.

    Attributes
    ----------
    min_eigenvalue : float
        Smallest eigenvalue of the symmetrized input matrix.
    condition : float
        2-norm condition number of the input matrix.
    """

    def __init__(self, message, min_eigenvalue=float("nan"), condition=float("nan")):
        super().__init__(
            f"{message} (min eigenvalue {min_eigenvalue:.3e}, condition {condition:.3e})"
        )
        self.min_eigenvalue = min_eigenvalue
        self.condition = condition


class DataError(DomainError):
    """Malformed input data; ``line`` is the 1-based file line when known."""

    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line
