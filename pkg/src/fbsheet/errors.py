"""Exception types raised across the package."""


class FbsheetError(Exception):
    """Base class for all package errors."""


class InvalidOrderError(FbsheetError, ValueError):
    """A fractional order or Hurst index lies outside its admissible range."""


class DomainError(FbsheetError, ValueError):
    """An argument lies outside the domain of the function being evaluated."""


class SizeCapError(FbsheetError, ValueError):
    """A problem size exceeds a configured cap."""


class GridMismatchError(FbsheetError, ValueError):
    """Two sampled objects do not live on the same grid."""


class PreconditionError(FbsheetError, ValueError):
    """A documented precondition of an operation does not hold."""


class NumericalError(FbsheetError, ArithmeticError):
    """A factorization or solve failed even after the regularization policy."""


class AccuracyError(FbsheetError, ArithmeticError):
    """A truncation or quadrature could not reach the requested accuracy."""


class SolverError(FbsheetError, ArithmeticError):
    """The plane SDE solver produced a non-finite value."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class IterationLimitError(FbsheetError, RuntimeError):
    """A fixed-point iteration hit ``max_iter`` before reaching tolerance."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual
