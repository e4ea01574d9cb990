"""Fractional Brownian sheets, plane SDEs with singular drift, and numerical
checks of the identities behind their analysis."""

__version__ = "0.1.0"

from .errors import (
    AccuracyError,
    DomainError,
    FbsheetError,
    GridMismatchError,
    InvalidOrderError,
    IterationLimitError,
    NumericalError,
    PreconditionError,
    SizeCapError,
    SolverError,
)
from .grid import Grid2D, SampledFn2D
from .frac_calc import FracOrder2D, frac_derivative_1d, frac_derivative_2d, frac_integral_1d, frac_integral_2d
from .kernel import CovMatrix, HurstPair, cov_matrix, covariance, kernel_1d, kernel_2d
from .sim import SheetSample, sample_brownian_sheet, sample_fbs_cholesky, sample_fbs_kernel
from .drift import DriftSpec

__all__ = [
    "__version__",
    "AccuracyError", "DomainError", "FbsheetError", "GridMismatchError", "InvalidOrderError",
    "IterationLimitError", "NumericalError", "PreconditionError", "SizeCapError", "SolverError",
    "Grid2D", "SampledFn2D", "FracOrder2D", "frac_integral_1d", "frac_integral_2d",
    "frac_derivative_1d", "frac_derivative_2d", "HurstPair", "CovMatrix", "cov_matrix",
    "covariance", "kernel_1d", "kernel_2d", "SheetSample", "sample_brownian_sheet",
    "sample_fbs_cholesky", "sample_fbs_kernel", "DriftSpec",
]
