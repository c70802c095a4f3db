"""Exception types raised by the solver."""

import numpy as np


class SingularMatrixError(np.linalg.LinAlgError):
    """A factorization hit a pivot below the singularity threshold."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class SchurReorderError(np.linalg.LinAlgError):
    """An adjacent swap in a Schur form destroyed triangularity."""

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class DomainError(ValueError):
    """A scalar function was evaluated outside its domain of analyticity."""

    def __init__(self, message, term=None):
        super().__init__(message)
        self.term = term


class SeriesConvergenceError(ArithmeticError):
    """A truncated Taylor series did not converge within its term cap."""


class BreakdownError(ArithmeticError):
    """Gram-Schmidt produced a complement of (numerically) zero norm.

    The orthogonalization coefficients are kept so that the caller can
    still close an exact (lucky breakdown) Arnoldi factorization.
    """

    def __init__(self, message, h=None, beta=0.0):
        super().__init__(message)
        self.h = h
        self.beta = beta
