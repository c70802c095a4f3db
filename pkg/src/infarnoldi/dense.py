"""Dense complex linear algebra kernels.

Small and medium sized matrices only: Hessenberg matrices, Schur factors,
the matrix ``S`` of the structured functions and dense ``M(0)`` factors.
Everything works in complex arithmetic so that no real-Schur 2x2 block
handling is ever needed.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import SchurReorderError, SingularMatrixError, DomainError

__all__ = [
    "SchurForm",
    "LUFactorization",
    "schur_decompose",
    "reorder_schur",
    "matrix_exp",
    "exp_tail",
    "householder_back_reduce",
    "lu_factor",
    "lu_solve",
    "matrix_sqrt",
]

EPS = np.finfo(float).eps


def _as_square(a, name="a"):
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a.astype(complex, copy=False)


@dataclass(frozen=True)
class SchurForm:
    """Complex Schur form ``a = q @ t @ q^H`` with ``t`` upper triangular."""

    q: np.ndarray
    t: np.ndarray

    @property
    def eigenvalues(self):
        return np.diag(self.t).copy()


def schur_decompose(a):
    """Complex Schur decomposition of a square matrix.

    Raises ``LinAlgError`` if the QR iteration does not converge.
    """
    a = _as_square(a)
    if a.shape[0] == 0:
        return SchurForm(np.zeros((0, 0), complex), np.zeros((0, 0), complex))
    t, q = scipy.linalg.schur(a, output="complex")
    return SchurForm(q, np.triu(t))


def _swap_adjacent(q, t, k, tol):
    """Swap diagonal entries k and k+1 of triangular ``t`` in place."""
    a, b, x = t[k, k], t[k + 1, k + 1], t[k, k + 1]
    u = np.array([x, b - a])
    nu = np.linalg.norm(u)
    if nu == 0.0:
        # a == b and no coupling: the 2x2 block is a multiple of I
        return
    u /= nu
    rot = np.array([[u[0], -np.conj(u[1])], [u[1], np.conj(u[0])]])
    t[:, k:k + 2] = t[:, k:k + 2] @ rot
    t[k:k + 2, :] = rot.conj().T @ t[k:k + 2, :]
    q[:, k:k + 2] = q[:, k:k + 2] @ rot
    if abs(t[k + 1, k]) > tol:
        raise SchurReorderError(
            f"swapping eigenvalues {a} and {b} at positions {k}, {k + 1} left "
            f"subdiagonal {abs(t[k + 1, k]):.3e}",
            pair=(a, b),
        )
    t[k + 1, k] = 0.0


def reorder_schur(s, select):
    """Move the selected eigenvalues to the leading diagonal positions.

    Selected and unselected eigenvalues both keep their relative order.
    Uses adjacent unitary 2x2 swaps.
    """
    select = np.asarray(select, dtype=bool)
    n = s.t.shape[0]
    if select.shape != (n,):
        raise ValueError(f"select must have length {n}, got {select.shape}")
    q = s.q.astype(complex, copy=True)
    t = s.t.astype(complex, copy=True)
    tol = 100 * EPS * max(np.linalg.norm(t), 1e-300)
    dest = 0
    for i in np.flatnonzero(select):
        for k in range(i - 1, dest - 1, -1):
            _swap_adjacent(q, t, k, tol)
        dest += 1
    return SchurForm(q, np.triu(t))


def matrix_exp(s):
    """Matrix exponential (scaling and squaring with Pade approximants)."""
    s = _as_square(s, "s")
    with np.errstate(over="ignore", invalid="ignore"):
        e = scipy.linalg.expm(s)
    if not np.all(np.isfinite(e)):
        raise OverflowError(f"matrix exponential overflows (norm {np.linalg.norm(s):.3e})")
    return e


def exp_tail(s, n, theta=1.0):
    """Remainder ``exp(theta*s) - sum_{i<=n} (theta*s)^i / i!``.

    ``n = -1`` returns the full exponential. The remainder is summed
    directly from its own series unless the scalar majorants say that the
    subtraction form is the better conditioned one (large ``theta*s`` whose
    exponential is small compared with its truncated Taylor polynomial).
    """
    s = _as_square(s, "s")
    if n < -1:
        raise ValueError(f"n must be >= -1, got {n}")
    a = theta * s
    p = a.shape[0]
    if n == -1:
        return matrix_exp(a)
    norm_a = np.linalg.norm(a, 2) if p else 0.0
    if norm_a == 0.0:
        return np.zeros((p, p), complex)

    # scalar majorants of the two ways of computing the remainder
    head = sum(norm_a**i / math.factorial(i) for i in range(n + 1))
    tail = math.exp(norm_a) - head if norm_a > 1.0 else _scalar_tail(norm_a, n)
    if tail <= head:
        return _series_tail(a, n)
    e = matrix_exp(a)
    term = np.eye(p, dtype=complex)
    acc = np.eye(p, dtype=complex)
    for i in range(1, n + 1):
        term = term @ a / i
        acc += term
    return e - acc


def _scalar_tail(x, n):
    term = x ** (n + 1) / math.factorial(n + 1)
    total, i = 0.0, n + 1
    while term > EPS * total or i <= x:
        total += term
        i += 1
        term *= x / i
    return total


def _series_tail(a, n, max_terms=2000):
    p = a.shape[0]
    term = np.linalg.matrix_power(a, n + 1) / math.factorial(n + 1)
    acc = term.copy()
    norm_a = np.linalg.norm(a, 2)
    i = n + 1
    while True:
        i += 1
        term = term @ a / i
        acc += term
        if i > norm_a and np.linalg.norm(term) <= EPS * np.linalg.norm(acc):
            return acc
        if i - n > max_terms:
            raise OverflowError("exponential remainder series did not converge")


def _reflector(x):
    """Hermitian Householder ``H`` with ``H @ x`` a multiple of the last unit vector."""
    j = x.shape[0]
    if j <= 1 or not np.any(x[:-1]):
        return np.eye(j, dtype=complex)
    alpha = x[-1]
    nx = np.linalg.norm(x)
    phase = alpha / abs(alpha) if alpha != 0 else 1.0
    v = x.astype(complex, copy=True)
    v[-1] += phase * nx
    return np.eye(j, dtype=complex) - 2.0 * np.outer(v, v.conj()) / np.vdot(v, v).real


def householder_back_reduce(block):
    """Reduce a bordered block ``[[R22], [a2^T]]`` back to Hessenberg form.

    Returns ``(p2, hhat, beta)`` with ``p2`` unitary such that
    ``diag(p2^H, 1) @ block @ p2 == [[hhat], [beta * e_last^T]]`` and
    ``hhat`` upper Hessenberg. Rows are reduced from the bottom up.
    """
    b = np.array(block, dtype=complex)
    if b.ndim != 2 or b.shape[0] != b.shape[1] + 1:
        raise ValueError(f"block must be (w+1) x w, got {b.shape}")
    w = b.shape[1]
    p2 = np.eye(w, dtype=complex)
    if w == 0:
        return p2, np.zeros((0, 0), complex), 0.0
    for j in range(w, 1, -1):
        hh = _reflector(b[j, :j].conj())
        b[:, :j] = b[:, :j] @ hh
        b[:j, :] = hh.conj().T @ b[:j, :]
        p2[:, :j] = p2[:, :j] @ hh
        b[j, : j - 1] = 0.0
    beta = b[w, w - 1]
    if beta != 0:
        # unit phase on the last column makes beta real nonnegative
        d = np.conj(beta) / abs(beta)
        p2[:, -1] *= d
        b[:, -1] *= d
        b[w - 1, :] *= np.conj(d)
    hhat = np.triu(b[:w], -1)
    return p2, hhat, b[w, w - 1].real


@dataclass(frozen=True)
class LUFactorization:
    lu: np.ndarray
    piv: np.ndarray

    @property
    def n(self):
        return self.lu.shape[0]


def lu_factor(a):
    """LU factorization with partial pivoting.

    Raises ``SingularMatrixError`` naming the first pivot whose modulus is
    below ``n * eps * ||a||_1``.
    """
    a = _as_square(a)
    n = a.shape[0]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    threshold = n * EPS * np.linalg.norm(a, 1)
    small = np.flatnonzero(np.abs(np.diag(lu)) <= threshold)
    if small.size:
        raise SingularMatrixError(
            f"matrix is numerically singular: pivot {small[0]} has modulus "
            f"{abs(lu[small[0], small[0]]):.3e} <= {threshold:.3e}",
            index=int(small[0]),
        )
    return LUFactorization(lu, piv)


def lu_solve(factorization, b):
    return scipy.linalg.lu_solve((factorization.lu, factorization.piv), b, check_finite=False)


def matrix_sqrt(s):
    """Principal matrix square root.

    Raises ``DomainError`` when an eigenvalue lies on the closed negative
    real axis.
    """
    s = _as_square(s, "s")
    if s.shape[0] == 0:
        return s.copy()
    eig = np.diag(schur_decompose(s).t)
    scale = max(np.abs(eig).max(), 1e-300)
    bad = (eig.real <= 0) & (np.abs(eig.imag) <= 1e-14 * scale)
    if np.any(bad):
        raise DomainError(f"eigenvalue {eig[bad][0]} lies on the branch cut of sqrt")
    root = scipy.linalg.sqrtm(s)
    if not np.all(np.isfinite(root)):
        raise DomainError("matrix square root failed to produce finite values")
    return np.asarray(root, dtype=complex)
