"""Nonlinear eigenvalue problems ``M(lam) = sum_j M_j f_j(lam)``.

The solver never evaluates ``M`` pointwise in its inner loop. It needs the
Taylor data of every scalar function at the origin, the block residual
``MM(Y, S) = sum_j M_j Y f_j(S)`` and its Taylor remainders, and solves
with ``M(0)``. All of that lives here.
"""

import cmath
import math
import re
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from . import dense
from .exceptions import DomainError, SeriesConvergenceError, SingularMatrixError

__all__ = [
    "ScalarFunction",
    "Poly",
    "Exp",
    "SqrtShift",
    "parse_function",
    "sqrt_taylor_coeffs",
    "NepProblem",
    "InvariantPair",
]

EPS = np.finfo(float).eps
SERIES_CAP = 500


class ScalarFunction:
    """A scalar function analytic in a disc around the origin.

    Subclasses provide ``__call__``, ``derivative``, ``matfun`` and
    ``_coeffs(count)`` (the first ``count`` Taylor coefficients at zero).
    """

    radius = math.inf
    degree = math.inf

    @cached_property
    def _table(self):
        with np.errstate(over="ignore", invalid="ignore"):
            return np.asarray(self._coeffs(SERIES_CAP + 1), dtype=complex)

    def taylor_coeffs(self, count):
        """First ``count`` Taylor coefficients ``f^(i)(0) / i!``."""
        if count <= self._table.shape[0]:
            return self._table[:count].copy()
        return np.asarray(self._coeffs(count), dtype=complex)

    def taylor_coeff(self, i):
        return self.taylor_coeffs(i + 1)[i]

    def derivative_at_zero(self, i):
        """``f^(i)(0)``."""
        return self.taylor_coeff(i) * math.factorial(i)

    def matfun(self, s):
        raise NotImplementedError

    def matvec(self, s, c):
        """``f(s) @ c``."""
        return self.matfun(s) @ c


class Poly(ScalarFunction):
    """``f(lam) = c0 + c1 lam + ... + cd lam^d``."""

    def __init__(self, *coeffs):
        if not coeffs:
            coeffs = (0.0,)
        self.coeffs = tuple(complex(c) for c in coeffs)
        nz = [i for i, c in enumerate(self.coeffs) if c != 0]
        self.degree = nz[-1] if nz else 0

    def __repr__(self):
        return "poly(" + ",".join(_fmt(c) for c in self.coeffs) + ")"

    def _coeffs(self, count):
        out = np.zeros(count, complex)
        k = min(count, len(self.coeffs))
        out[:k] = self.coeffs[:k]
        return out

    def __call__(self, lam):
        acc = 0j
        for c in reversed(self.coeffs):
            acc = acc * lam + c
        return acc

    def derivative(self, lam):
        acc = 0j
        for i in range(len(self.coeffs) - 1, 0, -1):
            acc = acc * lam + i * self.coeffs[i]
        return acc

    def matfun(self, s):
        p = s.shape[0]
        acc = np.zeros((p, p), complex)
        for c in reversed(self.coeffs):
            acc = acc @ s + c * np.eye(p)
        return acc

    def matvec(self, s, c):
        acc = np.zeros(s.shape[0], complex)
        for a in reversed(self.coeffs):
            acc = s @ acc + a * c
        return acc


class Exp(ScalarFunction):
    """``f(lam) = exp(a + b lam)``."""

    def __init__(self, a=0.0, b=1.0):
        self.a = complex(a)
        self.b = complex(b)

    def __repr__(self):
        return f"exp({_fmt(self.a)},{_fmt(self.b)})"

    def _coeffs(self, count):
        out = np.empty(count, complex)
        term = cmath.exp(self.a)
        for i in range(count):
            out[i] = term
            term = term * self.b / (i + 1)
        return out

    def __call__(self, lam):
        return cmath.exp(self.a + self.b * lam)

    def derivative(self, lam):
        return self.b * cmath.exp(self.a + self.b * lam)

    def matfun(self, s):
        return cmath.exp(self.a) * dense.matrix_exp(self.b * s)


def sqrt_taylor_coeffs(sigma, mu, gamma, k):
    """``k``-th Taylor coefficient of ``lam -> sqrt(gamma lam + mu - sigma^2)`` at 0.

    Uses the binomial recurrence
    ``a_{j+1} = a_j * gamma * (1/2 - j) / ((j + 1) (mu - sigma^2))``.
    """
    shift = complex(mu) - complex(sigma) ** 2
    _check_branch(shift, "sqrtshift")
    alpha = cmath.sqrt(shift)
    for j in range(k):
        alpha = alpha * complex(gamma) * (0.5 - j) / ((j + 1) * shift)
    return alpha


def _check_branch(z, name):
    if z.real <= 0 and abs(z.imag) <= 1e-14 * max(abs(z), 1e-300):
        raise DomainError(f"{name}: argument {z} lies on the branch cut of sqrt", term=name)


class SqrtShift(ScalarFunction):
    """``f(lam) = sqrt(gamma lam + mu - sigma^2)`` (principal branch)."""

    def __init__(self, gamma, mu, sigma=0.0):
        self.gamma = complex(gamma)
        self.mu = complex(mu)
        self.sigma = complex(sigma)
        self.shift = self.mu - self.sigma**2
        _check_branch(self.shift, repr(self))
        self.radius = abs(self.shift) / abs(self.gamma) if self.gamma != 0 else math.inf

    def __repr__(self):
        return f"sqrtshift({_fmt(self.gamma)},{_fmt(self.mu)},{_fmt(self.sigma)})"

    def _coeffs(self, count):
        out = np.empty(count, complex)
        alpha = cmath.sqrt(self.shift)
        for j in range(count):
            out[j] = alpha
            alpha = alpha * self.gamma * (0.5 - j) / ((j + 1) * self.shift)
        return out

    def __call__(self, lam):
        z = self.gamma * lam + self.shift
        _check_branch(z, repr(self))
        return cmath.sqrt(z)

    def derivative(self, lam):
        return self.gamma / (2 * self(lam))

    def matfun(self, s):
        p = s.shape[0]
        try:
            return dense.matrix_sqrt(self.gamma * s + self.shift * np.eye(p))
        except DomainError as err:
            raise DomainError(f"{self!r}: {err}", term=repr(self)) from err


def _fmt(z):
    z = complex(z)
    if z.imag == 0:
        return repr(z.real)
    return repr(z).strip("()")


_FUN_RE = re.compile(r"^\s*(poly|exp|sqrtshift)\s*\((.*)\)\s*$")


def parse_function(text):
    """Parse ``poly(c0,...)``, ``exp(a,b)`` or ``sqrtshift(gamma,mu,sigma)``.

    Arguments accept anything ``complex()`` does, e.g. ``-1``, ``2.5e3`` or
    ``1+2j``.
    """
    m = _FUN_RE.match(text)
    if not m:
        raise ValueError(f"unknown scalar function descriptor {text!r}")
    name, body = m.groups()
    try:
        args = [complex(a.replace(" ", "")) for a in body.split(",") if a.strip()]
    except ValueError as err:
        raise ValueError(f"bad argument in {text!r}: {err}") from None
    if name == "poly":
        return Poly(*args)
    if name == "exp":
        if len(args) != 2:
            raise ValueError(f"exp takes 2 arguments (a, b), got {len(args)}")
        return Exp(*args)
    if len(args) != 3:
        raise ValueError(f"sqrtshift takes 3 arguments (gamma, mu, sigma), got {len(args)}")
    return SqrtShift(*args)


class NepProblem:
    """``M(lam) = sum_j M_j f_j(lam)`` with a cached factorization of ``M(0)``.

    Parameters
    ----------
    terms : list of (matrix, ScalarFunction)
        Matrices may be dense arrays or scipy sparse matrices.
    name : str, optional

    Raises ``SingularMatrixError`` if ``M(0)`` is singular, i.e. if 0 is an
    eigenvalue, which the method excludes.
    """

    def __init__(self, terms, name=None):
        if not terms:
            raise ValueError("a problem needs at least one term")
        mats, funs = [], []
        n = None
        for mat, fun in terms:
            if scipy.sparse.issparse(mat):
                mat = scipy.sparse.csc_matrix(mat, dtype=complex)
            else:
                mat = np.asarray(mat, dtype=complex)
                if mat.ndim != 2:
                    raise ValueError("term matrices must be two-dimensional")
            if mat.shape[0] != mat.shape[1]:
                raise ValueError(f"term matrix must be square, got {mat.shape}")
            if n is None:
                n = mat.shape[0]
            elif mat.shape[0] != n:
                raise ValueError(f"term matrices disagree in size: {mat.shape[0]} vs {n}")
            if not isinstance(fun, ScalarFunction):
                raise TypeError(f"expected a ScalarFunction, got {type(fun).__name__}")
            mats.append(mat)
            funs.append(fun)
        self.n = n
        self.matrices = tuple(mats)
        self.functions = tuple(funs)
        self.name = name or "custom"
        self._sparse = any(scipy.sparse.issparse(m) for m in mats)
        self.m0 = self._combine([f.taylor_coeff(0) for f in funs])
        self._factor_m0()
        self.term_norms = np.array(
            [scipy.sparse.linalg.norm(m) if scipy.sparse.issparse(m) else np.linalg.norm(m) for m in mats]
        )

    @property
    def m(self):
        return len(self.matrices)

    def __repr__(self):
        terms = " + ".join(f"M{j}*{f!r}" for j, f in enumerate(self.functions))
        return f"NepProblem({self.name!r}, n={self.n}: {terms})"

    def _combine(self, weights):
        if self._sparse:
            acc = scipy.sparse.csc_matrix((self.n, self.n), dtype=complex)
        else:
            acc = np.zeros((self.n, self.n), complex)
        for w, mat in zip(weights, self.matrices):
            if w != 0:
                acc = acc + w * mat
        return acc

    def _factor_m0(self):
        msg = "M(0) is singular: lambda = 0 is an eigenvalue, shift the problem"
        if self._sparse:
            with np.errstate(all="ignore"):
                try:
                    lu = scipy.sparse.linalg.splu(scipy.sparse.csc_matrix(self.m0))
                except RuntimeError as err:
                    raise SingularMatrixError(f"{msg} ({err})") from None
            diag = np.abs(lu.U.diagonal())
            threshold = self.n * EPS * scipy.sparse.linalg.norm(self.m0, 1)
            small = np.flatnonzero(diag <= threshold)
            if small.size:
                raise SingularMatrixError(f"{msg} (pivot {small[0]})", index=int(small[0]))
            self._solve = lu.solve
        else:
            try:
                fact = dense.lu_factor(self.m0)
            except SingularMatrixError as err:
                raise SingularMatrixError(f"{msg} ({err})", index=err.index) from None
            self._solve = lambda b: dense.lu_solve(fact, b)

    # pointwise evaluation ---------------------------------------------

    def _values(self, lam, deriv=False):
        out = []
        for f in self.functions:
            try:
                out.append(f.derivative(lam) if deriv else f(lam))
            except DomainError as err:
                raise DomainError(f"lambda={lam} outside the domain of {f!r}: {err}", term=repr(f)) from None
        return out

    def m_eval(self, lam):
        """Dense ``M(lam)``."""
        acc = self._combine(self._values(lam))
        return acc.toarray() if scipy.sparse.issparse(acc) else acc

    def m_deriv_eval(self, lam):
        """Dense ``M'(lam)``."""
        acc = self._combine(self._values(lam, deriv=True))
        return acc.toarray() if scipy.sparse.issparse(acc) else acc

    def m_apply(self, lam, v):
        """``M(lam) @ v`` without forming ``M(lam)``."""
        v = np.asarray(v, dtype=complex)
        return sum(w * (mat @ v) for w, mat in zip(self._values(lam), self.matrices))

    def residual(self, lam, v, kind="relative"):
        """Eigenpair residual ``||M(lam) v|| / ||v||``.

        ``kind="relative"`` divides further by ``sum_j |f_j(lam)| ||M_j||_F``,
        which makes it a normwise backward error independent of the
        scaling of the matrices.
        """
        v = np.asarray(v, dtype=complex)
        nv = np.linalg.norm(v)
        if nv == 0:
            return math.inf
        r = np.linalg.norm(self.m_apply(lam, v)) / nv
        if kind == "absolute":
            return r
        if kind != "relative":
            raise ValueError(f"unknown residual kind {kind!r}")
        scale = float(np.dot(np.abs(self._values(lam)), self.term_norms))
        return r / scale if scale > 0 else r

    # Taylor data at the origin --------------------------------------------

    def m0_solve(self, b):
        """``M(0)^{-1} b`` for a vector or a block of columns."""
        b = np.asarray(b, dtype=complex)
        if b.size == 0:
            return b.copy()
        return np.asarray(self._solve(b), dtype=complex).reshape(b.shape)

    def m_deriv_apply(self, i, x):
        """``M^(i)(0) @ x``."""
        x = np.asarray(x, dtype=complex)
        return sum(f.derivative_at_zero(i) * (mat @ x) for f, mat in zip(self.functions, self.matrices))

    def deriv_sum(self, xs, start=1):
        """``sum_i M^(i)(0) xs[i - start]`` with one product per term matrix."""
        xs = np.asarray(xs, dtype=complex)
        out = np.zeros(self.n, complex)
        if xs.shape[0] == 0:
            return out
        count = start + xs.shape[0]
        fact = np.array([float(math.factorial(i)) for i in range(start, count)])
        for f, mat in zip(self.functions, self.matrices):
            w = f.taylor_coeffs(count)[start:] * fact
            if np.any(w):
                out += mat @ (w @ xs)
        return out

    def mm_apply(self, y, s, c):
        """``MM(Y, S) c = sum_j M_j Y f_j(S) c``."""
        y = np.asarray(y, dtype=complex)
        s = np.asarray(s, dtype=complex)
        c = np.asarray(c, dtype=complex)
        out = np.zeros(self.n, complex)
        if not np.any(c):
            return out
        for f, mat in zip(self.functions, self.matrices):
            try:
                fc = f.matvec(s, c)
            except DomainError as err:
                raise DomainError(f"matrix function of {f!r} undefined: {err}", term=repr(f)) from None
            out += mat @ (y @ fc)
        return out

    def mm_tail_apply(self, y, s, c, n, method="auto", cap=SERIES_CAP):
        """Taylor remainder ``MM_n(Y, S) c`` of the block residual.

        ``MM_n(Y, S) = MM(Y, S) - sum_{i<=n} M^(i)(0) Y S^i / i!``.

        ``method="series"`` sums ``sum_{i>n} coeff_j(i) S^i c`` per term
        until the terms drop below ``eps * ||c||``; ``"closed"`` subtracts
        the leading Taylor terms from ``f_j(S) c``. ``"auto"`` uses the
        series and falls back to the closed form when the series does not
        converge (``S`` beyond a term's radius of convergence).
        """
        if n < -1:
            raise ValueError(f"n must be >= -1, got {n}")
        y = np.asarray(y, dtype=complex)
        s = np.asarray(s, dtype=complex)
        c = np.asarray(c, dtype=complex)
        if n == -1:
            return self.mm_apply(y, s, c)
        if method == "closed":
            tails = self._tails_closed(s, c, n)
        elif method == "series":
            tails = self._tails_series(s, c, n, cap)
        elif method == "auto":
            try:
                tails = self._tails_series(s, c, n, cap)
            except SeriesConvergenceError:
                tails = self._tails_closed(s, c, n)
        else:
            raise ValueError(f"unknown method {method!r}")
        out = np.zeros(self.n, complex)
        for tail, mat in zip(tails, self.matrices):
            if tail is not None:
                out += mat @ (y @ tail)
        return out

    def _tails_closed(self, s, c, n):
        tails = []
        for f in self.functions:
            acc = f.matvec(s, c)
            v = c
            coeffs = f.taylor_coeffs(n + 1)
            for i in range(n + 1):
                acc = acc - coeffs[i] * v
                v = s @ v
            tails.append(acc)
        return tails

    def _tails_series(self, s, c, n, cap):
        nc = np.linalg.norm(c)
        tails = [None] * self.m
        if nc == 0:
            return tails
        top = max(f.degree for f in self.functions)
        tables = [f.taylor_coeffs(cap + 1) for f in self.functions]
        live = [f.degree > n for f in self.functions]
        v = np.linalg.matrix_power(s, n + 1) @ c
        quiet = 0
        for i in range(n + 1, cap + 1):
            if i > top:
                return tails
            big = 0.0
            for j, table in enumerate(tables):
                a = table[i]
                if not live[j] or a == 0:
                    continue
                if not np.isfinite(a):
                    raise SeriesConvergenceError(f"Taylor coefficient {i} of {self.functions[j]!r} overflows")
                t = a * v
                tails[j] = t if tails[j] is None else tails[j] + t
                big = max(big, abs(a) * np.linalg.norm(v))
            if not np.isfinite(big):
                raise SeriesConvergenceError("Taylor remainder series overflows")
            quiet = quiet + 1 if big < EPS * nc else 0
            if quiet >= 3:
                return tails
            v = s @ v
            if not np.any(v):
                return tails
        radius = min(f.radius for f in self.functions)
        raise SeriesConvergenceError(
            f"Taylor remainder did not converge in {cap} terms (||S||_2 = {np.linalg.norm(s, 2):.4g}, "
            f"smallest radius of convergence {radius:.4g})"
        )


@dataclass
class InvariantPair:
    """An invariant pair ``(Y, Lambda)`` with ``MM(Y, Lambda) ~ 0``.

    ``lam`` is upper triangular, so ``(Y, lam)`` is a partial Schur
    factorization and the eigenvalues sit on its diagonal.
    """

    y: np.ndarray
    lam: np.ndarray
    residual_gamma: float = 0.0
    per_eig_residuals: list = field(default_factory=list)

    @property
    def eigenvalues(self):
        return np.diag(self.lam).copy()

    @property
    def size(self):
        return self.lam.shape[0]

    def eigenvectors(self):
        """NEP eigenvectors ``Y u`` from the eigenvectors ``u`` of ``lam``."""
        return self.y @ triangular_eigenvectors(self.lam)


def triangular_eigenvectors(t):
    """Eigenvectors of an upper triangular matrix by back substitution.

    Column ``i`` belongs to ``t[i, i]`` and is normalized to unit length.
    Coinciding diagonal entries are perturbed slightly, as in LAPACK.
    """
    t = np.asarray(t, dtype=complex)
    p = t.shape[0]
    out = np.zeros((p, p), complex)
    small = max(EPS * np.linalg.norm(t), np.finfo(float).tiny)
    for i in range(p):
        u = np.zeros(p, complex)
        u[i] = 1.0
        for r in range(i - 1, -1, -1):
            d = t[r, r] - t[i, i]
            if abs(d) < small:
                d = small
            u[r] = -(t[r, r + 1:i + 1] @ u[r + 1:i + 1]) / d
        out[:, i] = u / np.linalg.norm(u)
    return out
