"""Structured functions ``phi(theta) = Y exp_{N-1}(theta S) c + sum_{i<N} theta^i x_i``.

A function is stored by its exponential coefficients ``c`` (length ``p``)
and its ``N`` leading Taylor coefficients ``x_0..x_{N-1}`` (each of length
``n``); the pair ``(Y, S)`` is shared by every function of an Arnoldi
sweep and lives in a :class:`FunctionEnv`. Storing the leading Taylor
coefficients directly, instead of a polynomial added to a full
exponential, avoids cancellation when the polynomial part approximates
``-Y exp(theta S) c``.

The scalar product is the Euclidean one on Taylor coefficients,
``<phi, psi> = sum_i z_i^H x_i``; the exponential tail is summed in closed
form through the ``p x p`` matrices ``W_{N, Nmax}``.
"""

import math

import numpy as np

from . import dense
from .exceptions import BreakdownError

__all__ = [
    "choose_nmax",
    "FunctionEnv",
    "StructuredFunction",
    "StructuredBasis",
    "apply_operator",
    "expand_degree",
    "inner_product",
    "gram_schmidt",
    "evaluate",
    "w_table",
    "REORTH_TOL",
]

EPS = np.finfo(float).eps
REORTH_TOL = math.sqrt(EPS)


def choose_nmax(s_norm, target=EPS, cap=100_000):
    """Smallest ``N`` with ``exp(2s) s^(2(N+1)) / ((N+1)!)^2 <= target``."""
    if target <= 0:
        raise ValueError("target must be positive")
    if s_norm == 0:
        return 0
    log_target = math.log(target)
    log_s = math.log(s_norm)
    for n in range(cap):
        if 2 * s_norm + 2 * (n + 1) * log_s - 2 * math.lgamma(n + 2) <= log_target:
            return n
    raise OverflowError(f"no truncation order below {cap} reaches {target:g} for ||S|| = {s_norm:g}")


def truncation_bound(s_norm, n_max):
    """Scalar factor of the inner-product truncation bound at order ``n_max``."""
    if s_norm == 0:
        return 0.0
    return math.exp(2 * s_norm + 2 * (n_max + 1) * math.log(s_norm) - 2 * math.lgamma(n_max + 2))


class FunctionEnv:
    """The shared pair ``(Y, S)`` plus cached ``Y^H Y``, ``W`` tables and ``S^i / i!``.

    The ``W`` sums run to ``n_max = choose_nmax(||S||, ip_tol) + extra_terms``.
    An Arnoldi sweep of ``m`` steps multiplies ``c`` by ``S^{-1}`` up to
    ``m`` times, so it passes ``extra_terms = m`` to keep the neglected
    terms of ``d^H W c`` at the ``ip_tol`` level.
    Immutable after construction; all tables are built eagerly.
    """

    def __init__(self, y, s, ip_tol=EPS, extra_terms=0):
        self.y = np.array(y, dtype=complex)
        self.s = np.array(s, dtype=complex)
        if self.y.ndim != 2 or self.s.shape != (self.y.shape[1], self.y.shape[1]):
            raise ValueError(f"shape mismatch: Y is {self.y.shape}, S is {self.s.shape}")
        self.n, self.p = self.y.shape
        self.s_lu = dense.lu_factor(self.s) if self.p else None
        self.yhy = self.y.conj().T @ self.y
        self.s_norm = float(np.linalg.norm(self.s, 2)) if self.p else 0.0
        self.ip_tol = ip_tol
        self.n_max = choose_nmax(self.s_norm, ip_tol) + (extra_terms if self.s_norm else 0)
        self._powers = [np.eye(self.p, dtype=complex)]
        self._extend_powers(self.n_max)
        # suffix sums: self._w[lo] = sum_{i=lo}^{n_max} (S^i/i!)^H Y^H Y (S^i/i!)
        w = [np.zeros((self.p, self.p), complex)]
        for i in range(self.n_max, -1, -1):
            t = self._powers[i]
            w.append(w[-1] + t.conj().T @ self.yhy @ t)
        w.reverse()
        self._w = [0.5 * (m + m.conj().T) for m in w]

    def _extend_powers(self, upto):
        while len(self._powers) <= upto:
            i = len(self._powers)
            self._powers.append(self._powers[-1] @ self.s / i)

    def scaled_power(self, i):
        """``S^i / i!``."""
        self._extend_powers(i)
        return self._powers[i]

    def w_table(self, lo):
        """``W_{lo, n_max} = sum_{i=lo}^{n_max} (S^i)^H Y^H Y S^i / (i!)^2``."""
        if lo < 0:
            raise ValueError("lower index must be nonnegative")
        return self._w[min(lo, self.n_max + 1)]

    def solve_s(self, c):
        return dense.lu_solve(self.s_lu, c)

    def exp_block(self, nblocks, c):
        """Taylor coefficient ``Y S^nblocks c / nblocks!`` (vector or block)."""
        return self.y @ (self.scaled_power(nblocks) @ c)


def w_table(env, lo):
    return env.w_table(lo)


class StructuredFunction:
    """``phi(theta) = Y exp_{N-1}(theta S) c + sum_{i<N} theta^i x[i]``, ``x`` of shape ``(N, n)``."""

    def __init__(self, env, c, x=None):
        self.env = env
        self.c = np.asarray(c, dtype=complex).reshape(env.p)
        if x is None:
            x = np.zeros((0, env.n), complex)
        self.x = np.asarray(x, dtype=complex).reshape(-1, env.n)

    @property
    def degree(self):
        """Number of explicit Taylor blocks ``N``."""
        return self.x.shape[0]

    def padded(self, nblocks):
        """The same function with ``nblocks >= N`` explicit Taylor blocks."""
        extra = nblocks - self.degree
        if extra < 0:
            raise ValueError("cannot truncate a structured function")
        if extra == 0:
            return self
        new = [self.env.exp_block(self.degree + i, self.c) for i in range(extra)]
        return StructuredFunction(self.env, self.c, np.vstack([self.x, np.array(new)]))

    def taylor_coeffs(self, count):
        """First ``count`` Taylor coefficients as a ``(count, n)`` array."""
        return self.padded(max(count, self.degree)).x[:count]

    def __add__(self, other):
        nb = max(self.degree, other.degree)
        a, b = self.padded(nb), other.padded(nb)
        return StructuredFunction(self.env, a.c + b.c, a.x + b.x)

    def __sub__(self, other):
        return self + other * -1.0

    def __mul__(self, alpha):
        return StructuredFunction(self.env, alpha * self.c, alpha * self.x)

    __rmul__ = __mul__

    def __call__(self, theta):
        return evaluate(self, theta)

    def norm(self):
        return math.sqrt(max(inner_product(self, self).real, 0.0))


class StructuredBasis:
    """Block function ``F(theta) = Y exp_{N-1}(theta S) C + sum_i theta^i V[i]``.

    ``C`` has shape ``(p, k)`` and ``V`` shape ``(N, n, k)``.
    """

    def __init__(self, env, c_block, v_block=None):
        self.env = env
        self.c_block = np.asarray(c_block, dtype=complex).reshape(env.p, -1)
        k = self.c_block.shape[1]
        if v_block is None:
            v_block = np.zeros((0, env.n, k), complex)
        v_block = np.asarray(v_block, dtype=complex)
        if v_block.ndim != 3:
            v_block = v_block.reshape(-1, env.n, k)
        if v_block.shape[1:] != (env.n, k):
            raise ValueError(f"V block has shape {v_block.shape}, expected (N, {env.n}, {k})")
        self.v_block = v_block

    @property
    def k(self):
        return self.c_block.shape[1]

    @property
    def degree(self):
        return self.v_block.shape[0]

    @property
    def v_stacked(self):
        """``V`` as the ``(N n) x k`` stacked matrix."""
        return self.v_block.reshape(self.degree * self.env.n, self.k)

    def column(self, j):
        return StructuredFunction(self.env, self.c_block[:, j], self.v_block[:, :, j])

    def columns(self, cols):
        return StructuredBasis(self.env, self.c_block[:, cols], self.v_block[:, :, cols])

    def padded(self, nblocks):
        basis = self
        while basis.degree < nblocks:
            basis = expand_degree(basis)
        return basis

    def append(self, phi):
        """New basis with ``phi`` as an extra column (degrees must agree)."""
        if phi.degree != self.degree:
            raise ValueError(f"degree mismatch: basis {self.degree}, function {phi.degree}")
        return StructuredBasis(
            self.env,
            np.column_stack([self.c_block, phi.c]),
            np.concatenate([self.v_block, phi.x[:, :, None]], axis=2),
        )

    def combine(self, coeffs):
        """``F @ coeffs`` as a function (vector ``coeffs``) or basis (matrix)."""
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.ndim == 1:
            return StructuredFunction(self.env, self.c_block @ coeffs, self.v_block @ coeffs)
        return StructuredBasis(self.env, self.c_block @ coeffs, self.v_block @ coeffs)

    def gram(self):
        """Gram matrix ``G[i, j] = <f_j, f_i>``."""
        v = self.v_stacked
        w = self.env.w_table(self.degree)
        return v.conj().T @ v + self.c_block.conj().T @ w @ self.c_block

    def __call__(self, theta):
        tail = dense.exp_tail(self.env.s, self.degree - 1, theta) if self.env.p else np.zeros((0, 0))
        out = self.env.y @ (tail @ self.c_block)
        powers = theta ** np.arange(self.degree)
        return out + np.einsum("i,ink->nk", powers, self.v_block)


def evaluate(phi, theta):
    """Point value ``phi(theta)``."""
    env = phi.env
    out = np.zeros(env.n, complex)
    if env.p and np.any(phi.c):
        out += env.y @ (dense.exp_tail(env.s, phi.degree - 1, theta) @ phi.c)
    acc = np.zeros(env.n, complex)
    for i in range(phi.degree - 1, -1, -1):
        acc = acc * theta + phi.x[i]
    return out + acc


def inner_product(phi, psi):
    """``<phi, psi> = sum_i z_i^H x_i + d^H W_{N, Nmax} c`` (linear in ``phi``)."""
    if phi.env is not psi.env:
        raise ValueError("functions live in different environments")
    nb = max(phi.degree, psi.degree)
    phi, psi = phi.padded(nb), psi.padded(nb)
    w = phi.env.w_table(nb)
    return np.vdot(psi.x, phi.x) + psi.c.conj() @ (w @ phi.c)


def expand_degree(basis):
    """Move the leading exponential Taylor block ``Y S^N C / N!`` into ``V``."""
    new = basis.env.exp_block(basis.degree, basis.c_block)
    return StructuredBasis(basis.env, basis.c_block, np.concatenate([basis.v_block, new[None]], axis=0))


def apply_operator(problem, phi):
    """The action of the integration operator on a structured function.

    For ``phi`` with ``N`` blocks returns ``phi_+`` with ``N + 1`` blocks:
    ``c_+ = S^{-1} c``, ``x_{+,i} = x_{i-1} / i`` and
    ``x_{+,0} = -M(0)^{-1} (MM_N(Y, S) c_+ + sum_{i=1}^N M^(i)(0) x_{+,i})``.
    """
    env = phi.env
    nb = phi.degree
    c_plus = env.solve_s(phi.c) if env.p else phi.c.copy()
    x_plus = np.empty((nb + 1, env.n), complex)
    x_plus[1:] = phi.x / np.arange(1, nb + 1)[:, None]
    rhs = problem.deriv_sum(x_plus[1:], start=1)
    if env.p and np.any(c_plus):
        rhs = rhs + problem.mm_tail_apply(env.y, env.s, c_plus, nb)
    x_plus[0] = -problem.m0_solve(rhs)
    return StructuredFunction(env, c_plus, x_plus)


def gram_schmidt(phi, basis, reorth_tol=REORTH_TOL, breakdown_tol=None):
    """Orthonormalize ``phi`` against the orthonormal columns of ``basis``.

    Classical Gram-Schmidt with at most one reorthogonalization pass, done
    when the correction ``g`` exceeds ``reorth_tol`` times the norm of the
    first-pass complement. Returns ``(phi_perp, h, beta)`` with
    ``phi = basis @ h + beta * phi_perp``.

    Raises :class:`BreakdownError` (carrying ``h`` and ``beta``) when
    ``beta <= breakdown_tol``, default ``100 eps ||phi||``.
    """
    nb = max(phi.degree, basis.degree)
    phi, basis = phi.padded(nb), basis.padded(nb)
    env = phi.env
    w = env.w_table(nb)
    c, x = phi.c.copy(), phi.x.reshape(-1).copy()
    cb, vb = basis.c_block, basis.v_stacked
    norm_in = math.sqrt(max((np.vdot(x, x) + c.conj() @ w @ c).real, 0.0))
    if breakdown_tol is None:
        breakdown_tol = 100 * EPS * norm_in

    def coeffs(c, x):
        return vb.conj().T @ x + cb.conj().T @ (w @ c)

    h = np.zeros(basis.k, complex)
    for sweep in range(2):
        if basis.k == 0:
            break
        g = coeffs(c, x)
        if sweep == 1:
            beta1 = math.sqrt(max((np.vdot(x, x) + c.conj() @ w @ c).real, 0.0))
            if np.linalg.norm(g) <= reorth_tol * beta1:
                break
        c = c - cb @ g
        x = x - vb @ g
        h = h + g
    beta = math.sqrt(max((np.vdot(x, x) + c.conj() @ w @ c).real, 0.0))
    if beta <= breakdown_tol:
        raise BreakdownError(f"orthogonal complement has norm {beta:.3e}", h=h, beta=beta)
    return StructuredFunction(env, c / beta, (x / beta).reshape(nb, env.n)), h, beta
