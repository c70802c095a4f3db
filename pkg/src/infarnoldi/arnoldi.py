"""Arnoldi's method for the integration operator over structured functions, with locking."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import BreakdownError
from .structured import (
    EPS,
    FunctionEnv,
    StructuredBasis,
    StructuredFunction,
    apply_operator,
    expand_degree,
    gram_schmidt,
    inner_product,
)

__all__ = ["ArnoldiFactorization", "infarn_exp", "arnoldi_relation_residual"]


@dataclass(frozen=True)
class ArnoldiFactorization:
    """``B F_k = F_{k+1} H`` with ``H`` of shape ``(k+1, k)``.

    The leading ``p_l x p_l`` block of ``H`` is the locked triangular
    matrix ``R``. After a breakdown the last column of ``basis`` is a zero
    placeholder and ``H[k, k-1] == 0``.
    """

    env: FunctionEnv
    basis: StructuredBasis
    h: np.ndarray
    p_l: int
    breakdown: bool = False

    @property
    def k(self):
        return self.h.shape[1]

    @property
    def hk(self):
        """Square part ``H_k``."""
        return self.h[: self.k, : self.k]

    @property
    def v_head(self):
        """``F_{k+1}(0)``: the ``n x (k+1)`` matrix of leading Taylor blocks."""
        return self.basis.v_block[0]

    @property
    def degree(self):
        return self.basis.degree


def infarn_exp(problem, y, s, c, p_l, k_max, *, ip_tol=EPS, check_tol=1e-8, callback=None):
    """Run the locked infinite Arnoldi sweep.

    The start function is ``f(theta) = Y exp(theta S) c`` and the locked
    functions are the first ``p_l`` columns of ``Y exp(theta S)``; together
    they must be orthonormal (checked to ``check_tol``). ``S`` must be block
    upper triangular with leading block ``R^{-1}``.

    ``callback(k, h, basis)`` is called after each new column with the
    current ``(k+1) x k`` Hessenberg matrix.
    """
    env = FunctionEnv(y, s, ip_tol, extra_terms=k_max - p_l + 1)
    p = env.p
    if not 0 <= p_l < k_max:
        raise ValueError(f"need 0 <= p_l < k_max, got p_l={p_l}, k_max={k_max}")
    if p_l >= p:
        raise ValueError(f"start function needs p > p_l (p={p}, p_l={p_l})")
    s11 = env.s[:p_l, :p_l]
    if p_l and np.abs(env.s[p_l:, :p_l]).max() > 0:
        raise ValueError("S must be block upper triangular below the locked block")
    if np.array_equal(s11, np.triu(s11)):
        r = scipy.linalg.solve_triangular(s11, np.eye(p_l))
    else:
        r = np.linalg.solve(s11, np.eye(p_l))

    c_block = np.zeros((p, p_l + 1), complex)
    c_block[:p_l, :p_l] = np.eye(p_l)
    c_block[:, p_l] = c
    basis = StructuredBasis(env, c_block)
    gram = basis.gram()
    err = np.linalg.norm(gram - np.eye(p_l + 1))
    if err > check_tol:
        raise ValueError(f"locked functions and start function are not orthonormal (||G - I||_F = {err:.2e})")

    h = np.zeros((k_max + 1, k_max), complex)
    h[:p_l, :p_l] = r
    for k in range(p_l, k_max):
        psi = apply_operator(problem, basis.column(k))
        basis = expand_degree(basis)
        try:
            perp, hcol, beta = gram_schmidt(psi, basis)
        except BreakdownError as exc:
            h[: k + 1, k] = exc.h
            zero = StructuredFunction(env, np.zeros(p), np.zeros((basis.degree, env.n)))
            basis = basis.append(zero)
            return ArnoldiFactorization(env, basis, h[: k + 2, : k + 1].copy(), p_l, breakdown=True)
        h[: k + 1, k] = hcol
        h[k + 1, k] = beta
        basis = basis.append(perp)
        if callback is not None:
            callback(k + 1, h[: k + 2, : k + 1], basis)
    return ArnoldiFactorization(env, basis, h, p_l)


def arnoldi_relation_residual(problem, fact):
    """Largest relative residual of ``B f_j = F_{k+1} H[:, j]`` over non-locked columns.

    Each column is re-applied independently; both sides are compared as
    structured functions of the final degree, in the induced norm.
    """
    worst = 0.0
    nb = fact.degree
    for j in range(fact.p_l, fact.k):
        col = fact.basis.column(j)
        col = StructuredFunction(col.env, col.c, col.x[: j - fact.p_l])
        lhs = apply_operator(problem, col).padded(nb)
        rhs = fact.basis.combine(fact.h[:, j])
        diff = lhs - rhs
        denom = np.sqrt(abs(inner_product(lhs, lhs)))
        worst = max(worst, np.sqrt(abs(inner_product(diff, diff))) / max(denom, np.finfo(float).tiny))
    return worst
