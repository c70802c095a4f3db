"""Independent eigenvalue oracle for small problems.

Eigenvalues of the degree-``d`` Taylor polynomial of ``M`` from a companion
linearization, cross-checked at two degrees and then polished by Newton's
method on the bordered system. Nothing here shares code with the Arnoldi
solver beyond pointwise evaluation of ``M``.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .exceptions import SingularMatrixError

__all__ = ["OracleResult", "taylor_coefficient_matrices", "taylor_companion_eigs", "newton_refine", "match_eigenvalues"]


@dataclass
class OracleResult:
    eigenvalues: np.ndarray
    vectors: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    converged: list = field(default_factory=list)


def taylor_coefficient_matrices(problem, degree):
    """Dense ``P_i = M^(i)(0) / i!`` for ``i = 0..degree``."""
    coeffs = [f.taylor_coeffs(degree + 1) for f in problem.functions]
    mats = [m.toarray() if hasattr(m, "toarray") else np.asarray(m) for m in problem.matrices]
    return [sum(c[i] * m for c, m in zip(coeffs, mats)) for i in range(degree + 1)]


def _companion_eigs(problem, degree):
    """Eigenvalues and eigenvectors of the truncated Taylor polynomial.

    With ``u = 1 / lam`` the reversed polynomial is monic after
    multiplying by ``P_0^{-1}``, so a standard eigensolver suffices.
    """
    n = problem.n
    p = taylor_coefficient_matrices(problem, degree)
    try:
        blocks = [-scipy.linalg.solve(p[0], pi) for pi in p[1:]]
    except np.linalg.LinAlgError as err:
        raise SingularMatrixError(f"leading companion block M(0) is singular: {err}") from None
    comp = np.zeros((degree * n, degree * n), complex)
    comp[:n, :] = np.hstack(blocks)
    comp[n:, : (degree - 1) * n] = np.eye((degree - 1) * n)
    u, z = scipy.linalg.eig(comp)
    keep = np.abs(u) > 1e-14 * max(np.abs(u).max(), 1.0)
    u, z = u[keep], z[:, keep]
    # every block of a companion eigenvector is a multiple of v; take the largest
    blocks = z.reshape(degree, n, -1)
    with np.errstate(invalid="ignore"):
        norms = np.nan_to_num(np.linalg.norm(blocks, axis=1), nan=-1.0)
    pick = np.argmax(norms, axis=0)
    vecs = blocks[pick, :, np.arange(z.shape[1])].T
    return 1.0 / u, vecs


def taylor_companion_eigs(problem, degree=30, radius=1.0, check_offset=4, stability=1e-6, refine=True):
    """Eigenvalues of ``problem`` inside ``|lam| <= radius``.

    Only eigenvalues that agree (to ``stability``) between the degree
    ``degree`` and ``degree + check_offset`` truncations are kept. With
    ``refine`` each survivor is polished by :func:`newton_refine`, and
    pairs whose refined residual exceeds 1e-8 are dropped.
    Returned eigenvalues are sorted by modulus.
    """
    if degree < 2:
        raise ValueError("degree must be at least 2")
    lam_a, vec_a = _companion_eigs(problem, degree)
    lam_b, _ = _companion_eigs(problem, degree + check_offset)
    inside = np.abs(lam_a) <= radius * (1 + 1e-9)
    lam_a, vec_a = lam_a[inside], vec_a[:, inside]
    stable = [
        k for k, lam in enumerate(lam_a)
        if lam_b.size and np.min(np.abs(lam_b - lam)) <= stability * max(1.0, abs(lam))
    ]
    out_lam, out_vec, out_res, out_conv = [], [], [], []
    for k in stable:
        lam, v = lam_a[k], vec_a[:, k]
        if refine:
            lam, v, res, ok = newton_refine(problem, lam, v)
            if res > 1e-8 or abs(lam) > radius * (1 + 1e-9):
                continue
        else:
            res, ok = problem.residual(lam, v, kind="absolute"), True
        if any(abs(lam - other) <= 1e-8 * max(1.0, abs(lam)) for other in out_lam):
            continue
        out_lam.append(lam)
        out_vec.append(v / np.linalg.norm(v))
        out_res.append(res)
        out_conv.append(ok)
    order = np.argsort(np.abs(out_lam), kind="stable")
    return OracleResult(
        eigenvalues=np.array(out_lam, dtype=complex)[order],
        vectors=[out_vec[i] for i in order],
        residuals=[out_res[i] for i in order],
        converged=[out_conv[i] for i in order],
    )


def newton_refine(problem, lam, v, maxit=20, tol=1e-13):
    """Newton's method on ``[M(lam) v; c^H v - 1] = 0`` with ``c = v0 / ||v0||``.

    Returns ``(lam, v, residual, converged)`` where ``residual`` is
    ``||M(lam) v|| / ||v||``. ``converged`` is False when the step size
    did not settle within ``maxit`` iterations or the bordered Jacobian is
    singular (e.g. at a defective eigenvalue); the best iterate is returned.
    """
    n = problem.n
    v = np.asarray(v, dtype=complex)
    if not (np.all(np.isfinite(v)) and np.any(v) and np.isfinite(lam)):
        return complex(lam), v, np.inf, False
    c = v / np.linalg.norm(v)
    v = c.copy()
    lam = complex(lam)
    best = (lam, v, problem.residual(lam, v, kind="absolute"))
    converged = False
    for _ in range(maxit):
        mv = problem.m_apply(lam, v)
        jac = np.zeros((n + 1, n + 1), complex)
        jac[:n, :n] = problem.m_eval(lam)
        jac[:n, n] = problem.m_deriv_eval(lam) @ v
        jac[n, :n] = c.conj()
        rhs = -np.concatenate([mv, [np.vdot(c, v) - 1.0]])
        try:
            if np.linalg.cond(jac) > 1e14:
                break
            step = np.linalg.solve(jac, rhs)
        except np.linalg.LinAlgError:
            break
        v = v + step[:n]
        lam = lam + step[n]
        res = problem.residual(lam, v, kind="absolute")
        if res <= best[2]:
            best = (lam, v, res)
        if abs(step[n]) <= tol * max(1.0, abs(lam)) and np.linalg.norm(step[:n]) <= 1e3 * tol * np.linalg.norm(v):
            converged = True
            break
    lam, v, res = best
    return lam, v, res, converged


def match_eigenvalues(computed, reference):
    """Bijective nearest matching (Hungarian) between two eigenvalue lists.

    Returns ``(pairs, max_distance)`` with pairs ``(i, j)`` indexing
    ``computed`` and ``reference``; unmatched entries of the longer list are
    left out.
    """
    from scipy.optimize import linear_sum_assignment

    computed = np.asarray(computed, dtype=complex)
    reference = np.asarray(reference, dtype=complex)
    if computed.size == 0 or reference.size == 0:
        return [], 0.0
    cost = np.abs(computed[:, None] - reference[None, :])
    rows, cols = linear_sum_assignment(cost)
    pairs = list(zip(rows.tolist(), cols.tolist()))
    return pairs, float(cost[rows, cols].max())
