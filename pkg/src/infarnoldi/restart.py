"""Structured explicit restarts with locking.

Each outer iteration runs a locked Arnoldi sweep, sorts the Ritz values of
``H_k`` into locked, wanted and unwanted classes, reorders the Schur form
accordingly and compresses the locked and wanted part into a new
exponential pair ``(Y, S)`` with ``p`` columns. Locked Ritz values are
carried over exactly: only the trailing unlocked block of ``H_k`` is ever
re-triangularized.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import dense
from .arnoldi import infarn_exp
from .exceptions import SingularMatrixError
from .nep import InvariantPair, triangular_eigenvectors
from .structured import EPS, FunctionEnv, StructuredBasis, StructuredFunction, gram_schmidt

__all__ = [
    "SolverOptions",
    "RitzInfo",
    "OuterRecord",
    "ConvergenceRecord",
    "SchurPartition",
    "LOCK",
    "WANT",
    "UNWANT",
    "classify_ritz",
    "schur_partition",
    "impose_structure",
    "gamma_indicator",
    "infarn_restart",
]

LOCK, WANT, UNWANT = "lock", "want", "unwant"
ZERO_RITZ = 1e-12


@dataclass(frozen=True)
class SolverOptions:
    """Configuration of the restarted solver.

    ``lock_tol`` applies to the NEP residual ``||M(lam) v|| / ||v||``
    (``residual="absolute"``) or to the normwise backward error
    (``residual="relative"``). An absolute tolerance depends on the scaling
    of the coefficient matrices.
    """

    k_max: int = 20
    p: int = 10
    lock_tol: float = 1000 * EPS
    max_outer: int = 50
    stall_limit: int = 10
    selector: str = "largest"
    target: complex | None = None
    ip_tol: float = EPS
    residual: str = "absolute"
    track_inner: bool = False

    def validate(self):
        if self.k_max < 2:
            raise ValueError(f"k_max must be at least 2, got {self.k_max}")
        if not 0 <= self.p < self.k_max:
            raise ValueError(f"need 0 <= p < k_max, got p={self.p}, k_max={self.k_max}")
        if self.lock_tol <= 0:
            raise ValueError("lock_tol must be positive")
        if self.max_outer < 1 or self.stall_limit < 1:
            raise ValueError("max_outer and stall_limit must be positive")
        if self.selector not in ("largest", "target"):
            raise ValueError(f"selector must be 'largest' or 'target', got {self.selector!r}")
        if self.selector == "target" and self.target is None:
            raise ValueError("selector 'target' needs a target value")
        if self.residual not in ("absolute", "relative"):
            raise ValueError(f"residual must be 'absolute' or 'relative', got {self.residual!r}")
        return self


@dataclass(frozen=True)
class RitzInfo:
    theta: complex
    lam: complex
    residual: float
    cls: str


@dataclass
class OuterRecord:
    outer: int
    p_l: int
    gamma: float
    ritz: list
    degree: int
    columns: int
    coeff_count: int
    a1_norm: float
    wall_time: float
    p_l_before: int = 0
    locked: np.ndarray | None = None
    inner: list = field(default_factory=list)


@dataclass
class ConvergenceRecord:
    """Per-outer-iteration history plus the final status and pair."""

    entries: list = field(default_factory=list)
    status: str = "running"
    message: str = ""
    pair: InvariantPair | None = None

    @property
    def locked_counts(self):
        return [e.p_l for e in self.entries]

    def csv_rows(self):
        """Rows ``(outer_iter, inner_iter, ritz_index, residual, p_l, gamma)``.

        Inner-iteration rows are present when the run tracked them; the
        end-of-sweep Ritz residuals are always listed with ``inner_iter``
        equal to the final basis size.
        """
        rows = []
        prev_gamma = 0.0
        for e in self.entries:
            for k, residuals in e.inner:
                rows.extend((e.outer, k, i, r, e.p_l_before, prev_gamma) for i, r in enumerate(residuals))
            rows.extend((e.outer, e.columns - 1, i, info.residual, e.p_l, e.gamma) for i, info in enumerate(e.ritz))
            prev_gamma = e.gamma
        return rows


@dataclass(frozen=True)
class SchurPartition:
    """``[[Q^H, 0], [0, 1]] H Q`` split into locked, wanted and unwanted blocks."""

    q: np.ndarray
    t: np.ndarray
    a: np.ndarray
    sizes: tuple

    def _slices(self):
        l, w, _ = self.sizes
        return slice(0, l), slice(l, l + w), slice(l + w, self.t.shape[0])

    @property
    def q1(self):
        return self.q[:, self._slices()[0]]

    @property
    def q2(self):
        return self.q[:, self._slices()[1]]

    @property
    def q3(self):
        return self.q[:, self._slices()[2]]

    def block(self, i, j):
        s = self._slices()
        return self.t[s[i], s[j]]

    @property
    def r11(self):
        return self.block(0, 0)

    @property
    def r22(self):
        return self.block(1, 1)

    @property
    def r33(self):
        return self.block(2, 2)

    @property
    def a1(self):
        return self.a[self._slices()[0]]

    @property
    def a2(self):
        return self.a[self._slices()[1]]

    @property
    def a3(self):
        return self.a[self._slices()[2]]

    def bordered(self):
        """The ``(k+1) x k`` matrix ``[[T], [a^T]]``."""
        return np.vstack([self.t, self.a[None, :]])


def _selector_key(selector, target):
    if selector == "largest":
        return lambda theta: -abs(theta)
    return lambda theta: abs(1.0 / theta - target)


def _break_ties(order, infos, key, rtol=1e-8):
    """Among near-equal selector keys put ``Im(lam) >= 0`` first.

    Conjugate Ritz pairs of real problems tie under both selectors; a
    fixed preference keeps consecutive restarts chasing the same member.
    """
    order = list(order)
    i = 0
    while i < len(order):
        j = i + 1
        k0 = key(infos[order[i]].theta)
        while j < len(order) and abs(key(infos[order[j]].theta) - k0) <= rtol * max(abs(k0), 1.0):
            j += 1
        order[i:j] = sorted(order[i:j], key=lambda m: -infos[m].lam.imag)
        i = j
    return order


def _ritz_residual(problem, lam, v, kind):
    return problem.residual(lam, v, kind=kind)


def _trailing_schur(h, p_l):
    """Schur form of ``H_k`` that keeps the locked leading block as is."""
    k = h.shape[0]
    tail = dense.schur_decompose(h[p_l:, p_l:])
    q = np.eye(k, dtype=complex)
    q[p_l:, p_l:] = tail.q
    t = np.zeros((k, k), complex)
    t[:p_l, :p_l] = h[:p_l, :p_l]
    t[:p_l, p_l:] = h[:p_l, p_l:] @ tail.q
    t[p_l:, p_l:] = tail.t
    return dense.SchurForm(q, t)


def classify_ritz(problem, h, v_head, p_l, lock_tol, p, selector="largest", target=None, residual="absolute",
                  schur=None):
    """Classify the eigenvalues ``theta`` of ``H_k`` as locked, wanted or unwanted.

    The first ``p_l`` Ritz values are already locked and stay locked. Any
    other Ritz pair whose NEP residual at ``lam = 1 / theta`` is at most
    ``lock_tol`` is locked too. Of the rest, up to ``p - (#locked)`` are
    wanted in selector order and the remainder is unwanted; ``|theta|``
    below ``1e-12 ||H||`` is always unwanted.

    Returns ``(schur, infos)`` where ``infos[i]`` describes the Ritz value
    at diagonal position ``i`` of the Schur form of ``H_k``.
    """
    k = h.shape[1]
    hk = h[:k, :k]
    if schur is None:
        schur = _trailing_schur(hk, p_l)
    t = schur.t
    evecs = schur.q @ triangular_eigenvectors(t)
    ritz_vecs = v_head[:, :k] @ evecs
    small = ZERO_RITZ * max(np.linalg.norm(hk), np.finfo(float).tiny)
    infos = []
    for i in range(k):
        theta = t[i, i]
        if abs(theta) < small:
            infos.append(RitzInfo(theta, complex(np.inf), math.inf, UNWANT))
            continue
        lam = 1.0 / theta
        res = _ritz_residual(problem, lam, ritz_vecs[:, i], residual)
        cls = LOCK if i < p_l or res <= lock_tol else None
        infos.append(RitzInfo(theta, lam, res, cls))
    n_lock = sum(info.cls == LOCK for info in infos)
    key = _selector_key(selector, target)
    free = [i for i, info in enumerate(infos) if info.cls is None]
    free.sort(key=lambda i: key(infos[i].theta))
    free = _break_ties(free, infos, key)
    wanted = set(free[: max(p - n_lock, 0)])
    out = []
    for i, info in enumerate(infos):
        if info.cls is None:
            info = RitzInfo(info.theta, info.lam, info.residual, WANT if i in wanted else UNWANT)
        out.append(info)
    return schur, out


def schur_partition(h, classes, schur=None, p_l=0):
    """Ordered Schur factorization of ``H_k`` with the classes locked, wanted, unwanted.

    ``classes[i]`` refers to diagonal position ``i`` of ``schur`` (computed
    here from ``h`` when not given). Positions ``< p_l`` must be locked and
    are left untouched.
    """
    k = h.shape[1]
    hk = h[:k, :k]
    if schur is None:
        schur = _trailing_schur(hk, p_l)
    classes = list(classes)
    if len(classes) != k:
        raise ValueError(f"need {k} classes, got {len(classes)}")
    if any(c != LOCK for c in classes[:p_l]):
        raise ValueError("previously locked positions must stay locked")
    keep = np.array([c in (LOCK, WANT) for c in classes])
    lock = np.array([c == LOCK for c in classes])
    # move locked and wanted to the front, then locked ahead of wanted
    tail = dense.SchurForm(np.eye(k - p_l, dtype=complex), schur.t[p_l:, p_l:])
    tail = dense.reorder_schur(tail, keep[p_l:])
    order = np.concatenate([np.arange(p_l), p_l + _stable_order(keep[p_l:])])
    lock_now = lock[order][p_l:]
    tail = dense.reorder_schur(tail, lock_now)
    q = schur.q.copy()
    q[:, p_l:] = schur.q[:, p_l:] @ tail.q
    t = np.zeros((k, k), complex)
    t[:p_l, :p_l] = schur.t[:p_l, :p_l]
    t[:p_l, p_l:] = schur.t[:p_l, p_l:] @ tail.q
    t[p_l:, p_l:] = tail.t
    beta = h[k, k - 1] if h.shape[0] > k else 0.0
    a = beta * q[k - 1, :]
    n_lock = int(lock.sum())
    n_want = int(keep.sum()) - n_lock
    return SchurPartition(q, t, a, (n_lock, n_want, k - n_lock - n_want))


def _stable_order(select):
    sel = np.flatnonzero(select)
    rest = np.flatnonzero(~np.asarray(select))
    return np.concatenate([sel, rest])


def impose_structure(sp, v_head):
    """Exponential pair ``(Y_hat, S_hat)`` for the locked and wanted Ritz space.

    With ``[[R22], [a2^T]]`` reduced to ``[[H_hat], [beta e^T]]`` by
    ``P2``: ``Y_hat = V0 (Q1, Q2 P2)`` and
    ``S_hat = [[R11, R12 P2], [0, H_hat]]^{-1}``, formed blockwise.
    Also returns ``beta``.
    """
    n_lock, n_want, _ = sp.sizes
    r11 = sp.r11
    p2, hhat, beta = dense.householder_back_reduce(np.vstack([sp.r22, sp.a2[None, :]]))
    z = sp.block(0, 1) @ p2
    k = sp.t.shape[0]
    y_hat = v_head[:, :k] @ np.hstack([sp.q1, sp.q2 @ p2])
    p = n_lock + n_want
    s_hat = np.zeros((p, p), complex)
    tiny = ZERO_RITZ * max(np.linalg.norm(sp.t), np.finfo(float).tiny)
    if n_lock:
        if np.min(np.abs(np.diag(r11))) < tiny:
            raise SingularMatrixError("locked block has a zero Ritz value; re-classify it as unwanted")
        r11_inv = scipy.linalg.solve_triangular(r11, np.eye(n_lock))
        s_hat[:n_lock, :n_lock] = r11_inv
    if n_want:
        try:
            hhat_lu = dense.lu_factor(hhat)
        except SingularMatrixError:
            raise SingularMatrixError("wanted block is singular; a zero Ritz value leaked into the wanted set") from None
        hhat_inv = dense.lu_solve(hhat_lu, np.eye(n_want))
        s_hat[n_lock:, n_lock:] = hhat_inv
        if n_lock:
            s_hat[:n_lock, n_lock:] = -r11_inv @ z @ hhat_inv
    return y_hat, s_hat, beta


def gamma_indicator(problem, y, s_lock):
    """``|| M(0)^{-1} MM(Y, S) S^{-1} ||_2``; zero for an empty pair."""
    y = np.asarray(y, dtype=complex)
    s_lock = np.asarray(s_lock, dtype=complex)
    p_l = s_lock.shape[0]
    if p_l == 0:
        return 0.0
    s_inv = np.linalg.solve(s_lock, np.eye(p_l))
    cols = np.column_stack([problem.mm_apply(y, s_lock, s_inv[:, j]) for j in range(p_l)])
    return float(np.linalg.norm(problem.m0_solve(cols), 2))


def _orthonormalize_locked(y, s, p_l, ip_tol):
    """Re-orthonormalize the locked functions ``Y exp(theta S) e_j``, ``j < p_l``.

    Column-wise Gram-Schmidt gives ``Psi = Psi' T`` with ``T`` upper
    triangular, so ``Y <- Y diag(T^{-1}, I)`` and
    ``S <- diag(T, I) S diag(T^{-1}, I)``.
    """
    env = FunctionEnv(y, s, ip_tol)
    p = env.p
    basis = StructuredBasis(env, np.zeros((p, 0)))
    t = np.zeros((p_l, p_l), complex)
    for j in range(p_l):
        e = np.zeros(p)
        e[j] = 1.0
        perp, h, beta = gram_schmidt(StructuredFunction(env, e), basis)
        t[:j, j] = h
        t[j, j] = beta
        basis = basis.append(perp)
    d = np.eye(p, dtype=complex)
    d_inv = np.eye(p, dtype=complex)
    d[:p_l, :p_l] = t
    d_inv[:p_l, :p_l] = scipy.linalg.solve_triangular(t, np.eye(p_l))
    return y @ d_inv, d @ s @ d_inv


def _start_coefficients(y, s, p_l, ip_tol):
    """Orthonormalize ``Y exp(theta S) e_{p_l+1}`` against the locked functions."""
    env = FunctionEnv(y, s, ip_tol)
    p = env.p
    locked = StructuredBasis(env, np.eye(p)[:, :p_l])
    e = np.zeros(p)
    e[p_l] = 1.0
    perp, _, _ = gram_schmidt(StructuredFunction(env, e), locked)
    return perp.c


def _initial_pair(x0, lambda0, p):
    """``Y0 = (x0, 0, ...)``, ``S0 = diag(lambda0, 1, ...)`` with unit-norm start function.

    ``||x0 exp(lambda0 theta)||^2 = ||x0||^2 sum_i |lambda0|^(2i) / (i!)^2``.
    """
    x0 = np.asarray(x0, dtype=complex)
    if x0.ndim != 1 or not np.any(x0):
        raise ValueError("x0 must be a nonzero vector")
    lambda0 = complex(lambda0)
    if lambda0 == 0:
        raise ValueError("lambda0 must be nonzero (S must be invertible)")
    w0 = _w0(abs(lambda0))
    q = max(p, 1)
    y = np.zeros((x0.size, q), complex)
    y[:, 0] = x0 / (np.linalg.norm(x0) * math.sqrt(w0))
    s = np.eye(q, dtype=complex)
    s[0, 0] = lambda0
    c = np.zeros(q)
    c[0] = 1.0
    return y, s, c


def _w0(r):
    """``sum_i r^(2i) / (i!)^2`` summed until the terms stop mattering."""
    total, term, i = 1.0, 1.0, 0
    while term > EPS * total:
        i += 1
        term *= (r / i) ** 2
        total += term
    return total


def _final_pair(problem, y, s, p_l, kind, gamma):
    y1 = y[:, :p_l]
    lam = s[:p_l, :p_l]
    u = triangular_eigenvectors(lam) if p_l else np.zeros((0, 0))
    vecs = y1 @ u
    res = [problem.residual(lam[i, i], vecs[:, i], kind=kind) for i in range(p_l)]
    return InvariantPair(y=y1, lam=np.triu(lam), residual_gamma=gamma, per_eig_residuals=res)


def infarn_restart(problem, x0, lambda0, options=None, callback=None, **overrides):
    """Restarted infinite Arnoldi with locking.

    Runs until at least ``options.p`` Ritz values are locked, ``max_outer``
    sweeps are spent (status ``"max_outer"``) or the locked count stalls for
    ``stall_limit`` sweeps (status ``"stalled"``). ``callback(record)`` is
    called with each :class:`OuterRecord`.

    Returns ``(pair, record)``; ``pair.lam`` is upper triangular with the
    NEP eigenvalues on its diagonal.
    """
    opts = options or SolverOptions()
    if overrides:
        opts = SolverOptions(**{**opts.__dict__, **overrides})
    opts.validate()
    record = ConvergenceRecord()
    p = opts.p
    n = problem.n
    if p == 0:
        record.status = "converged"
        record.pair = InvariantPair(np.zeros((n, 0), complex), np.zeros((0, 0), complex))
        return record.pair, record

    y, s, c = _initial_pair(x0, lambda0, p)
    p_l = 0
    gamma = 0.0
    stall = 0
    for outer in range(1, opts.max_outer + 1):
        start = time.perf_counter()
        inner = []
        cb = None
        if opts.track_inner:
            def cb(k, h, basis, _inner=inner, _p_l=p_l):
                if k > _p_l:
                    _, infos = classify_ritz(problem, h, basis.v_block[0], _p_l, 0.0, 0, residual=opts.residual)
                    inner.append((k, [info.residual for info in infos[_p_l:]]))
        fact = infarn_exp(problem, y, s, c, p_l, opts.k_max, ip_tol=opts.ip_tol, callback=cb)
        schur, infos = classify_ritz(
            problem, fact.h, fact.v_head, p_l, opts.lock_tol, p,
            selector=opts.selector, target=opts.target, residual=opts.residual,
        )
        sp = schur_partition(fact.h, [info.cls for info in infos], schur=schur, p_l=p_l)
        order_infos = _reorder_infos(infos, p_l)
        n_lock, n_want, _ = sp.sizes
        if n_lock + n_want == 0:
            record.status = "breakdown"
            record.message = "no locked or wanted Ritz values left"
            break
        y_hat, s_hat, _ = impose_structure(sp, fact.v_head)
        y, s = _orthonormalize_locked(y_hat, s_hat, n_lock, opts.ip_tol)
        gamma = gamma_indicator(problem, y[:, :n_lock], s[:n_lock, :n_lock])
        stall = stall + 1 if n_lock == p_l else 0
        p_l_before, p_l = p_l, n_lock
        entry = OuterRecord(
            outer=outer,
            p_l=p_l,
            gamma=gamma,
            ritz=order_infos,
            degree=fact.degree,
            columns=fact.basis.k,
            coeff_count=fact.basis.k * (fact.env.p + fact.degree * n),
            a1_norm=float(np.linalg.norm(sp.a1)),
            wall_time=time.perf_counter() - start,
            inner=inner,
            p_l_before=p_l_before,
            locked=np.diag(s[:p_l, :p_l]).copy(),
        )
        record.entries.append(entry)
        if callback is not None:
            callback(entry)
        if p_l >= p:
            record.status = "converged"
            break
        if fact.breakdown and n_want == 0:
            record.status = "breakdown"
            record.message = f"invariant subspace found with {p_l} locked values"
            break
        if stall >= opts.stall_limit:
            record.status = "stalled"
            record.message = f"locked count stuck at {p_l} for {stall} sweeps"
            break
        if p_l >= y.shape[1]:
            record.status = "breakdown"
            record.message = "no room for a new start function"
            break
        c = _start_coefficients(y, s, p_l, opts.ip_tol)
    else:
        record.status = "max_outer"
        record.message = f"{p_l} of {p} values locked after {opts.max_outer} sweeps"
    record.pair = _final_pair(problem, y, s, p_l, opts.residual, gamma)
    return record.pair, record


def _reorder_infos(infos, p_l):
    """Ritz infos in partition order: locked, wanted, unwanted."""
    rank = {LOCK: 0, WANT: 1, UNWANT: 2}
    head = infos[:p_l]
    tail = sorted(infos[p_l:], key=lambda info: rank[info.cls])
    return head + tail
