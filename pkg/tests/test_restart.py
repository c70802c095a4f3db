import math

import numpy as np
import pytest

from infarnoldi.arnoldi import infarn_exp
from infarnoldi.exceptions import SingularMatrixError
from infarnoldi.nep import NepProblem, Poly
from infarnoldi.oracle import match_eigenvalues, taylor_companion_eigs
from infarnoldi.problems import delay_like, hadeler_like, linear_problem
from infarnoldi.restart import (
    LOCK,
    UNWANT,
    WANT,
    SolverOptions,
    _start_coefficients,
    classify_ritz,
    gamma_indicator,
    impose_structure,
    infarn_restart,
    schur_partition,
)
from infarnoldi.structured import FunctionEnv, StructuredBasis, StructuredFunction, inner_product

from conftest import EPS, crandn, exp_start


def _sweep(pr, k=10, seed=1):
    y, s, c = exp_start(np.random.default_rng(seed).standard_normal(pr.n), 0.5)
    return infarn_exp(pr, y, s, c, 0, k)


def test_classify_all_unconverged():
    pr = hadeler_like(8, -1)
    fact = _sweep(pr, k=4)
    _, infos = classify_ritz(pr, fact.h, fact.v_head, 0, 1e-30, 3)
    classes = [i.cls for i in infos]
    assert classes.count(LOCK) == 0
    assert classes.count(WANT) == 3
    wanted = sorted((abs(i.theta) for i in infos if i.cls == WANT), reverse=True)
    assert wanted == sorted((abs(i.theta) for i in infos), reverse=True)[:3]


def test_classify_target_selector():
    pr = hadeler_like(8, -1)
    fact = _sweep(pr, k=8)
    tau = -2.5
    _, infos = classify_ritz(pr, fact.h, fact.v_head, 0, 1e-30, 2, selector="target", target=tau)
    wanted = [i.lam for i in infos if i.cls == WANT]
    rest = [i.lam for i in infos if i.cls == UNWANT]
    assert max(abs(w - tau) for w in wanted) <= min(abs(r - tau) for r in rest)


def test_classify_locks_planted_pair():
    # an exact eigenfunction as start vector: the single Ritz pair is exact
    a = np.diag([2.0, 0.5, -1.0])
    pr = linear_problem(a)
    y, s, c = exp_start(np.array([1.0, 0.0, 0.0]), 0.5)
    fact = infarn_exp(pr, y, s, c, 0, 3)
    _, infos = classify_ritz(pr, fact.h, fact.v_head, 0, 1e-12, 1)
    assert infos[0].cls == LOCK
    assert np.isclose(infos[0].lam, 0.5)


def test_schur_partition_identity_on_ordered_input(rng):
    t = np.triu(crandn(rng, 3, 3))
    h = np.vstack([t, [[0, 0, 0.7]]])
    sp = schur_partition(h, [LOCK, WANT, UNWANT], schur=None)
    assert sp.sizes == (1, 1, 1)
    assert np.allclose(np.abs(sp.q), np.eye(3))
    assert np.allclose(np.diag(sp.t), np.diag(t))


def test_schur_partition_reconstruction(rng):
    k = 12
    h = np.triu(crandn(rng, k + 1, k), -1)
    h[k, k - 1] = abs(h[k, k - 1])
    classes = [LOCK, UNWANT, WANT, UNWANT, LOCK, WANT, WANT, UNWANT, UNWANT, WANT, UNWANT, UNWANT]
    sp = schur_partition(h, classes)
    big = np.zeros((k + 1, k + 1), complex)
    big[:k, :k] = sp.q.conj().T
    big[k, k] = 1
    assert np.allclose(big @ h @ sp.q, sp.bordered(), atol=1e-12 * np.linalg.norm(h))
    assert sp.sizes == (2, 4, 6)
    ev = np.linalg.eigvals(h[:k])
    assert np.allclose(np.sort_complex(np.diag(sp.t)), np.sort_complex(ev), atol=1e-10)
    assert sp.r11.shape == (2, 2) and sp.r22.shape == (4, 4) and sp.r33.shape == (6, 6)


def test_schur_partition_keeps_previous_locks(rng):
    k = 6
    h = np.triu(crandn(rng, k + 1, k), -1)
    h[1:, 0] = 0
    h[2:, 1] = 0
    h[1, 0] = 0
    with pytest.raises(ValueError):
        schur_partition(h, [WANT] * k, p_l=2)
    sp = schur_partition(h, [LOCK, LOCK, WANT, UNWANT, UNWANT, WANT], p_l=2)
    assert np.array_equal(sp.t[:2, :2], h[:2, :2])


def _partition_case(rng, n_lock, n_want, k=7):
    h = np.triu(crandn(rng, k + 1, k), -1)
    classes = [LOCK] * n_lock + [WANT] * n_want + [UNWANT] * (k - n_lock - n_want)
    sp = schur_partition(h, classes)
    v_head = crandn(rng, 4, k + 1)
    return sp, v_head


def test_impose_structure_multiply_back(rng):
    sp, v_head = _partition_case(rng, 1, 1)
    y_hat, s_hat, beta = impose_structure(sp, v_head)
    from infarnoldi.dense import householder_back_reduce

    p2, hhat, _ = householder_back_reduce(np.vstack([sp.r22, sp.a2[None, :]]))
    block = np.block([[sp.r11, sp.block(0, 1) @ p2], [np.zeros((1, 1)), hhat]])
    assert np.allclose(s_hat @ block, np.eye(2), atol=1e-12)
    assert np.allclose(s_hat[:1, :1], np.linalg.inv(sp.r11), atol=1e-12)
    assert np.allclose(y_hat[:, 0], v_head[:, :7] @ sp.q1[:, 0])


def test_impose_structure_all_locked(rng):
    sp, v_head = _partition_case(rng, 3, 0)
    y_hat, s_hat, _ = impose_structure(sp, v_head)
    assert np.allclose(s_hat, np.linalg.inv(sp.r11), atol=1e-12)
    assert np.allclose(y_hat, v_head[:, :7] @ sp.q1)
    assert np.allclose(s_hat, np.triu(s_hat), atol=1e-14)


def test_impose_structure_block_triangular(rng):
    sp, v_head = _partition_case(rng, 2, 3)
    _, s_hat, _ = impose_structure(sp, v_head)
    assert np.allclose(s_hat[2:, :2], 0)
    assert np.allclose(s_hat[:2, :2], np.linalg.inv(sp.r11), atol=1e-12)


def test_impose_structure_singular_wanted_block():
    h = np.zeros((4, 3), complex)
    h[0, 0], h[1, 1] = 1.0, 2.0
    sp = schur_partition(h, [LOCK, WANT, WANT])
    with pytest.raises(SingularMatrixError):
        impose_structure(sp, np.ones((2, 4)))


def test_gamma_for_exact_linear_pair(rng):
    a = rng.standard_normal((6, 6))
    pr = linear_problem(a)
    t, z = __import__("scipy.linalg").linalg.schur(a.astype(complex), output="complex")
    # (Z[:, :2], T11^{-1}) is an exact invariant pair of I - lam A
    lam = np.linalg.inv(t[:2, :2])
    assert gamma_indicator(pr, z[:, :2], lam) <= 1e-12
    assert gamma_indicator(pr, np.zeros((6, 0)), np.zeros((0, 0))) == 0.0


def test_options_validation():
    with pytest.raises(ValueError):
        SolverOptions(p=20, k_max=20).validate()
    with pytest.raises(ValueError):
        SolverOptions(selector="target").validate()
    with pytest.raises(ValueError):
        SolverOptions(residual="weird").validate()


def test_p_zero_returns_empty_pair():
    pair, rec = infarn_restart(delay_like(5), np.ones(5), 0.5, p=0, k_max=5)
    assert pair.size == 0 and rec.status == "converged" and rec.entries == []


def test_delay_example_matches_oracle():
    pr = delay_like(5)
    x0 = np.random.default_rng(0).standard_normal(5)
    pair, rec = infarn_restart(pr, x0, 0.5, k_max=12, p=4)
    assert rec.status == "converged"
    assert pair.size == 4
    for lam, v in zip(pair.eigenvalues, pair.eigenvectors().T):
        assert pr.residual(lam, v, kind="absolute") <= 1e-10
    oracle = taylor_companion_eigs(pr, degree=30, radius=1.0)
    pairs, worst = match_eigenvalues(pair.eigenvalues, oracle.eigenvalues)
    assert len(pairs) == 4 and worst <= 1e-8


def test_hadeler_example_and_invariants():
    pr = hadeler_like(8, -1)
    x0 = np.random.default_rng(0).standard_normal(8)
    seen = []
    pair, rec = infarn_restart(pr, x0, 0.5, k_max=20, p=10, callback=seen.append)
    assert rec.status == "converged"
    assert pair.size >= 10
    assert len(rec.entries) <= 10
    assert seen == rec.entries
    counts = rec.locked_counts
    assert counts == sorted(counts)
    for prev, cur in zip(rec.entries, rec.entries[1:]):
        for lam in prev.locked:
            assert np.min(np.abs(cur.locked - lam)) <= 1e-12 * max(1, abs(lam))
    for e in rec.entries:
        assert e.columns <= 21 and e.degree <= 20 - e.p_l_before
        if e.p_l:
            assert e.gamma <= 10 * 1000 * EPS


def test_start_function_is_orthogonal_to_locked():
    pr = hadeler_like(8, -1)
    x0 = np.random.default_rng(0).standard_normal(8)
    pair, rec = infarn_restart(pr, x0, 0.5, k_max=20, p=3)
    p_l = pair.size
    y = np.hstack([pair.y, np.random.default_rng(2).standard_normal((8, 2))])
    s = np.eye(p_l + 2, dtype=complex)
    s[:p_l, :p_l] = pair.lam
    c = _start_coefficients(y, s, p_l, EPS)
    env = FunctionEnv(y, s)
    f = StructuredFunction(env, c)
    for j in range(p_l):
        e = np.zeros(p_l + 2)
        e[j] = 1
        assert abs(inner_product(f, StructuredFunction(env, e))) <= 1e-10
    assert np.isclose(f.norm(), 1.0)


def test_max_outer_and_stall_statuses():
    pr = hadeler_like(8, -1)
    x0 = np.random.default_rng(0).standard_normal(8)
    _, rec = infarn_restart(pr, x0, 0.5, k_max=20, p=10, max_outer=2)
    assert rec.status == "max_outer" and len(rec.entries) == 2
    assert rec.pair.size == rec.entries[-1].p_l
    _, rec = infarn_restart(pr, x0, 0.5, k_max=6, p=3, lock_tol=1e-300, stall_limit=2)
    assert rec.status == "stalled" and "stuck" in rec.message


def test_csv_rows_with_inner_tracking():
    pr = delay_like(5)
    x0 = np.random.default_rng(0).standard_normal(5)
    _, rec = infarn_restart(pr, x0, 0.5, k_max=8, p=2, track_inner=True)
    rows = rec.csv_rows()
    assert rows and all(len(r) == 6 for r in rows)
    outers = [r[0] for r in rows]
    assert outers == sorted(outers)
    assert any(r[1] < 7 for r in rows)


def test_input_validation():
    pr = delay_like(5)
    with pytest.raises(ValueError):
        infarn_restart(pr, np.zeros(5), 0.5, p=2, k_max=6)
    with pytest.raises(ValueError):
        infarn_restart(pr, np.ones(5), 0.0, p=2, k_max=6)
