import numpy as np
import pytest

from infarnoldi.arnoldi import arnoldi_relation_residual, infarn_exp
from infarnoldi.problems import delay_like, gun_like, hadeler_like, linear_problem
from infarnoldi.restart import _start_coefficients, infarn_restart
from infarnoldi.structured import StructuredFunction, apply_operator, inner_product

from conftest import exp_start


def test_single_step_by_hand():
    pr = delay_like(3)
    x0 = np.array([1.0, -0.5, 0.25])
    y, s, c = exp_start(x0, 0.4)
    fact = infarn_exp(pr, y, s, c, 0, 1)
    f = StructuredFunction(fact.env, c)
    bf = apply_operator(pr, f)
    h11 = inner_product(bf, f)
    rest = bf - f * h11
    assert np.isclose(fact.h[0, 0], h11, rtol=1e-13)
    assert np.isclose(fact.h[1, 0], rest.norm(), rtol=1e-12)
    assert arnoldi_relation_residual(pr, fact) <= 1e-13


@pytest.mark.parametrize("make,k", [(lambda: hadeler_like(8, -1), 20), (lambda: delay_like(5), 15), (lambda: gun_like(60), 12)])
def test_orthonormal_hessenberg_relation(make, k):
    pr = make()
    y, s, c = exp_start(np.random.default_rng(1).standard_normal(pr.n), 0.5)
    steps = []
    fact = infarn_exp(pr, y, s, c, 0, k, callback=lambda kk, h, basis: steps.append((kk, basis.degree)))
    assert fact.basis.k == k + 1
    assert np.linalg.norm(fact.basis.gram() - np.eye(k + 1)) <= 1e-10
    assert np.allclose(np.tril(fact.h, -2), 0)
    sub = np.diag(fact.h, -1)
    assert np.all(sub.real > 0) and np.allclose(sub.imag, 0)
    assert arnoldi_relation_residual(pr, fact) <= 1e-10
    # degree after step k equals k - p_l
    assert steps == [(kk, kk) for kk in range(1, k + 1)]


def test_locked_block_is_untouched():
    pr = hadeler_like(8, -1)
    x0 = np.random.default_rng(0).standard_normal(8)
    pair, rec = infarn_restart(pr, x0, 0.5, k_max=20, p=2)
    p_l = pair.size
    assert p_l >= 2
    # restart from the converged pair with a fresh direction
    y = np.hstack([pair.y, np.random.default_rng(5).standard_normal((8, 1))])
    s = np.eye(p_l + 1, dtype=complex)
    s[:p_l, :p_l] = pair.lam
    c = _start_coefficients(y, s, p_l, np.finfo(float).eps)
    fact = infarn_exp(pr, y, s, c, p_l, 10)
    r = np.linalg.inv(pair.lam)
    assert np.allclose(fact.h[:p_l, :p_l], r, rtol=0, atol=1e-13 * np.linalg.norm(r))
    assert np.allclose(fact.h[p_l:, :p_l], 0)
    assert np.linalg.norm(fact.basis.gram() - np.eye(11)) <= 1e-10
    assert fact.degree == 10 - p_l
    assert arnoldi_relation_residual(pr, fact) <= 1e-10


def test_rejects_non_orthonormal_input():
    pr = delay_like(5)
    y, s, c = exp_start(np.ones(5), 0.5)
    with pytest.raises(ValueError, match="orthonormal"):
        infarn_exp(pr, 2 * y, s, c, 0, 3)


def test_rejects_bad_sizes():
    pr = delay_like(5)
    y, s, c = exp_start(np.ones(5), 0.5)
    with pytest.raises(ValueError):
        infarn_exp(pr, y, s, c, 3, 3)
    with pytest.raises(ValueError):
        infarn_exp(pr, y, s, c, 1, 5)


def test_lucky_breakdown_on_eigenfunction():
    a = np.diag([2.0, 0.5, -1.0])
    pr = linear_problem(a)
    # x exp(lam theta) with M(lam) x = 0 is an eigenfunction of the operator
    y, s, c = exp_start(np.array([1.0, 0.0, 0.0]), 0.5)
    fact = infarn_exp(pr, y, s, c, 0, 5)
    assert fact.breakdown
    assert fact.k == 1
    assert np.isclose(fact.h[0, 0], 2.0)
    assert fact.h[1, 0] == 0
