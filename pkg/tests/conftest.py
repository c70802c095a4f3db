import math

import numpy as np
import pytest

from infarnoldi.structured import FunctionEnv, StructuredFunction

EPS = np.finfo(float).eps


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def exp_start(x0, lam0):
    """``(Y, S, c)`` for the unit-norm start function ``x0 exp(lam0 theta)``."""
    w0 = sum(abs(lam0) ** (2 * i) / math.factorial(i) ** 2 for i in range(80))
    y = np.asarray(x0, complex).reshape(-1, 1) / (np.linalg.norm(x0) * math.sqrt(w0))
    return y, np.array([[lam0]], complex), np.array([1.0 + 0j])


def random_function(rng, n, p=3, degree=2, s_norm=0.5, env=None):
    """Seeded structured function with ``||S|| = s_norm``."""
    if env is None:
        y = crandn(rng, n, p) / math.sqrt(n)
        s = crandn(rng, p, p)
        s *= s_norm / np.linalg.norm(s, 2)
        env = FunctionEnv(y, s)
    c = crandn(rng, env.p)
    x = crandn(rng, degree, env.n) if degree else None
    return StructuredFunction(env, c, x)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE = {}


def record_criterion(number, ok, detail):
    ACCEPTANCE[number] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
