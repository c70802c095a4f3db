"""Why functions are stored as (c, x) and not as exponential + polynomial.

After a few Arnoldi steps the polynomial part of a basis function is close
to minus the leading Taylor terms of Y exp(theta S) c. Adding the two
separately cancels almost every digit. Storing only the Taylor remainder
of the exponential keeps the value accurate.
"""

import math

import mpmath
import numpy as np

from infarnoldi import FunctionEnv, StructuredFunction
from infarnoldi.dense import matrix_exp
from infarnoldi.structured import evaluate

rng = np.random.default_rng(9)
n, p, degree = 4, 3, 10
y = rng.standard_normal((n, p)) + 1j * rng.standard_normal((n, p))
s = rng.standard_normal((p, p)) + 1j * rng.standard_normal((p, p))
s *= 0.5 / np.linalg.norm(s, 2)
c = rng.standard_normal(p) + 1j * rng.standard_normal(p)
env = FunctionEnv(y, s)

structured = evaluate(StructuredFunction(env, c, np.zeros((degree, n))), 1.0)
separated = y @ (matrix_exp(s) @ c) - sum(env.exp_block(i, c) for i in range(degree))

mpmath.mp.dps = 50
sm = mpmath.matrix(s.tolist())
head, term = mpmath.eye(p), mpmath.eye(p)
for i in range(1, degree):
    term = term * sm / i
    head += term
exact = mpmath.matrix(y.tolist()) * ((mpmath.expm(sm) - head) * mpmath.matrix(c.reshape(-1, 1).tolist()))
exact = np.array(exact.tolist(), dtype=complex).ravel()

for label, value in [("structured", structured), ("separated", separated)]:
    rel = np.linalg.norm(value - exact) / np.linalg.norm(exact)
    print(f"{label:10s} relative error {rel:.1e}  ({math.log10(max(rel, 2.2e-16) / 2.2e-16):.1f} digits lost)")
