"""Built-in benchmark problems and the JSON manifest loader.

The matrices are generated deterministically (seeded where random). They
share the scalar structure of the classical benchmarks but not their
spectra.
"""

import json
import os

import numpy as np
import scipy.io
import scipy.sparse

from .nep import Exp, NepProblem, Poly, SqrtShift, parse_function

__all__ = [
    "hadeler_like",
    "gun_like",
    "delay_like",
    "linear_problem",
    "load_manifest",
    "BUILTIN_PROBLEMS",
    "make_problem",
]

GUN_SIGMAS = (0.0, 108.8774)
GUN_MU = 250.0**2
GUN_GAMMA = 300.0**2 - 200.0**2


def hadeler_matrices(n=8, alpha=100.0):
    """``(A0, A1, A2)`` of the Hadeler-type problem.

    ``A2[j, k] = (n + 1 - max(j, k)) j k`` and ``A1 = n I + [1 / (j + k)]``
    (1-based indices) are symmetric positive definite, ``A0 = alpha I``.
    All three are divided by ``alpha`` so that ``M`` has entries of order
    one; this leaves the eigenvalues unchanged.
    """
    idx = np.arange(1, n + 1)
    jj, kk = np.meshgrid(idx, idx, indexing="ij")
    a2 = (n + 1 - np.maximum(jj, kk)) * jj * kk
    a1 = n * np.eye(n) + 1.0 / (jj + kk)
    a0 = alpha * np.eye(n)
    return a0 / alpha, a1 / alpha, a2 / alpha


def hadeler_like(n=8, mu=-1.0):
    """``M(lam) = -A0 + (lam + mu)^2 A1 + (exp(lam + mu) - 1) A2``."""
    if n < 2:
        raise ValueError("n must be at least 2")
    a0, a1, a2 = hadeler_matrices(n)
    mu = complex(mu)
    terms = [
        (-a0 - a2, Poly(1.0)),
        (a1, Poly(mu**2, 2 * mu, 1.0)),
        (a2, Exp(mu, 1.0)),
    ]
    return NepProblem(terms, name=f"hadeler(n={n}, mu={mu:g})")


def gun_matrices(n=200, seed=0):
    """Sparse stand-ins for the four matrices of the gun problem.

    ``A0`` is a perturbed 1D stiffness matrix with spectrum in roughly
    ``[0, 2e5]``, ``A1`` a diagonal mass matrix near the identity and
    ``A2``, ``A3`` are diagonal boundary couplings supported on a few
    degrees of freedom.
    """
    rng = np.random.default_rng(seed)
    main = 2.0 + 0.1 * rng.uniform(-1, 1, n)
    a0 = 5.0e4 * scipy.sparse.diags([-np.ones(n - 1), main, -np.ones(n - 1)], [-1, 0, 1])
    a1 = scipy.sparse.diags(1.0 + 0.2 * rng.uniform(0, 1, n))
    ports = []
    for _ in range(2):
        support = rng.choice(n, size=max(2, n // 20), replace=False)
        vals = np.zeros(n)
        vals[support] = rng.uniform(1.0, 5.0, support.size)
        ports.append(scipy.sparse.diags(vals))
    return a0.tocsc(), a1.tocsc(), ports[0].tocsc(), ports[1].tocsc()


def gun_like(n=200, mu=GUN_MU, gamma=GUN_GAMMA, seed=0):
    """Square-root problem with shift ``mu`` and scaling ``gamma`` folded in.

    ``M(lam) = A0 - (gamma lam + mu) A1
    + i sqrt(gamma lam + mu - s1^2) A2 + i sqrt(gamma lam + mu - s2^2) A3``
    with ``s1 = 0`` and ``s2 = 108.8774``.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    a0, a1, a2, a3 = gun_matrices(n, seed)
    s1, s2 = GUN_SIGMAS
    terms = [
        (a0, Poly(1.0)),
        (a1, Poly(-mu, -gamma)),
        (1j * a2, SqrtShift(gamma, mu, s1)),
        (1j * a3, SqrtShift(gamma, mu, s2)),
    ]
    return NepProblem(terms, name=f"gun(n={n}, seed={seed})")


def delay_matrices(n=5, seed=0):
    rng = np.random.default_rng(seed)
    a0 = rng.standard_normal((n, n)) / np.sqrt(n)
    a1 = 0.5 * rng.standard_normal((n, n)) / np.sqrt(n)
    return a0, a1


def delay_like(n=5, tau=1.0, seed=0):
    """``M(lam) = -lam I + A0 + A1 exp(-tau lam)`` with Gaussian ``A0``, ``A1``.

    Draws that make ``M(0) = A0 + A1`` singular are replaced by the next
    seed's draw.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    draw = seed
    while True:
        a0, a1 = delay_matrices(n, draw)
        if np.linalg.cond(a0 + a1) < 1e10:
            break
        draw += 1_000_003
    terms = [
        (np.eye(n), Poly(0.0, -1.0)),
        (a0, Poly(1.0)),
        (a1, Exp(0.0, -tau)),
    ]
    return NepProblem(terms, name=f"delay(n={n}, tau={tau:g}, seed={seed})")


def linear_problem(a):
    """``M(lam) = I - lam A``; its eigenvalues are the reciprocals of eig(A)."""
    a = np.asarray(a)
    n = a.shape[0]
    return NepProblem([(np.eye(n), Poly(1.0)), (a, Poly(0.0, -1.0))], name=f"linear(n={n})")


def load_manifest(path):
    """Load a problem from a JSON manifest.

    Format: ``{"n": 4, "terms": [{"matrix": "A.mtx", "fun": "exp(0,1)"}, ...]}``.
    Matrix paths are relative to the manifest's directory.
    """
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict) or "terms" not in data:
        raise ValueError(f"{path}: manifest must be an object with a 'terms' list")
    base = os.path.dirname(os.path.abspath(path))
    terms = []
    for k, term in enumerate(data["terms"]):
        try:
            mpath, fun = term["matrix"], term["fun"]
        except (KeyError, TypeError):
            raise ValueError(f"{path}: term {k} needs 'matrix' and 'fun'") from None
        mat = scipy.io.mmread(os.path.join(base, mpath))
        if scipy.sparse.issparse(mat):
            mat = mat.tocsc()
        terms.append((mat, parse_function(fun)))
    problem = NepProblem(terms, name=data.get("name", os.path.basename(path)))
    if "n" in data and int(data["n"]) != problem.n:
        raise ValueError(f"{path}: manifest says n={data['n']} but matrices are {problem.n}x{problem.n}")
    return problem


BUILTIN_PROBLEMS = {
    "hadeler": (hadeler_like, {"n": 8, "mu": -1.0}),
    "gun": (gun_like, {"n": 200, "mu": GUN_MU, "gamma": GUN_GAMMA, "seed": 0}),
    "delay": (delay_like, {"n": 5, "tau": 1.0, "seed": 0}),
}


def make_problem(name, **params):
    """Build a built-in problem, ignoring parameters it does not take."""
    try:
        factory, defaults = BUILTIN_PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(BUILTIN_PROBLEMS)}") from None
    kwargs = dict(defaults)
    kwargs.update({k: v for k, v in params.items() if k in defaults and v is not None})
    return factory(**kwargs)
