"""Command-line driver: ``solve``, ``verify`` and ``list-problems``."""

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from .exceptions import SingularMatrixError
from .oracle import match_eigenvalues, newton_refine, taylor_companion_eigs
from .problems import BUILTIN_PROBLEMS, load_manifest, make_problem
from .restart import SolverOptions, infarn_restart

SEED_ENV = "INFARN_SEED"
MATCH_TOL = 1e-8
ORACLE_MAX_SIZE = 3000

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED, EXIT_MISMATCH = 0, 1, 2, 3

# solver defaults per built-in problem; flags override them
PROBLEM_DEFAULTS = {
    "hadeler": {"k_max": 20, "p": 10, "residual": "absolute"},
    "delay": {"k_max": 12, "p": 4, "residual": "absolute"},
    "gun": {"k_max": 30, "p": 8, "residual": "relative"},
}
GENERIC_DEFAULTS = {"k_max": 20, "p": 5, "residual": "absolute"}


@dataclass(frozen=True)
class RunConfig:
    problem: str | None
    manifest: str | None
    params: dict
    seed: int
    lambda0: complex
    options: SolverOptions
    out: str
    verify: bool
    radius: float | None
    degree: int


class ConfigError(ValueError):
    pass


def _resolve_seed(flag):
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"{SEED_ENV}={env!r} is not an integer") from None


def build_config(args):
    """Validate parsed arguments into a :class:`RunConfig`."""
    if (args.problem is None) == (args.manifest is None):
        raise ConfigError("give exactly one of --problem NAME or --manifest PATH")
    if args.problem is not None and args.problem not in BUILTIN_PROBLEMS:
        raise ConfigError(f"unknown problem {args.problem!r}; run 'list-problems' to see the choices")
    if args.manifest is not None and not os.path.isfile(args.manifest):
        raise ConfigError(f"manifest {args.manifest!r} does not exist")
    if args.n is not None and args.n < 2:
        raise ConfigError("--n must be at least 2")
    defaults = PROBLEM_DEFAULTS.get(args.problem, GENERIC_DEFAULTS)
    seed = _resolve_seed(args.seed)
    options = SolverOptions(
        k_max=args.kmax if args.kmax is not None else defaults["k_max"],
        p=args.p if args.p is not None else defaults["p"],
        lock_tol=args.lock_tol if args.lock_tol is not None else SolverOptions.lock_tol,
        max_outer=args.max_outer,
        stall_limit=args.stall_limit,
        selector="target" if args.target is not None and args.selector is None else (args.selector or "largest"),
        target=args.target,
        residual=args.residual or defaults["residual"],
        track_inner=not args.no_inner,
    )
    try:
        options.validate()
    except ValueError as err:
        raise ConfigError(str(err)) from None
    if args.lambda0 == 0:
        raise ConfigError("--lambda0 must be nonzero")
    if args.radius is not None and args.radius <= 0:
        raise ConfigError("--radius must be positive")
    if args.degree < 2:
        raise ConfigError("--degree must be at least 2")
    params = {"n": args.n, "mu": args.mu, "gamma": args.gamma, "tau": args.tau, "seed": seed}
    return RunConfig(
        problem=args.problem,
        manifest=args.manifest,
        params=params,
        seed=seed,
        lambda0=args.lambda0,
        options=options,
        out=args.out,
        verify=getattr(args, "verify", False),
        radius=args.radius,
        degree=args.degree,
    )


def load_problem(config):
    if config.manifest is not None:
        return load_manifest(config.manifest)
    return make_problem(config.problem, **config.params)


def _start_vector(n, seed):
    return np.random.default_rng(seed).standard_normal(n)


def write_eigenvalues(path, pair):
    rows = [
        {"lambda_re": float(lam.real), "lambda_im": float(lam.imag), "residual": float(res)}
        for lam, res in zip(pair.eigenvalues, pair.per_eig_residuals)
    ]
    with open(path, "w") as fh:
        json.dump(rows, fh, indent=2)
        fh.write("\n")


def write_convergence(path, record):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["outer_iter", "inner_iter", "ritz_index", "residual", "p_l", "gamma"])
        for row in record.csv_rows():
            writer.writerow([row[0], row[1], row[2], repr(float(row[3])), row[4], repr(float(row[5]))])


def _check_oracle_size(problem, config):
    width = problem.n * (config.degree + 4)
    if width > ORACLE_MAX_SIZE:
        raise ConfigError(
            f"oracle companion matrix would be {width} wide "
            f"(limit {ORACLE_MAX_SIZE}); lower --degree or use a smaller --n"
        )


def _oracle_radius(problem, config, solved):
    if config.radius is not None:
        return config.radius
    finite = [f.radius for f in problem.functions if np.isfinite(f.radius)]
    cap = 0.95 * min(finite) if finite else np.inf
    reach = 1.05 * max(np.abs(solved)) if len(solved) else 1.0
    return float(min(max(reach, 1e-3), cap))


def compare_with_oracle(problem, eigenvalues, config, out=None):
    """Match solver eigenvalues inside the trust radius against the oracle.

    Returns ``(ok, max_mismatch, radius)``.
    """
    out = out or sys.stdout
    _check_oracle_size(problem, config)
    radius = _oracle_radius(problem, config, eigenvalues)
    oracle = taylor_companion_eigs(problem, degree=config.degree, radius=radius)
    inside = np.array([lam for lam in eigenvalues if abs(lam) <= radius], dtype=complex)
    print(f"oracle: {oracle.eigenvalues.size} eigenvalues with |lambda| <= {radius:.4g}", file=out)
    pairs, worst = match_eigenvalues(inside, oracle.eigenvalues)
    ok = len(pairs) == inside.size and worst <= MATCH_TOL
    for i, j in pairs:
        d = abs(inside[i] - oracle.eigenvalues[j])
        print(f"  {_fmt(inside[i])}  oracle {_fmt(oracle.eigenvalues[j])}  |diff| {d:.2e}", file=out)
    skipped = len(eigenvalues) - inside.size
    if skipped:
        print(f"  {skipped} solver eigenvalue(s) outside the trust radius were not checked", file=out)
    print(f"max mismatch {worst:.3e} ({'ok' if ok else 'FAIL'}, tolerance {MATCH_TOL:g})", file=out)
    return ok, worst, radius


def _fmt(z):
    return f"{z.real:+.12f}{z.imag:+.12f}j"


def run_solve(config, out=None):
    out = out or sys.stdout
    problem = load_problem(config)
    x0 = _start_vector(problem.n, config.seed)
    pair, record = infarn_restart(problem, x0, config.lambda0, config.options)
    os.makedirs(config.out, exist_ok=True)
    write_eigenvalues(os.path.join(config.out, "eigenvalues.json"), pair)
    write_convergence(os.path.join(config.out, "convergence.csv"), record)
    print(f"problem {problem.name}: n={problem.n}", file=out)
    print(
        f"status {record.status} after {len(record.entries)} outer iterations; "
        f"{pair.size} locked (p={config.options.p}), gamma {pair.residual_gamma:.2e}",
        file=out,
    )
    if record.message:
        print(f"  {record.message}", file=out)
    for lam, res in zip(pair.eigenvalues, pair.per_eig_residuals):
        print(f"  {_fmt(lam)}  residual {res:.2e}", file=out)
    print(f"wrote {config.out}/eigenvalues.json and {config.out}/convergence.csv", file=out)
    status = EXIT_OK if record.status == "converged" else EXIT_NOT_CONVERGED
    if config.verify:
        ok, _, _ = compare_with_oracle(problem, pair.eigenvalues, config, out)
        if not ok and status == EXIT_OK:
            status = EXIT_MISMATCH
    return status


def run_verify(config, out=None):
    """Solve, compare with the oracle and polish each pair with Newton's method."""
    out = out or sys.stdout
    problem = load_problem(config)
    _check_oracle_size(problem, config)
    x0 = _start_vector(problem.n, config.seed)
    pair, record = infarn_restart(problem, x0, config.lambda0, config.options)
    print(f"problem {problem.name}: solver status {record.status}, {pair.size} locked", file=out)
    ok, _, _ = compare_with_oracle(problem, pair.eigenvalues, config, out)
    for lam, v in zip(pair.eigenvalues, pair.eigenvectors().T):
        lam_n, _, res, conv = newton_refine(problem, lam, v)
        print(f"  newton {_fmt(lam)} -> shift {abs(lam_n - lam):.2e}, residual {res:.2e}", file=out)
    if record.status != "converged":
        return EXIT_NOT_CONVERGED
    return EXIT_OK if ok else EXIT_MISMATCH


def run_list(out=None):
    out = out or sys.stdout
    for name, (factory, defaults) in BUILTIN_PROBLEMS.items():
        doc = (factory.__doc__ or "").strip().splitlines()[0]
        params = ", ".join(f"{k}={v:g}" if isinstance(v, (int, float)) else f"{k}={v}" for k, v in defaults.items())
        solver = PROBLEM_DEFAULTS.get(name, GENERIC_DEFAULTS)
        print(f"{name:8s} {doc}", file=out)
        print(f"{'':8s} defaults: {params}; kmax={solver['k_max']}, p={solver['p']}, residual={solver['residual']}",
              file=out)
    return EXIT_OK


def _add_run_args(parser):
    src = parser.add_argument_group("problem")
    src.add_argument("--problem", help="built-in problem name (see list-problems)")
    src.add_argument("--manifest", help="JSON manifest of Matrix Market terms")
    src.add_argument("--n", type=int, help="problem size")
    src.add_argument("--mu", type=complex, help="shift (hadeler, gun)")
    src.add_argument("--gamma", type=float, help="scaling (gun)")
    src.add_argument("--tau", type=float, help="delay (delay)")
    src.add_argument("--seed", type=int, help=f"RNG seed for matrices and start vector (env {SEED_ENV}; default 0)")
    sol = parser.add_argument_group("solver")
    sol.add_argument("--kmax", type=int, help="maximum basis size per sweep")
    sol.add_argument("--p", type=int, help="number of wanted eigenvalues")
    sol.add_argument("--lock-tol", type=float, help="locking tolerance (default 1000 eps)")
    sol.add_argument("--residual", choices=["absolute", "relative"], help="residual used for locking")
    sol.add_argument("--max-outer", type=int, default=50, help="maximum number of restarts")
    sol.add_argument("--stall-limit", type=int, default=10, help="stop after this many restarts without new locks")
    sol.add_argument("--selector", choices=["largest", "target"], help="wanted-value selector")
    sol.add_argument("--target", type=complex, help="target for the 'target' selector")
    sol.add_argument("--lambda0", type=complex, default=0.5, help="exponent of the start function")
    sol.add_argument("--no-inner", action="store_true", help="skip inner-iteration Ritz residuals in the CSV")
    ver = parser.add_argument_group("oracle")
    ver.add_argument("--radius", type=float, help="oracle trust radius (default from the solved eigenvalues)")
    ver.add_argument("--degree", type=int, default=30, help="companion truncation degree")


def make_parser():
    parser = argparse.ArgumentParser(prog="infarnoldi", description="Restarted infinite Arnoldi for NEPs.")
    sub = parser.add_subparsers(dest="command", required=True)
    solve = sub.add_parser("solve", help="compute eigenvalues and write JSON/CSV output")
    _add_run_args(solve)
    solve.add_argument("--verify", action="store_true", help="also compare with the companion oracle")
    solve.add_argument("--out", default=".", help="output directory (default: current)")
    verify = sub.add_parser("verify", help="solve and compare with the companion oracle")
    _add_run_args(verify)
    verify.set_defaults(out=".", verify=True)
    sub.add_parser("list-problems", help="list built-in problems")
    return parser


def main(argv=None, out=None, err=None):
    out = out or sys.stdout
    err = err or sys.stderr
    parser = make_parser()
    args = parser.parse_args(argv)
    if args.command == "list-problems":
        return run_list(out)
    try:
        config = build_config(args)
        if args.command == "solve":
            return run_solve(config, out)
        return run_verify(config, out)
    except (ConfigError, SingularMatrixError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=err)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
