"""Restarted infinite Arnoldi method for nonlinear eigenvalue problems.

The eigenvalue problem ``M(lam) v = 0`` with ``M(lam) = sum_j M_j f_j(lam)``
is solved by Arnoldi's method on an integration operator acting on
functions of the form ``Y exp(theta S) c + polynomial``, restarted
explicitly with locking of converged Ritz values.
"""

from .arnoldi import ArnoldiFactorization, arnoldi_relation_residual, infarn_exp
from .exceptions import BreakdownError, DomainError, SchurReorderError, SeriesConvergenceError, SingularMatrixError
from .nep import Exp, InvariantPair, NepProblem, Poly, SqrtShift, parse_function
from .oracle import OracleResult, match_eigenvalues, newton_refine, taylor_companion_eigs
from .problems import delay_like, gun_like, hadeler_like, linear_problem, load_manifest, make_problem
from .restart import (
    ConvergenceRecord,
    SchurPartition,
    SolverOptions,
    classify_ritz,
    gamma_indicator,
    impose_structure,
    infarn_restart,
    schur_partition,
)
from .structured import (
    FunctionEnv,
    StructuredBasis,
    StructuredFunction,
    apply_operator,
    choose_nmax,
    expand_degree,
    gram_schmidt,
    inner_product,
)

__version__ = "0.1.0"
