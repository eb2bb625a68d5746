"""Dense convex quadratic programming via a dual active-set method.

Solves problems of the form

    min  0.5 * x'Qx + c'x
    s.t. bl <= Wx <= bu          (rows with bl == bu are equalities)
         lb <=  x <= ub

with Q symmetric positive semidefinite.  The implementation follows the
Goldfarb-Idnani dual active-set scheme: start from the unconstrained
minimizer, repeatedly add the most violated constraint while keeping the
working set's dual variables nonnegative, dropping blocking constraints
as needed.  A small diagonal jitter makes the factorization safe for
rank-deficient Q; the jitter actually applied is reported in the
solution diagnostics.

The solver is deterministic: identical inputs produce identical outputs.
It holds no state, so distinct problems may be solved concurrently.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky, get_lapack_funcs, solve_triangular

from ._gi_core import STATUS_INFEASIBLE, STATUS_MAX_ITER, STATUS_OPTIMAL, _gi_core

__all__ = [
    "QpInputError",
    "QpProblem",
    "QpSolution",
    "QpStatus",
    "kkt_residual",
    "solve_qp",
]

# Diagonal jitter factor: rho * (trace(Q)/m + 1) is added to Q before
# factorization so that rank-deficient PSD matrices remain Cholesky-able.
JITTER_RHO = 1e-8


class QpInputError(ValueError):
    """Malformed problem data (dimension mismatch, inverted bounds...)."""


class QpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITERATIONS = "max_iterations"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class QpProblem:
    """Dense convex QP with two-sided linear constraints and box bounds.

    Rows of ``w`` whose bounds are both infinite are dropped at
    construction.  ``bl[i] == bu[i]`` encodes an equality row.  Infinite
    entries of the bound vectors act as "no bound" sentinels and never
    enter arithmetic.
    """

    q: np.ndarray
    c: np.ndarray
    w: np.ndarray | None = None
    bl: np.ndarray | None = None
    bu: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.q = np.asarray(self.q, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        if self.q.ndim != 2 or self.q.shape[0] != self.q.shape[1]:
            raise QpInputError("Q must be a square matrix")
        m = self.q.shape[0]
        if self.c.shape != (m,):
            raise QpInputError(f"c must have shape ({m},)")
        scale = np.max(np.abs(self.q)) if m else 0.0
        if scale > 0 and np.max(np.abs(self.q - self.q.T)) > 1e-10 * scale:
            raise QpInputError("Q is not symmetric within 1e-10 relative tolerance")

        if self.w is None:
            self.w = np.zeros((0, m))
        self.w = np.asarray(self.w, dtype=float).reshape(-1, m)
        k = self.w.shape[0]
        self.bl = np.full(k, -np.inf) if self.bl is None else np.asarray(self.bl, dtype=float)
        self.bu = np.full(k, np.inf) if self.bu is None else np.asarray(self.bu, dtype=float)
        if self.bl.shape != (k,) or self.bu.shape != (k,):
            raise QpInputError(f"bl/bu must have shape ({k},)")
        if np.any(self.bl > self.bu):
            raise QpInputError("bl must be <= bu elementwise")
        keep = np.isfinite(self.bl) | np.isfinite(self.bu)
        if not keep.all():
            self.w = self.w[keep]
            self.bl = self.bl[keep]
            self.bu = self.bu[keep]

        self.lb = np.full(m, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float)
        self.ub = np.full(m, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float)
        if self.lb.shape != (m,) or self.ub.shape != (m,):
            raise QpInputError(f"lb/ub must have shape ({m},)")
        if np.any(self.lb > self.ub):
            raise QpInputError("lb must be <= ub elementwise")

    @property
    def n_vars(self) -> int:
        return self.q.shape[0]

    @property
    def n_rows(self) -> int:
        return self.w.shape[0]


@dataclass
class QpSolution:
    x: np.ndarray
    lagrange_constraints: np.ndarray
    lagrange_bounds: np.ndarray
    objective: float
    status: QpStatus
    kkt_residual: float
    iterations: int = 0
    jitter: float = 0.0
    message: str = ""
    diagnostics: dict = field(default_factory=dict)


def kkt_residual(problem: QpProblem, candidate: QpSolution) -> float:
    """Max-norm KKT residual of ``candidate`` for ``problem``.

    Covers stationarity ``Qx + c - W'lam - mu``, primal feasibility of
    every finite bound, and complementary slackness.  Multiplier sign
    convention: ``lam[i] > 0`` means row i binds at its lower bound,
    ``lam[i] < 0`` at its upper bound (free sign on equality rows);
    same convention for the box multipliers ``mu``.
    """
    x = np.asarray(candidate.x, dtype=float)
    lam = np.asarray(candidate.lagrange_constraints, dtype=float)
    mu = np.asarray(candidate.lagrange_bounds, dtype=float)
    m = problem.n_vars
    if x.shape != (m,) or mu.shape != (m,) or lam.shape != (problem.n_rows,):
        raise QpInputError("candidate dimensions do not match problem")

    stat = problem.q @ x + problem.c - problem.w.T @ lam - mu
    res = float(np.max(np.abs(stat))) if m else 0.0

    wx = problem.w @ x
    for vals, lo, hi in ((wx, problem.bl, problem.bu), (x, problem.lb, problem.ub)):
        lo_fin = np.isfinite(lo)
        hi_fin = np.isfinite(hi)
        if lo_fin.any():
            res = max(res, float(np.max(lo[lo_fin] - vals[lo_fin])))
        if hi_fin.any():
            res = max(res, float(np.max(vals[hi_fin] - hi[hi_fin])))

    # Complementarity: the positive multiplier part pairs with the lower
    # slack, the negative part with the upper slack.  A nonzero part
    # pointing at an infinite bound is itself a violation.
    for mult, vals, lo, hi in ((lam, wx, problem.bl, problem.bu), (mu, x, problem.lb, problem.ub)):
        if mult.size == 0:
            continue
        eq = np.isfinite(lo) & np.isfinite(hi) & (lo == hi)
        pos = np.maximum(mult, 0.0)
        neg = np.maximum(-mult, 0.0)
        lo_ok = np.isfinite(lo)
        hi_ok = np.isfinite(hi)
        comp_lo = np.where(lo_ok, pos * np.where(lo_ok, np.abs(vals - lo), 0.0), pos)
        comp_hi = np.where(hi_ok, neg * np.where(hi_ok, np.abs(hi - vals), 0.0), neg)
        comp = np.where(eq, 0.0, np.maximum(comp_lo, comp_hi))
        res = max(res, float(np.max(comp)))
    return res


def solve_qp(problem: QpProblem, tol: float = 1e-8, max_iter: int | None = None) -> QpSolution:
    """Solve a dense convex QP; see the module docstring for the form.

    Returns status ``OPTIMAL`` with KKT multipliers when successful,
    ``INFEASIBLE`` when the constraints admit no solution, and
    ``MAX_ITERATIONS``/``NUMERICAL_FAILURE`` with partial diagnostics
    otherwise.  ``kkt_residual`` on the result is measured against the
    unjittered problem, so it may exceed ``tol`` by roughly
    ``jitter * |x|`` on rank-deficient problems.
    """
    m = problem.n_vars
    k = problem.n_rows
    if max_iter is None:
        max_iter = 50 * (m + k)

    trace = float(np.trace(problem.q)) if m else 0.0
    jitter = JITTER_RHO * (trace / max(m, 1) + 1.0)
    qj = problem.q + jitter * np.eye(m)

    def _fail(msg: str, iters: int = 0) -> QpSolution:
        x0 = np.zeros(m)
        return QpSolution(
            x=x0,
            lagrange_constraints=np.zeros(k),
            lagrange_bounds=np.zeros(m),
            objective=0.0,
            status=QpStatus.NUMERICAL_FAILURE,
            kkt_residual=np.inf,
            iterations=iters,
            jitter=jitter,
            message=msg,
        )

    try:
        low = cholesky(qj, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        return _fail("Cholesky factorization failed; Q not PSD even after jitter")

    x = cho_solve((low, True), -problem.c, check_finite=False)
    if not np.all(np.isfinite(x)):
        return _fail("non-finite unconstrained minimizer")

    (trtri,) = get_lapack_funcs(("trtri",), (low,))
    linv, info = trtri(low, lower=1)
    if info != 0:
        return _fail("triangular inverse failed")
    # J = L^{-T}, C order: the kernel streams its rows.
    j_mat = np.ascontiguousarray(linv.T)
    del low, linv

    is_eq_row = np.isfinite(problem.bl) & (problem.bl == problem.bu)

    status_code, iters, q, n_eq, active_arr, u_arr, r_buf = _gi_core(
        problem.c,
        np.ascontiguousarray(problem.w),
        problem.bl,
        problem.bu,
        problem.lb,
        problem.ub,
        is_eq_row,
        x,
        j_mat,
        tol,
        max_iter,
    )
    active = [int(a) for a in active_arr[:q]]
    u = u_arr[:q].copy()
    status = {
        STATUS_OPTIMAL: QpStatus.OPTIMAL,
        STATUS_INFEASIBLE: QpStatus.INFEASIBLE,
        STATUS_MAX_ITER: QpStatus.MAX_ITERATIONS,
    }[int(status_code)]
    message = "" if status is QpStatus.OPTIMAL else status.value

    # Polish away the jitter bias: step along the active-set tangent space
    # (spanned by the trailing columns of J, which annihilate the active
    # normals) until the true gradient is orthogonal to it, then recover
    # multipliers from the true gradient.  Active constraints stay exact.
    if status is QpStatus.OPTIMAL and m:
        for _ in range(2):
            grad = problem.q @ x + problem.c
            if q == m:
                break
            step = j_mat[:, q:] @ (j_mat[:, q:].T @ grad)
            x = x - step
            if float(np.max(np.abs(step))) <= 1e-16 * (1.0 + float(np.max(np.abs(x)))):
                break
        if q:
            grad = problem.q @ x + problem.c
            u = solve_triangular(
                r_buf[:q, :q], j_mat[:, :q].T @ grad, lower=False, check_finite=False
            )

    lam = np.zeros(k)
    mu = np.zeros(m)
    for pos, a_id in enumerate(active):
        val = float(u[pos])
        if a_id < 2 * k:
            row, side = divmod(a_id, 2)
            lam[row] += val if side == 0 else -val
        else:
            jvar, side = divmod(a_id - 2 * k, 2)
            mu[jvar] += val if side == 0 else -val

    objective = float(0.5 * x @ (problem.q @ x) + problem.c @ x)
    sol = QpSolution(
        x=x,
        lagrange_constraints=lam,
        lagrange_bounds=mu,
        objective=objective,
        status=status,
        kkt_residual=np.inf,
        iterations=iters,
        jitter=jitter,
        message=message,
        diagnostics={"active_set_size": len(active)},
    )
    if status is not QpStatus.NUMERICAL_FAILURE:
        sol.kkt_residual = kkt_residual(problem, sol)
    return sol
