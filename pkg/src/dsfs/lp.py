"""Dense linear programming front end.

Problems are stated as::

    minimize    c . x
    subject to  A_ub x <= b_ub
                A_eq x == b_eq
                lb <= x <= ub

Infinite bounds use ``numpy.inf`` as an explicit sentinel. Two backends
share one contract: ``"highs"`` (HiGHS dual simplex, the default, fast) and
``"simplex"`` (a self-contained dense two-phase simplex with a Bland's-rule
fallback). Every optimal answer is re-checked against the original
constraints before it is returned.
"""

import enum
from dataclasses import dataclass, field

import highspy
import numpy as np
from scipy import sparse

from . import _simplex
from .exceptions import DimensionMismatch, NumericalFailure

INF = np.inf


@dataclass(frozen=True)
class SolverTolerances:
    feas_tol: float = 1e-7
    pivot_tol: float = 1e-9
    opt_tol: float = 1e-8


DEFAULT_TOLERANCES = SolverTolerances()


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


def _as_matrix(a, n):
    if a is None:
        return np.zeros((0, n))
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        return np.zeros((0, n))
    return a


def _as_vector(v, size, name):
    if v is None:
        return np.zeros(size)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.shape != (size,):
        raise DimensionMismatch(f"{name} has shape {v.shape}, expected ({size},)")
    return v


@dataclass
class LpProblem:
    """A dense LP. Bounds default to ``x >= 0`` only when given explicitly;
    omitted bounds mean the variable is free."""

    c: np.ndarray
    A_ub: np.ndarray = None
    b_ub: np.ndarray = None
    A_eq: np.ndarray = None
    b_eq: np.ndarray = None
    lb: np.ndarray = None
    ub: np.ndarray = None

    def __post_init__(self):
        self.c = np.atleast_1d(np.asarray(self.c, dtype=float))
        if self.c.ndim != 1:
            raise DimensionMismatch("objective must be a vector")
        n = self.c.size
        self.A_ub = _as_matrix(self.A_ub, n)
        self.A_eq = _as_matrix(self.A_eq, n)
        for name, a in (("A_ub", self.A_ub), ("A_eq", self.A_eq)):
            if a.ndim != 2 or a.shape[1] != n:
                raise DimensionMismatch(f"{name} has shape {a.shape}, expected (*, {n})")
        self.b_ub = _as_vector(self.b_ub, self.A_ub.shape[0], "b_ub")
        self.b_eq = _as_vector(self.b_eq, self.A_eq.shape[0], "b_eq")
        self.lb = np.full(n, -INF) if self.lb is None else _broadcast(self.lb, n, "lb")
        self.ub = np.full(n, INF) if self.ub is None else _broadcast(self.ub, n, "ub")
        if np.any(self.lb > self.ub):
            raise ValueError("lower bound exceeds upper bound")
        for name in ("c", "A_ub", "A_eq", "b_ub", "b_eq"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} must be finite")
        if np.any(self.lb == INF) or np.any(self.ub == -INF):
            raise ValueError("bounds may not exclude every real value")

    @property
    def n(self):
        return self.c.size

    def max_violation(self, x):
        x = np.asarray(x, dtype=float)
        v = 0.0
        if self.A_ub.shape[0]:
            v = max(v, float(np.max(self.A_ub @ x - self.b_ub)))
        if self.A_eq.shape[0]:
            v = max(v, float(np.max(np.abs(self.A_eq @ x - self.b_eq))))
        v = max(v, float(np.max(self.lb - x, initial=0.0)), float(np.max(x - self.ub, initial=0.0)))
        return v


def _broadcast(v, n, name):
    v = np.asarray(v, dtype=float)
    if v.ndim == 0:
        return np.full(n, float(v))
    if v.shape != (n,):
        raise DimensionMismatch(f"{name} has shape {v.shape}, expected ({n},)")
    return v.copy()


@dataclass
class LpSolution:
    status: Status
    x: np.ndarray = None
    objective_value: float = None

    @property
    def optimal(self):
        return self.status is Status.OPTIMAL


@dataclass
class FeasibilityResult:
    feasible: bool
    witness: np.ndarray = field(default=None, repr=False)


# --------------------------------------------------------------------------
# HiGHS backend

_STATUS_MAP = {
    highspy.HighsModelStatus.kOptimal: Status.OPTIMAL,
    highspy.HighsModelStatus.kInfeasible: Status.INFEASIBLE,
    highspy.HighsModelStatus.kUnbounded: Status.UNBOUNDED,
}


def _highs_run(problem, tols, presolve=True):
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("threads", 1)
    h.setOptionValue("random_seed", 0)
    h.setOptionValue("primal_feasibility_tolerance", tols.feas_tol)
    h.setOptionValue("dual_feasibility_tolerance", tols.opt_tol)
    h.setOptionValue("presolve", "on" if presolve else "off")
    h.setOptionValue("solver", "simplex")

    n = problem.n
    A = np.vstack([problem.A_ub, problem.A_eq])
    lo = np.concatenate([np.full(problem.A_ub.shape[0], -highspy.kHighsInf), problem.b_eq])
    hi = np.concatenate([problem.b_ub, problem.b_eq])
    lp = highspy.HighsLp()
    lp.num_col_ = n
    lp.num_row_ = A.shape[0]
    lp.col_cost_ = problem.c
    lp.col_lower_ = np.where(np.isinf(problem.lb), -highspy.kHighsInf, problem.lb)
    lp.col_upper_ = np.where(np.isinf(problem.ub), highspy.kHighsInf, problem.ub)
    lp.row_lower_ = lo
    lp.row_upper_ = hi
    csc = sparse.csc_matrix(A)
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.start_ = csc.indptr
    lp.a_matrix_.index_ = csc.indices
    lp.a_matrix_.value_ = csc.data
    lp.a_matrix_.num_col_ = n
    lp.a_matrix_.num_row_ = A.shape[0]
    h.passModel(lp)
    h.run()
    status = h.getModelStatus()
    x = np.array(h.getSolution().col_value) if status == highspy.HighsModelStatus.kOptimal else None
    return status, x


def _solve_highs(problem, tols):
    status, x = _highs_run(problem, tols)
    if status == highspy.HighsModelStatus.kUnboundedOrInfeasible:
        status, x = _highs_run(problem, tols, presolve=False)
    if status == highspy.HighsModelStatus.kUnboundedOrInfeasible:
        # disambiguate with a zero objective
        probe = LpProblem(np.zeros(problem.n), problem.A_ub, problem.b_ub,
                          problem.A_eq, problem.b_eq, problem.lb, problem.ub)
        st, _ = _highs_run(probe, tols, presolve=False)
        if st == highspy.HighsModelStatus.kInfeasible:
            return Status.INFEASIBLE, None
        return Status.UNBOUNDED, None
    if status not in _STATUS_MAP:
        raise NumericalFailure(f"HiGHS returned {h_status_name(status)}")
    return _STATUS_MAP[status], x


def h_status_name(status):
    return getattr(status, "name", str(status))


# --------------------------------------------------------------------------
# dense simplex backend


def _solve_simplex(problem, tols):
    """Map to standard form, solve, and map back."""
    n = problem.n
    lb, ub = problem.lb, problem.ub
    # x = shift + T y, y >= 0
    cols = []  # (orig index, sign)
    shift = np.zeros(n)
    extra_ub_rows = []  # (ycol, bound)
    for j in range(n):
        if np.isfinite(lb[j]):
            shift[j] = lb[j]
            cols.append((j, 1.0))
            if np.isfinite(ub[j]):
                extra_ub_rows.append((len(cols) - 1, ub[j] - lb[j]))
        elif np.isfinite(ub[j]):
            shift[j] = ub[j]
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    ny = len(cols)
    Tm = np.zeros((n, ny))
    for k, (j, s) in enumerate(cols):
        Tm[j, k] = s

    A_ub = problem.A_ub @ Tm
    b_ub = problem.b_ub - problem.A_ub @ shift
    if extra_ub_rows:
        E = np.zeros((len(extra_ub_rows), ny))
        for r, (k, bound) in enumerate(extra_ub_rows):
            E[r, k] = 1.0
        A_ub = np.vstack([A_ub, E])
        b_ub = np.concatenate([b_ub, [bd for _, bd in extra_ub_rows]])
    A_eq = problem.A_eq @ Tm
    b_eq = problem.b_eq - problem.A_eq @ shift

    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    A = np.zeros((m_ub + m_eq, ny + m_ub))
    A[:m_ub, :ny] = A_ub
    A[:m_ub, ny:] = np.eye(m_ub)
    A[m_ub:, :ny] = A_eq
    b = np.concatenate([b_ub, b_eq])
    c = np.concatenate([problem.c @ Tm, np.zeros(m_ub)])
    if A.shape[0] == 0:
        # only bounds: optimal iff no improving direction among the y
        if np.any(c < -tols.opt_tol):
            return Status.UNBOUNDED, None
        return Status.OPTIMAL, shift.copy()
    st, y = _simplex.standard_simplex(A, b, c, tols)
    if st == _simplex.INFEASIBLE:
        return Status.INFEASIBLE, None
    if st == _simplex.UNBOUNDED:
        return Status.UNBOUNDED, None
    return Status.OPTIMAL, shift + Tm @ y[:ny]


_BACKENDS = {"highs": _solve_highs, "simplex": _solve_simplex}


def solve(problem, tols=DEFAULT_TOLERANCES, backend="highs"):
    """Solve ``problem`` and return an :class:`LpSolution`.

    Raises
    ------
    NumericalFailure
        If the backend breaks down or returns a point that violates the
        constraints by more than ``tols.feas_tol``.
    """
    try:
        run = _BACKENDS[backend]
    except KeyError:
        raise ValueError(f"unknown backend {backend!r}") from None
    status, x = run(problem, tols)
    if status is not Status.OPTIMAL:
        return LpSolution(status)
    viol = problem.max_violation(x)
    if viol > tols.feas_tol:
        if backend == "highs":
            tight = SolverTolerances(tols.feas_tol * 1e-2, tols.pivot_tol, tols.opt_tol)
            status, x = run(problem, tight)
            if status is not Status.OPTIMAL:
                return LpSolution(status)
            viol = problem.max_violation(x)
        if viol > tols.feas_tol:
            raise NumericalFailure(f"solution violates constraints by {viol:.3e}")
    return LpSolution(Status.OPTIMAL, x, float(problem.c @ x))


def solve_feasibility(problem, tols=DEFAULT_TOLERANCES, backend="highs"):
    """Decide whether the constraint set of ``problem`` is nonempty."""
    probe = LpProblem(np.zeros(problem.n), problem.A_ub, problem.b_ub,
                      problem.A_eq, problem.b_eq, problem.lb, problem.ub)
    sol = solve(probe, tols, backend)
    if sol.status is Status.INFEASIBLE:
        return FeasibilityResult(False)
    # a zero objective cannot be unbounded
    return FeasibilityResult(True, sol.x)


def dump_problem(problem, path):
    """Write a plain-text dump, one constraint per line, for cross-checking."""

    def row(vals):
        return " ".join("%.17g" % v for v in vals)

    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# n={problem.n} ub_rows={problem.A_ub.shape[0]} eq_rows={problem.A_eq.shape[0]}\n")
        fh.write("min " + row(problem.c) + "\n")
        for a, b in zip(problem.A_ub, problem.b_ub):
            fh.write("le " + row(a) + " | " + "%.17g" % b + "\n")
        for a, b in zip(problem.A_eq, problem.b_eq):
            fh.write("eq " + row(a) + " | " + "%.17g" % b + "\n")
        fh.write("lb " + row(problem.lb) + "\n")
        fh.write("ub " + row(problem.ub) + "\n")
