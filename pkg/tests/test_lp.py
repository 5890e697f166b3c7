import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsfs.exceptions import DimensionMismatch
from dsfs.lp import LpProblem, Status, dump_problem, solve, solve_feasibility

BACKENDS = ["highs", "simplex"]


@pytest.mark.parametrize("backend", BACKENDS)
def test_interval_optimum(backend):
    sol = solve(LpProblem([1.0], A_ub=[[-1.0], [1.0]], b_ub=[-1.0, 3.0]), backend=backend)
    assert sol.status is Status.OPTIMAL
    assert sol.x[0] == pytest.approx(1.0)
    assert sol.objective_value == pytest.approx(1.0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_empty_interval(backend):
    sol = solve(LpProblem([0.0], A_ub=[[1.0], [-1.0]], b_ub=[1.0, -2.0]), backend=backend)
    assert sol.status is Status.INFEASIBLE


@pytest.mark.parametrize("backend", BACKENDS)
def test_unbounded(backend):
    assert solve(LpProblem([-1.0], lb=0.0), backend=backend).status is Status.UNBOUNDED


@pytest.mark.parametrize("backend", BACKENDS)
def test_feasibility_examples(backend, model_a):
    res = solve_feasibility(LpProblem([0.0], A_eq=[[1.0]], b_eq=[0.5], lb=0, ub=1), backend=backend)
    assert res.feasible and res.witness[0] == pytest.approx(0.5)
    assert not solve_feasibility(LpProblem([0.0], A_eq=[[1.0]], b_eq=[2.0], lb=0, ub=1), backend=backend).feasible
    # toy A: W p <= z, p0 = 2 - p at p0 = 2
    prob = LpProblem([0.0], model_a.W, model_a.z, model_a.D, [2.0 - model_a.b[0]])
    assert solve_feasibility(prob, backend=backend).feasible


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        LpProblem([1.0, 2.0], A_ub=[[1.0]], b_ub=[1.0])
    with pytest.raises(DimensionMismatch):
        LpProblem([1.0], A_ub=[[1.0]], b_ub=[1.0, 2.0])


def test_rejects_bad_bounds():
    with pytest.raises(ValueError):
        LpProblem([1.0], lb=2.0, ub=1.0)


@given(lo=st.integers(-50, 50), width=st.integers(0, 40), sign=st.sampled_from([-1.0, 1.0]),
       scale=st.integers(1, 9))
@settings(max_examples=60, deadline=None)
def test_box_problems_match_analytic_value(lo, width, sign, scale):
    hi = lo + width
    c = sign * scale
    expected = c * (lo if c > 0 else hi)
    for backend in BACKENDS:
        sol = solve(LpProblem([c], lb=lo, ub=hi), backend=backend)
        assert abs(sol.objective_value - expected) <= 1e-8 * max(1.0, abs(expected))
        sol = solve(LpProblem([c], A_ub=[[1.0], [-1.0]], b_ub=[hi, -lo]), backend=backend)
        assert abs(sol.objective_value - expected) <= 1e-8 * max(1.0, abs(expected))


def test_determinism(rng):
    A = rng.normal(size=(15, 8))
    prob = LpProblem(rng.normal(size=8), A, np.abs(rng.normal(size=15)) + 1, lb=-5, ub=5)
    for backend in BACKENDS:
        a, b = solve(prob, backend=backend), solve(prob, backend=backend)
        assert a.status is b.status
        assert a.objective_value == b.objective_value


# ---------------------------------------------------------------------------
# brute-force vertex enumeration oracle


def _all_rows(prob):
    """Every constraint as a (a, b, is_eq) triple, bounds included."""
    n = prob.n
    rows = [(a, b, False) for a, b in zip(prob.A_ub, prob.b_ub)]
    rows += [(a, b, True) for a, b in zip(prob.A_eq, prob.b_eq)]
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        if np.isfinite(prob.ub[j]):
            rows.append((e, prob.ub[j], False))
        if np.isfinite(prob.lb[j]):
            rows.append((-e, -prob.lb[j], False))
    return rows


def brute_force(prob, tol=1e-9):
    """(status, value) by enumerating vertices and extreme rays.

    Assumes every variable has a finite lower bound, so the polyhedron is
    pointed: it is nonempty iff it has a vertex, and the LP is unbounded iff
    some extreme ray of the recession cone improves the objective.
    """
    n = prob.n
    rows = _all_rows(prob)
    A = np.array([r[0] for r in rows])
    b = np.array([r[1] for r in rows])
    eq = np.array([r[2] for r in rows])

    def ok(x):
        s = A @ x - b
        return np.all(s[~eq] <= tol) and np.all(np.abs(s[eq]) <= tol)

    best = None
    for idx in itertools.combinations(range(len(rows)), n):
        if not eq[~np.isin(np.arange(len(rows)), idx)].sum() == 0 and False:
            pass
        sub = A[list(idx)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        x = np.linalg.solve(sub, b[list(idx)])
        if ok(x):
            val = prob.c @ x
            best = val if best is None else min(best, val)
    if best is None:
        return Status.INFEASIBLE, None
    # extreme rays of {d : A d <= 0 (ineq), A d = 0 (eq)}
    for idx in itertools.combinations(range(len(rows)), n - 1):
        sub = A[list(idx)]
        if n > 1:
            _, s, vt = np.linalg.svd(sub)
            if np.sum(s > 1e-12) != n - 1:
                continue
            d = vt[-1]
        else:
            d = np.array([1.0])
        for dd in (d, -d):
            h = A @ dd
            if np.all(h[~eq] <= 1e-9) and np.all(np.abs(h[eq]) <= 1e-9) and prob.c @ dd < -1e-9:
                return Status.UNBOUNDED, None
    return Status.OPTIMAL, best


def random_lp(g):
    n = int(g.integers(1, 5))
    m_ub = int(g.integers(0, 7))
    m_eq = int(g.integers(0, 2)) if n > 1 else 0
    c = g.integers(-5, 6, size=n).astype(float)
    A_ub = g.integers(-4, 5, size=(m_ub, n)).astype(float)
    b_ub = g.integers(-6, 10, size=m_ub).astype(float)
    A_eq = g.integers(-3, 4, size=(m_eq, n)).astype(float)
    b_eq = g.integers(-3, 4, size=m_eq).astype(float)
    lb = g.integers(-3, 2, size=n).astype(float)
    ub = np.where(g.random(n) < 0.5, lb + g.integers(0, 6, size=n), np.inf)
    return LpProblem(c, A_ub, b_ub, A_eq, b_eq, lb, ub)


def test_brute_force_oracle_on_known_cases():
    assert brute_force(LpProblem([1.0], lb=1.0, ub=3.0)) == (Status.OPTIMAL, 1.0)
    assert brute_force(LpProblem([-1.0], lb=0.0))[0] is Status.UNBOUNDED
    assert brute_force(LpProblem([0.0], A_ub=[[1.0]], b_ub=[-2.0], lb=0.0))[0] is Status.INFEASIBLE


@pytest.mark.parametrize("backend", BACKENDS)
def test_cross_validation_against_vertex_enumeration(backend):
    g = np.random.default_rng(2024)
    counts = {s: 0 for s in Status}
    for _ in range(100):
        prob = random_lp(g)
        expected, value = brute_force(prob)
        sol = solve(prob, backend=backend)
        counts[sol.status] += 1
        assert sol.status is expected
        if expected is Status.OPTIMAL:
            assert sol.objective_value == pytest.approx(value, abs=1e-7)
            assert prob.max_violation(sol.x) <= 1e-7
    # the generator exercises every outcome
    assert all(counts[s] > 0 for s in Status)


def test_dump_problem(tmp_path):
    prob = LpProblem([1.0, -1.0], A_ub=[[1.0, 2.0]], b_ub=[3.0], A_eq=[[1.0, 1.0]], b_eq=[1.0], lb=0.0)
    path = tmp_path / "lp.txt"
    dump_problem(prob, path)
    lines = path.read_text().splitlines()
    assert lines[1].startswith("min ")
    assert sum(line.startswith("le ") for line in lines) == 1
    assert sum(line.startswith("eq ") for line in lines) == 1
