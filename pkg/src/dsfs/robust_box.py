"""Largest hyperbox of substation profiles that an affine DER policy can serve.

With the box written as ``p0 = c + diag(r) xi`` for ``xi in [-1, 1]^T`` and
the DER schedule restricted to ``p = E xi + f``, robust feasibility of
``W p <= z`` over the whole box is exactly ``|W E| 1 + W f <= z``. Bounding
``|W E|`` by an auxiliary matrix ``L`` turns the adaptive robust problem
into one LP::

    max 1'r  s.t.  D E = diag(r),  D f = c - b,
                   L >= W E,  L >= -W E,  L 1 + W f <= z,  r >= 0
"""

from dataclasses import dataclass

import numpy as np

from . import serialize
from .exceptions import InfeasibleModel, NumericalFailure, SolverFailure
from .lp import DEFAULT_TOLERANCES, INF, LpProblem, Status, solve

BOX_EPS = 1e-8


@dataclass
class AffinePolicy:
    E_hat: np.ndarray  # (mT, T)
    f_hat: np.ndarray  # (mT,)
    center: np.ndarray  # (T,)
    radius: np.ndarray  # (T,)

    def schedule(self, xi):
        return self.E_hat @ np.asarray(xi, dtype=float) + self.f_hat

    def profile(self, xi):
        return self.center + self.radius * np.asarray(xi, dtype=float)


@dataclass
class InnerBox:
    policy: AffinePolicy
    p0_minus: np.ndarray
    p0_plus: np.ndarray
    objective: float  # total width 1'(p0_plus - p0_minus)
    degenerate: bool = False

    def to_dict(self):
        return {
            "p0_minus": self.p0_minus,
            "p0_plus": self.p0_plus,
            "objective": self.objective,
            "degenerate": self.degenerate,
            "center": self.policy.center,
            "radius": self.policy.radius,
            "E_hat": self.policy.E_hat,
            "f_hat": self.policy.f_hat,
        }

    @classmethod
    def from_dict(cls, d):
        T = len(d["center"])
        pol = AffinePolicy(np.asarray(d["E_hat"], dtype=float).reshape(-1, T),
                           np.asarray(d["f_hat"], dtype=float),
                           np.asarray(d["center"], dtype=float),
                           np.asarray(d["radius"], dtype=float))
        return cls(pol, np.asarray(d["p0_minus"], dtype=float), np.asarray(d["p0_plus"], dtype=float),
                   float(d["objective"]), bool(d["degenerate"]))

    def save(self, path):
        serialize.dump(self.to_dict(), path)

    @classmethod
    def load(cls, path):
        return cls.from_dict(serialize.load(path))


def _index(model):
    T, nv, K = model.T, model.n_vars, model.K
    sl = {}
    pos = 0
    for name, size in (("c", T), ("r", T), ("E", nv * T), ("f", nv), ("L", K * T)):
        sl[name] = slice(pos, pos + size)
        pos += size
    return sl, pos


def build_lp(model):
    """Assemble the robust box LP for ``model``; returns (LpProblem, slices)."""
    T, K = model.T, model.K
    W, D = model.W, model.D
    sl, n = _index(model)

    def E_col(j, s):
        return sl["E"].start + j * T + s

    def L_col(k, s):
        return sl["L"].start + k * T + s

    eq_rows, eq_rhs = [], []
    # D E = diag(r)
    for t in range(T):
        for s in range(T):
            row = np.zeros(n)
            for j in np.nonzero(D[t])[0]:
                row[E_col(j, s)] = D[t, j]
            if t == s:
                row[sl["r"].start + s] = -1.0
            eq_rows.append(row)
            eq_rhs.append(0.0)
    # D f - c = -b
    for t in range(T):
        row = np.zeros(n)
        row[sl["f"]] = D[t]
        row[sl["c"].start + t] = -1.0
        eq_rows.append(row)
        eq_rhs.append(-model.b[t])

    ub_rows, ub_rhs = [], []
    for k in range(K):
        nz = np.nonzero(W[k])[0]
        for s in range(T):
            for sign in (1.0, -1.0):
                row = np.zeros(n)
                for j in nz:
                    row[E_col(j, s)] = sign * W[k, j]
                row[L_col(k, s)] = -1.0
                ub_rows.append(row)
                ub_rhs.append(0.0)
        row = np.zeros(n)
        row[sl["f"]] = W[k]
        for s in range(T):
            row[L_col(k, s)] = 1.0
        ub_rows.append(row)
        ub_rhs.append(model.z[k])

    c = np.zeros(n)
    c[sl["r"]] = -1.0
    lb = np.full(n, -INF)
    lb[sl["r"]] = 0.0
    lb[sl["L"]] = 0.0
    prob = LpProblem(c, np.array(ub_rows), np.array(ub_rhs), np.array(eq_rows), np.array(eq_rhs), lb, None)
    return prob, sl


def solve_inner_box(model, tols=DEFAULT_TOLERANCES, box_eps=BOX_EPS, backend="highs"):
    """Solve the affine-policy robust box problem.

    Returns an :class:`InnerBox`; ``degenerate`` is set when the optimal
    total radius is at most ``box_eps``, in which case the box collapses to
    the point ``c``.

    Raises
    ------
    InfeasibleModel
        If no DER schedule satisfies the model at all.
    SolverFailure
        If the LP is unbounded or the solver breaks down.
    """
    prob, sl = build_lp(model)
    try:
        sol = solve(prob, tols, backend)
    except NumericalFailure as exc:
        raise SolverFailure(f"robust box LP failed: {exc}") from exc
    if sol.status is Status.INFEASIBLE:
        raise InfeasibleModel("no DER schedule satisfies W p <= z")
    if sol.status is Status.UNBOUNDED:
        raise SolverFailure("robust box LP is unbounded; the model must be bounded")
    x = sol.x
    T, nv = model.T, model.n_vars
    r = np.maximum(x[sl["r"]], 0.0)
    c = x[sl["c"]]
    pol = AffinePolicy(x[sl["E"]].reshape(nv, T), x[sl["f"]].copy(), c.copy(), r)
    degenerate = bool(r.sum() <= box_eps)
    if degenerate:
        r = np.zeros(T)
        pol.radius = r
        pol.E_hat = np.zeros((nv, T))
    return InnerBox(pol, c - r, c + r, float(2.0 * r.sum()), degenerate)


def certificate_slack(model, policy):
    """``z - (|W E| 1 + W f)``; nonnegative when the box is certified."""
    return model.z - (np.abs(model.W @ policy.E_hat).sum(axis=1) + model.W @ policy.f_hat)
