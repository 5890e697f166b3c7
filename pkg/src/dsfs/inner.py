"""Convex inner subset of the flexibility set: a hyperbox plus verified points.

The flexibility set is the projection of a polytope and hence convex, so
the convex hull of the robust box and any oracle-verified feasible profiles
stays inside it. Membership of ``q`` is the LP feasibility question::

    exists mu, lam >= 0, w:  mu + sum(lam) = 1,
                             mu * lo <= w <= mu * hi,
                             q = w + V' lam
"""

from dataclasses import dataclass, replace

import numpy as np

from . import serialize
from .exceptions import NumericalFailure, SolverFailure
from .lp import DEFAULT_TOLERANCES, INF, LpProblem, Status, solve


@dataclass(frozen=True)
class InnerSet:
    box: tuple = None  # (lo, hi) or None
    vertices: tuple = ()
    generation: int = 0

    @property
    def empty(self):
        return self.box is None and not self.vertices

    def to_dict(self):
        return {
            "box": None if self.box is None else {"lo": self.box[0], "hi": self.box[1]},
            "vertices": [np.asarray(v) for v in self.vertices],
            "generation": self.generation,
        }

    @classmethod
    def from_dict(cls, d):
        box = None
        if d.get("box") is not None:
            box = (np.asarray(d["box"]["lo"], dtype=float), np.asarray(d["box"]["hi"], dtype=float))
        return cls(box, tuple(np.asarray(v, dtype=float) for v in d["vertices"]), int(d["generation"]))

    def save(self, path):
        serialize.dump(self.to_dict(), path)

    @classmethod
    def load(cls, path):
        return cls.from_dict(serialize.load(path))


def from_box(lo, hi):
    return InnerSet((np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)))


def _hull_lp(box, vertices, q):
    T = q.size
    nvert = len(vertices)
    has_box = box is not None
    nmu = 1 if has_box else 0
    n = nmu + nvert + (T if has_box else 0)
    A_eq = np.zeros((1 + T, n))
    b_eq = np.concatenate([[1.0], q])
    A_eq[0, :nmu + nvert] = 1.0
    if nvert:
        A_eq[1:, nmu:nmu + nvert] = np.asarray(vertices).T
    A_ub = np.zeros((0, n))
    if has_box:
        lo, hi = box
        wsl = slice(nmu + nvert, n)
        A_eq[1:, wsl] = np.eye(T)
        A_ub = np.zeros((2 * T, n))
        A_ub[:T, wsl] = np.eye(T)
        A_ub[:T, 0] = -hi
        A_ub[T:, wsl] = -np.eye(T)
        A_ub[T:, 0] = lo
    lb = np.concatenate([np.zeros(nmu + nvert), np.full(n - nmu - nvert, -INF)])
    return LpProblem(np.zeros(n), A_ub, np.zeros(A_ub.shape[0]), A_eq, b_eq, lb, None)


def _member(box, vertices, q, tol):
    if box is None and not vertices:
        return False
    if box is not None and np.all(q >= box[0] - tol) and np.all(q <= box[1] + tol):
        return True
    if not vertices:
        return False
    # outside the coordinate hull of everything: cannot be a member
    pts = list(vertices)
    if box is not None:
        pts += [box[0], box[1]]
    P = np.asarray(pts)
    if np.any(q < P.min(axis=0) - tol) or np.any(q > P.max(axis=0) + tol):
        return False
    if box is None and len(vertices) == 1:
        return bool(np.all(np.abs(q - vertices[0]) <= tol))
    try:
        sol = solve(_hull_lp(box, vertices, q), DEFAULT_TOLERANCES)
    except NumericalFailure as exc:
        raise SolverFailure(f"membership LP failed: {exc}") from exc
    return sol.status is Status.OPTIMAL


def is_member(inner, q, tol=DEFAULT_TOLERANCES.feas_tol):
    """True when ``q`` lies in conv(box U vertices), boundary included."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    return _member(inner.box, list(inner.vertices), q, tol)


def grow(inner, new_feasible, tol=DEFAULT_TOLERANCES.feas_tol):
    """Add oracle-verified feasible profiles; members already covered are skipped."""
    verts = list(inner.vertices)
    added = False
    for v in new_feasible:
        v = np.atleast_1d(np.asarray(v, dtype=float))
        if _member(inner.box, verts, v, tol):
            continue
        verts.append(v.copy())
        added = True
    if not added:
        return inner
    return replace(inner, vertices=tuple(verts), generation=inner.generation + 1)


def redundancy_prune(inner, tol=DEFAULT_TOLERANCES.feas_tol):
    """Drop vertices already inside the hull of the box and the other vertices."""
    verts = list(inner.vertices)
    i = 0
    while i < len(verts):
        others = verts[:i] + verts[i + 1:]
        if _member(inner.box, others, verts[i], tol):
            del verts[i]
        else:
            i += 1
    if len(verts) == len(inner.vertices):
        return inner
    return replace(inner, vertices=tuple(verts))
