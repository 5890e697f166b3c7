"""Exact feasibility oracle for substation profiles.

A profile ``p0`` is feasible when some DER schedule ``p`` satisfies
``W p <= z`` and ``D p = p0 - b``. The test solves the always-feasible
slack LP::

    min 1'u + 1's+ + 1's-
    s.t. W p - u <= z,  D p + s+ - s- = p0 - b,  u, s+, s- >= 0

and declares ``p0`` feasible when the optimum is at most ``label_tol``.
"""

import csv
import enum
import time
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionMismatch, NumericalFailure, SolverFailure, UnboundedModel
from .lp import DEFAULT_TOLERANCES, INF, LpProblem, Status, solve

LABEL_TOL = 1e-6
DEFAULT_INFLATION = 0.1


class Label(enum.IntEnum):
    UNLABELED = -1
    INFEASIBLE = 0
    FEASIBLE = 1


class Provenance(str, enum.Enum):
    NONE = "none"
    ORACLE = "oracle"
    HULL = "hull"


@dataclass
class SamplePoint:
    p0: np.ndarray
    label: Label = Label.UNLABELED
    provenance: Provenance = Provenance.NONE
    wall_time: float = field(default=0.0, compare=False)

    def __post_init__(self):
        self.p0 = np.atleast_1d(np.asarray(self.p0, dtype=float))
        self.label = Label(self.label)
        self.provenance = Provenance(self.provenance)
        if (self.label is Label.UNLABELED) != (self.provenance is Provenance.NONE):
            raise ValueError("a point is labeled iff it has a provenance")
        if self.provenance is Provenance.HULL and self.label is not Label.FEASIBLE:
            raise ValueError("geometric membership only certifies feasibility")


@dataclass
class OracleResult:
    label: Label
    witness: np.ndarray = None
    slack: float = 0.0

    @property
    def feasible(self):
        return self.label is Label.FEASIBLE


@dataclass
class BoundingBox:
    """Per-coordinate bounds of the flexibility set, optionally inflated."""

    lo: np.ndarray
    hi: np.ndarray
    inflation: float = 0.0

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        if np.any(self.lo > self.hi):
            raise ValueError("lo must not exceed hi")
        if self.inflation < 0:
            raise ValueError("inflation must be nonnegative")

    @property
    def inflated(self):
        pad = self.inflation * (self.hi - self.lo)
        return self.lo - pad, self.hi + pad

    @property
    def center(self):
        return 0.5 * (self.lo + self.hi)

    def contains(self, q, tol=0.0):
        q = np.asarray(q, dtype=float)
        return bool(np.all(q >= self.lo - tol) and np.all(q <= self.hi + tol))

    def sample(self, rng, count):
        """Uniform draws from the inflated box, shape (count, T)."""
        lo, hi = self.inflated
        return rng.uniform(lo, hi, size=(count, lo.size))


class _SlackLp:
    """Slack LP pieces that do not depend on the query profile."""

    def __init__(self, model):
        K, nv, T = model.K, model.n_vars, model.T
        n = nv + K + 2 * T
        self.c = np.concatenate([np.zeros(nv), np.ones(K + 2 * T)])
        self.A_ub = np.hstack([model.W, -np.eye(K), np.zeros((K, 2 * T))])
        self.A_eq = np.hstack([model.D, np.zeros((T, K)), np.eye(T), -np.eye(T)])
        self.lb = np.concatenate([np.full(nv, -INF), np.zeros(K + 2 * T)])
        self.ub = np.full(n, INF)
        self.z = model.z
        self.b = model.b
        self.nv = nv


_CACHE = {}


def _slack_lp(model):
    key = id(model)
    hit = _CACHE.get(key)
    if hit is None or hit[0] is not model:
        if len(_CACHE) > 64:
            _CACHE.clear()
        hit = (model, _SlackLp(model))
        _CACHE[key] = hit
    return hit[1]


def check_feasible(model, p0, label_tol=LABEL_TOL, tols=DEFAULT_TOLERANCES, backend="highs"):
    """Label one profile against the model; returns an :class:`OracleResult`."""
    p0 = np.atleast_1d(np.asarray(p0, dtype=float))
    if p0.shape != (model.T,):
        raise DimensionMismatch(f"profile has shape {p0.shape}, expected ({model.T},)")
    s = _slack_lp(model)
    prob = LpProblem(s.c, s.A_ub, s.z, s.A_eq, p0 - s.b, s.lb, s.ub)
    try:
        sol = solve(prob, tols, backend)
    except NumericalFailure as exc:
        raise SolverFailure(f"oracle LP failed: {exc}") from exc
    if sol.status is not Status.OPTIMAL:
        raise SolverFailure(f"oracle LP ended {sol.status.value}")
    if sol.objective_value <= label_tol:
        return OracleResult(Label.FEASIBLE, sol.x[:s.nv].copy(), sol.objective_value)
    return OracleResult(Label.INFEASIBLE, None, sol.objective_value)


def bounding_box(model, inflation=DEFAULT_INFLATION, tols=DEFAULT_TOLERANCES):
    """Projection bounds of ``D p + b`` over ``{W p <= z}``, 2T LPs."""
    lo = np.empty(model.T)
    hi = np.empty(model.T)
    for t in range(model.T):
        for sign, out in ((1.0, lo), (-1.0, hi)):
            sol = solve(LpProblem(sign * model.D[t], model.W, model.z), tols)
            if sol.status is Status.UNBOUNDED:
                raise UnboundedModel(f"substation output at step {t} is unbounded")
            if sol.status is Status.INFEASIBLE:
                raise SolverFailure("model has no feasible DER schedule")
            out[t] = sign * sol.objective_value + model.b[t]
    return BoundingBox(lo, hi, inflation)


def label_batch(model, points, label_tol=LABEL_TOL, n_jobs=None):
    """Oracle-label ``points`` in order; per-point wall time is recorded."""
    points = [np.atleast_1d(np.asarray(p, dtype=float)) for p in points]

    def one(i, q):
        t0 = time.perf_counter()
        try:
            res = check_feasible(model, q, label_tol)
        except SolverFailure as exc:
            raise SolverFailure(f"point {i}: {exc}", index=i) from exc
        return SamplePoint(q, res.label, Provenance.ORACLE, time.perf_counter() - t0)

    if n_jobs and n_jobs > 1 and len(points) > 1:
        from joblib import Parallel, delayed

        return list(Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(one)(i, q) for i, q in enumerate(points)))
    return [one(i, q) for i, q in enumerate(points)]


def points_matrix(samples):
    if not samples:
        return np.zeros((0, 0))
    return np.vstack([s.p0 for s in samples])


def labels_vector(samples):
    return np.array([int(s.label) for s in samples], dtype=int)


def write_samples_csv(samples, path, T=None):
    T = T if T is not None else (samples[0].p0.size if samples else 0)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"p0_{t + 1}" for t in range(T)] + ["label", "provenance"])
        for s in samples:
            w.writerow(["%.17g" % v for v in s.p0] + [int(s.label), s.provenance.value])


def read_samples_csv(path):
    """Read ``samples.csv``; the label and provenance columns are optional."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        cols = [i for i, h in enumerate(header) if h.startswith("p0_")]
        li = header.index("label") if "label" in header else None
        pi = header.index("provenance") if "provenance" in header else None
        for row in r:
            if not row:
                continue
            p0 = [float(row[i]) for i in cols]
            label = int(row[li]) if li is not None and row[li] != "" else -1
            prov = row[pi] if pi is not None and row[pi] != "" else None
            if prov is None:
                prov = "none" if label == -1 else "oracle"
            out.append(SamplePoint(p0, Label(label), Provenance(prov)))
    return out
