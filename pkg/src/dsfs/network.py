"""Synthetic radial feeders and the compact operation model ``W p <= z, p0 = D p + b``.

Decision variables are DER real-power outputs ``p`` stacked DER-major: the
column of DER ``j`` at step ``t`` is ``j * T + t``. The substation output
``p0`` is the net import, i.e. total load minus total DER output, so every
entry of ``D`` is ``-1`` on its step and ``b`` is the total load.

Voltages follow LinDistFlow on squared magnitudes, lossless and real-power
only::

    v_i = v_nom - sum_k R[i, k] * (d_k - sum_{j at k} p_j)

where ``R[i, k]`` is twice the resistance shared by the paths from the
substation to buses ``i`` and ``k``.
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np

from . import rng as rng_mod
from . import serialize
from .exceptions import DisconnectedFeeder, EmptyInterior, InvalidConfig, UnboundedModel
from .lp import LpProblem, Status, solve, solve_feasibility

INTERVAL = "interval"
BATTERY = "battery"
ENERGY_CAPPED = "energy_capped"
DER_KINDS = (INTERVAL, BATTERY, ENERGY_CAPPED)


@dataclass
class FeederSpec:
    n: int
    lines: list  # (from_bus, to_bus, r, x)
    loads: np.ndarray  # (n, T); row 0 is the substation
    v_nom: float = 1.0
    v_limits: tuple = (0.95 ** 2, 1.05 ** 2)
    T: int = 1
    step_hours: float = 1.0
    start_hour: int = 0

    def __post_init__(self):
        self.loads = np.asarray(self.loads, dtype=float).reshape(self.n, self.T)
        self.v_limits = tuple(float(v) for v in self.v_limits)
        if self.T < 1:
            raise InvalidConfig("horizon must be at least one step")
        if not self.v_limits[0] < self.v_nom < self.v_limits[1]:
            raise InvalidConfig("need v_min < v_nom < v_max")
        for line in self.lines:
            if line[2] <= 0:
                raise InvalidConfig("line resistances must be positive")

    def to_dict(self):
        return {
            "n": self.n,
            "T": self.T,
            "step_hours": self.step_hours,
            "start_hour": self.start_hour,
            "v_nom": self.v_nom,
            "v_limits": list(self.v_limits),
            "lines": [[int(a), int(b), float(r), float(x)] for a, b, r, x in self.lines],
            "loads": self.loads,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            n=d["n"],
            lines=[(int(a), int(b), float(r), float(x)) for a, b, r, x in d["lines"]],
            loads=np.asarray(d["loads"], dtype=float),
            v_nom=d["v_nom"],
            v_limits=tuple(d["v_limits"]),
            T=d["T"],
            step_hours=d["step_hours"],
            start_hour=d.get("start_hour", 0),
        )


@dataclass
class DerSpec:
    """One DER. ``p_min``/``p_max`` are per-step arrays of length T."""

    kind: str
    bus: int
    p_min: np.ndarray
    p_max: np.ndarray
    e_min: float = 0.0
    e_max: float = 0.0
    e_init: float = 0.0
    e_total_min: float = -math.inf
    e_total_max: float = math.inf

    def __post_init__(self):
        if self.kind not in DER_KINDS:
            raise InvalidConfig(f"unknown DER kind {self.kind!r}")
        self.p_min = np.atleast_1d(np.asarray(self.p_min, dtype=float))
        self.p_max = np.atleast_1d(np.asarray(self.p_max, dtype=float))
        if np.any(self.p_min > self.p_max):
            raise InvalidConfig("p_min exceeds p_max")
        if self.kind == BATTERY and not self.e_min <= self.e_init <= self.e_max:
            raise InvalidConfig("battery needs e_min <= e_init <= e_max")
        if self.kind == ENERGY_CAPPED and self.e_total_min > self.e_total_max:
            raise InvalidConfig("e_total_min exceeds e_total_max")

    def to_dict(self):
        d = {"kind": self.kind, "bus": int(self.bus), "p_min": self.p_min, "p_max": self.p_max}
        if self.kind == BATTERY:
            d.update(e_min=self.e_min, e_max=self.e_max, e_init=self.e_init)
        elif self.kind == ENERGY_CAPPED:
            d.update(e_total_min=self.e_total_min, e_total_max=self.e_total_max)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in ("e_min", "e_max", "e_init", "e_total_min", "e_total_max"):
            if k in d:
                d[k] = float(serialize.to_float_array(d[k]))
        return cls(**d)


@dataclass
class LoadProfileParams:
    """Knobs for the synthetic feeder generator.

    Loads follow a two-segment diurnal shape, ``night_level`` outside
    ``day_hours`` and a half-sine bump peaking at ``peak_level`` inside,
    scaled by a per-bus base drawn from ``base_load`` and a per-bus,
    per-hour jitter of relative size ``jitter``.
    """

    start_hour: int = 8
    step_hours: float = 1.0
    base_load: tuple = (0.04, 0.08)
    night_level: float = 0.5
    peak_level: float = 1.0
    day_hours: tuple = (6.0, 22.0)
    jitter: float = 0.05
    resistance: tuple = (0.05, 0.12)
    reactance_ratio: float = 2.0
    v_nom: float = 1.0
    v_limits: tuple = (0.95 ** 2, 1.05 ** 2)
    der_mix: dict = field(default_factory=lambda: {INTERVAL: 0.4, BATTERY: 0.3, ENERGY_CAPPED: 0.3})
    pv_capacity: tuple = (0.02, 0.05)
    battery_power: tuple = (0.02, 0.05)
    battery_hours: tuple = (1.0, 3.0)
    flex_power: tuple = (0.02, 0.05)
    flex_energy_fraction: tuple = (0.3, 0.7)

    def to_dict(self):
        d = dict(self.__dict__)
        d["der_mix"] = dict(self.der_mix)
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k, v in list(d.items()):
            if isinstance(v, list):
                d[k] = tuple(v)
        return cls(**d)


def diurnal_shape(hour, profile):
    lo, hi = profile.day_hours
    h = hour % 24
    if lo <= h <= hi:
        return profile.night_level + (profile.peak_level - profile.night_level) * math.sin(
            math.pi * (h - lo) / (hi - lo))
    return profile.night_level


def irradiance(hour):
    """Clear-sky PV availability in [0, 1], daylight 6h-18h."""
    h = hour % 24
    if 6.0 < h < 18.0:
        return math.sin(math.pi * (h - 6.0) / 12.0)
    return 0.0


def generate_feeder(seed, n, m, T, profile=None):
    """Draw a random radial feeder with ``n`` buses and ``m`` DERs.

    Each bus ``k > 0`` hangs off a uniformly chosen earlier bus. All random
    draws are independent of ``profile.start_hour`` and ``T`` so that time
    windows of the same seed describe the same physical feeder.
    """
    profile = profile or LoadProfileParams()
    if n < 2 or m < 1 or T < 1:
        raise InvalidConfig("need n >= 2, m >= 1 and T >= 1")
    kinds = [k for k in DER_KINDS if profile.der_mix.get(k, 0.0) > 0.0]
    if not kinds:
        raise InvalidConfig("DER mix is empty")
    weights = np.array([profile.der_mix[k] for k in kinds], dtype=float)
    weights /= weights.sum()

    g = rng_mod.stream(seed, "feeder")
    parents = [int(g.integers(0, k)) for k in range(1, n)]
    res = g.uniform(*profile.resistance, size=n - 1)
    lines = [(parents[k - 1], k, float(res[k - 1]), float(res[k - 1] * profile.reactance_ratio))
             for k in range(1, n)]
    base = g.uniform(*profile.base_load, size=n)
    base[0] = 0.0
    jitter = 1.0 + profile.jitter * g.uniform(-1.0, 1.0, size=(n, 24))

    hours = [profile.start_hour + t * profile.step_hours for t in range(T)]
    loads = np.zeros((n, T))
    for t, h in enumerate(hours):
        loads[:, t] = base * diurnal_shape(h, profile) * jitter[:, int(h) % 24]

    kind_idx = g.choice(len(kinds), size=m, p=weights)
    buses = g.integers(1, n, size=m)
    # fixed number of draws per DER regardless of kind
    u = g.uniform(size=(m, 3))
    dt = profile.step_hours
    ders = []
    for j in range(m):
        kind = kinds[kind_idx[j]]
        bus = int(buses[j])
        if kind == INTERVAL:
            cap = _lerp(profile.pv_capacity, u[j, 0])
            p_max = np.array([cap * irradiance(h) for h in hours])
            ders.append(DerSpec(INTERVAL, bus, np.zeros(T), p_max))
        elif kind == BATTERY:
            pw = _lerp(profile.battery_power, u[j, 0])
            e_max = pw * _lerp(profile.battery_hours, u[j, 1])
            e_init = e_max * (0.3 + 0.4 * u[j, 2])
            ders.append(DerSpec(BATTERY, bus, np.full(T, -pw), np.full(T, pw),
                                e_min=0.0, e_max=e_max, e_init=e_init))
        else:
            pw = _lerp(profile.flex_power, u[j, 0])
            full = pw * T * dt
            lo_f, hi_f = profile.flex_energy_fraction
            a = lo_f + (hi_f - lo_f) * u[j, 1] * 0.5
            bnd = hi_f - (hi_f - lo_f) * u[j, 2] * 0.5
            ders.append(DerSpec(ENERGY_CAPPED, bus, np.zeros(T), np.full(T, pw),
                                e_total_min=a * full, e_total_max=bnd * full))
    feeder = FeederSpec(n=n, lines=lines, loads=loads, v_nom=profile.v_nom,
                        v_limits=profile.v_limits, T=T, step_hours=dt,
                        start_hour=profile.start_hour)
    return feeder, ders


def _lerp(rng_pair, u):
    lo, hi = rng_pair
    return float(lo + (hi - lo) * u)


def voltage_sensitivity(feeder):
    """Squared-voltage sensitivity matrix ``R`` (n x n).

    ``R[i, k]`` is twice the total resistance of the lines common to the
    substation paths of ``i`` and ``k``.
    """
    n = feeder.n
    parent = [-1] * n
    r_up = np.zeros(n)
    children = {}
    for a, b, r, _ in feeder.lines:
        children.setdefault(a, []).append((b, r))
        children.setdefault(b, []).append((a, r))
    seen = {0}
    order = [0]
    stack = [0]
    while stack:
        u = stack.pop()
        for v, r in children.get(u, []):
            if v not in seen:
                seen.add(v)
                parent[v] = u
                r_up[v] = r
                order.append(v)
                stack.append(v)
    if len(seen) != n or len(feeder.lines) != n - 1:
        raise DisconnectedFeeder("lines do not form a spanning tree rooted at bus 0")

    # path[k] = set of buses whose upstream line is on k's path
    paths = [None] * n
    paths[0] = frozenset()
    for v in order[1:]:
        paths[v] = paths[parent[v]] | {v}
    R = np.zeros((n, n))
    for i in range(n):
        for k in range(i, n):
            shared = paths[i] & paths[k]
            R[i, k] = R[k, i] = 2.0 * sum(r_up[s] for s in shared)
    return R


@dataclass(frozen=True, eq=False)
class CompactModel:
    """``W p <= z`` and ``p0 = D p + b`` for ``m`` DERs over ``T`` steps.

    ``row_classes`` tags every row of ``W`` with the constraint family it
    came from (``interval``, ``battery``, ``energy_capped``, ``voltage``, or
    free text for hand-built models).
    """

    W: np.ndarray
    z: np.ndarray
    D: np.ndarray
    b: np.ndarray
    m: int
    T: int
    meta: dict = field(default_factory=dict)
    row_classes: tuple = ()

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.W, dtype=float))
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "z", np.atleast_1d(np.asarray(self.z, dtype=float)))
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "b", np.atleast_1d(np.asarray(self.b, dtype=float)))
        nv = self.m * self.T
        if W.shape[1] != nv or D.shape != (self.T, nv):
            raise InvalidConfig(f"W {W.shape} / D {D.shape} inconsistent with m={self.m}, T={self.T}")
        if self.z.shape != (W.shape[0],) or self.b.shape != (self.T,):
            raise InvalidConfig("z or b has the wrong length")
        if not np.all(np.isfinite(self.b)):
            raise InvalidConfig("b must be finite")
        if not self.row_classes:
            object.__setattr__(self, "row_classes", ("other",) * W.shape[0])
        for a in (self.W, self.z, self.D, self.b):
            a.setflags(write=False)

    @property
    def K(self):
        return self.W.shape[0]

    @property
    def n_vars(self):
        return self.m * self.T

    def p0(self, p):
        return self.D @ p + self.b

    def to_dict(self):
        return {
            "n": int(self.meta.get("n", 0)),
            "m": self.m,
            "T": self.T,
            "W": self.W,
            "z": self.z,
            "D": self.D,
            "b": self.b,
            "meta": self.meta,
            "row_classes": list(self.row_classes),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(W=np.asarray(d["W"], dtype=float).reshape(-1, d["m"] * d["T"]),
                   z=d["z"], D=d["D"], b=d["b"], m=d["m"], T=d["T"],
                   meta=d.get("meta", {}), row_classes=tuple(d.get("row_classes", ())))

    def save(self, path):
        serialize.dump(self.to_dict(), path)

    @classmethod
    def load(cls, path):
        return cls.from_dict(serialize.load(path))


def _der_rows(der, j, m, T, dt):
    """Rows contributed by one DER, as (W rows, z, class)."""
    nv = m * T
    rows, rhs = [], []
    p_min = np.broadcast_to(der.p_min, (T,))
    p_max = np.broadcast_to(der.p_max, (T,))
    for t in range(T):
        r = np.zeros(nv)
        r[j * T + t] = 1.0
        rows.append(r)
        rhs.append(p_max[t])
        rows.append(-r)
        rhs.append(-p_min[t])
    if der.kind == BATTERY:
        for t in range(T):
            r = np.zeros(nv)
            r[j * T: j * T + t + 1] = dt
            rows.append(r)
            rhs.append(der.e_max - der.e_init)
            rows.append(-r)
            rhs.append(der.e_init - der.e_min)
    elif der.kind == ENERGY_CAPPED:
        r = np.zeros(nv)
        r[j * T: (j + 1) * T] = dt
        if math.isfinite(der.e_total_max):
            rows.append(r)
            rhs.append(der.e_total_max)
        if math.isfinite(der.e_total_min):
            rows.append(-r)
            rhs.append(-der.e_total_min)
    return rows, rhs


def der_row_count(der, T):
    count = 2 * T
    if der.kind == BATTERY:
        count += 2 * T
    elif der.kind == ENERGY_CAPPED:
        count += int(math.isfinite(der.e_total_max)) + int(math.isfinite(der.e_total_min))
    return count


def assemble_compact(feeder, ders, check=True):
    """Build the compact model for ``feeder`` and ``ders``.

    Raises
    ------
    EmptyInterior
        When ``{p : W p <= z}`` is empty; ``row_class`` names the first
        constraint family whose inclusion makes it empty.
    UnboundedModel
        When some DER output is unbounded.
    """
    T, m, n = feeder.T, len(ders), feeder.n
    if m < 1:
        raise InvalidConfig("need at least one DER")
    for der in ders:
        if not 0 <= der.bus < n:
            raise InvalidConfig(f"DER attached to missing bus {der.bus}")
        if der.p_min.size not in (1, T) or der.p_max.size not in (1, T):
            raise InvalidConfig("DER bounds must have one entry per step")
    dt = feeder.step_hours
    nv = m * T
    rows, rhs, classes = [], [], []
    for j, der in enumerate(ders):
        r, z = _der_rows(der, j, m, T, dt)
        rows += r
        rhs += z
        classes += [der.kind] * len(r)

    R = voltage_sensitivity(feeder)
    v_min, v_max = feeder.v_limits
    # A[k, j] = 1 when DER j sits on bus k
    A = np.zeros((n, m))
    for j, der in enumerate(ders):
        A[der.bus, j] = 1.0
    RA = R @ A
    for t in range(T):
        Rd = R @ feeder.loads[:, t]
        for i in range(n):
            r = np.zeros(nv)
            r[np.arange(m) * T + t] = RA[i]
            rows.append(r)
            rhs.append(v_max - feeder.v_nom + Rd[i])
            rows.append(-r)
            rhs.append(feeder.v_nom - v_min - Rd[i])
            classes += ["voltage", "voltage"]

    W = np.array(rows)
    z = np.array(rhs, dtype=float)
    D = np.zeros((T, nv))
    for t in range(T):
        D[t, np.arange(m) * T + t] = -1.0
    b = feeder.loads.sum(axis=0)
    meta = {"source": "assemble_compact", "n": n, "start_hour": feeder.start_hour,
            "step_hours": dt}
    model = CompactModel(W, z, D, b, m, T, meta=meta, row_classes=tuple(classes))
    if check:
        validate_model(model)
    return model


def validate_model(model):
    """Check that ``{p : W p <= z}`` is nonempty and bounded."""
    W, z = model.W, model.z
    if not solve_feasibility(LpProblem(np.zeros(model.n_vars), W, z)).feasible:
        order = []
        for c in model.row_classes:
            if c not in order:
                order.append(c)
        cls = np.array(model.row_classes)
        for k in range(len(order)):
            mask = np.isin(cls, order[:k + 1])
            if not solve_feasibility(LpProblem(np.zeros(model.n_vars), W[mask], z[mask])).feasible:
                raise EmptyInterior(f"DER polytope is empty once {order[k]} rows are added",
                                    row_class=order[k])
        raise EmptyInterior("DER polytope is empty")
    for j in range(model.n_vars):
        for sign in (1.0, -1.0):
            c = np.zeros(model.n_vars)
            c[j] = -sign
            if solve(LpProblem(c, W, z)).status is Status.UNBOUNDED:
                raise UnboundedModel(f"variable {j} is unbounded")
    return model


def window(feeder_seed, n, m, T, profile, start_hour):
    """Model for the time window starting at ``start_hour``; same physical feeder."""
    feeder, ders = generate_feeder(feeder_seed, n, m, T, replace(profile, start_hour=start_hour))
    return assemble_compact(feeder, ders)


def toy_a():
    """One interval DER ``p in [-1, 1]``, ``p0 = 2 - p``; flexibility set [1, 3]."""
    return CompactModel(W=[[1.0], [-1.0]], z=[1.0, 1.0], D=[[-1.0]], b=[2.0], m=1, T=1,
                        meta={"source": "toy_a"}, row_classes=(INTERVAL, INTERVAL))


def toy_b():
    """``p_t in [-1, 1]``, ``p_1 + p_2 in [-1, 1]``, ``p0 = -p``."""
    W = [[1, 0], [-1, 0], [0, 1], [0, -1], [1, 1], [-1, -1]]
    return CompactModel(W=W, z=[1.0] * 6, D=-np.eye(2), b=[0.0, 0.0], m=1, T=2,
                        meta={"source": "toy_b"},
                        row_classes=(INTERVAL,) * 4 + (ENERGY_CAPPED,) * 2)


def save_feeder(feeder, ders, path, extra=None):
    d = {"feeder": feeder.to_dict(), "ders": [der.to_dict() for der in ders]}
    if extra:
        d.update(extra)
    serialize.dump(d, path)


def load_feeder(path):
    d = serialize.load(path)
    feeder = FeederSpec.from_dict(d["feeder"])
    ders = [DerSpec.from_dict(x) for x in d["ders"]]
    return feeder, ders
