"""Desk-scale experiments: uncertainty heatmaps, rolling horizon, injection robustness, timing."""

import csv
import logging
import time
from dataclasses import dataclass, replace

import numpy as np

from . import rng as rng_mod
from .active import RunResult, run
from .exceptions import EmptyInterior
from .metrics import EvalReport, confusion_report, make_test_set, report_from_counts, score
from .mlp import classify, posterior, uncertainty
from .network import INTERVAL, assemble_compact
from .oracle import DEFAULT_INFLATION, bounding_box, check_feasible

log = logging.getLogger(__name__)

__all__ = [
    "EvalReport",
    "confusion_report",
    "report_from_counts",
    "make_test_set",
    "score",
    "heatmap_grid",
    "grid_axes",
    "rolling_horizon",
    "perturb",
    "robustness_sweep",
    "timing_benchmark",
]

ROBUSTNESS_RETRIES = 10


def grid_axes(model, dims=(0, 1), resolution=200, inflation=DEFAULT_INFLATION, box=None):
    """Cell-center coordinates along the two plotted dimensions."""
    box = box or bounding_box(model, inflation)
    lo, hi = box.inflated
    axes = []
    for d in dims:
        step = (hi[d] - lo[d]) / resolution
        axes.append(lo[d] + (np.arange(resolution) + 0.5) * step)
    return axes, box


def heatmap_grid(params, model, dims=(0, 1), resolution=200, inflation=DEFAULT_INFLATION,
                 with_oracle=True, box=None, oracle_labels=None):
    """Posterior, uncertainty and oracle label at every grid cell center.

    Rows are emitted row-major (second plotted coordinate outer). Any
    coordinates beyond ``dims`` are held at the bounding-box center.
    Pass ``oracle_labels`` to reuse a previously computed oracle layer.
    """
    (xs, ys), box = grid_axes(model, dims, resolution, inflation, box)
    base = box.center
    P = np.empty((resolution * resolution, model.T))
    P[:] = base
    gx, gy = np.meshgrid(xs, ys)
    P[:, dims[0]] = gx.ravel()
    P[:, dims[1]] = gy.ravel()
    post = posterior(params, P) if params is not None else np.full(len(P), np.nan)
    M = uncertainty(post) if params is not None else np.full(len(P), np.nan)
    if oracle_labels is not None:
        orc = np.asarray(oracle_labels, dtype=int)
    elif with_oracle:
        orc = np.array([int(check_feasible(model, q).label) for q in P])
    else:
        orc = np.full(len(P), -1)
    return [{"x": float(P[i, dims[0]]), "y": float(P[i, dims[1]]), "posterior": float(post[i]),
             "uncertainty": float(M[i]), "oracle": int(orc[i])} for i in range(len(P))]


def write_grid_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "posterior", "uncertainty", "oracle"])
        for r in rows:
            w.writerow(["%.17g" % r["x"], "%.17g" % r["y"], "%.17g" % r["posterior"],
                        "%.17g" % r["uncertainty"], r["oracle"]])


@dataclass
class WindowResult:
    window: object
    warm: RunResult
    cold: RunResult

    def f1_curves(self):
        def curve(res):
            return [res.initial.f1] + [h["f1"] for h in res.history]

        return curve(self.warm), curve(self.cold)


def rolling_horizon(model_factory, windows, cfg, train_cfg=None, eval_count=None):
    """Train window by window, warm vs. cold.

    The first window is trained from scratch. Each later window is run
    twice on the same pool and held-out set: once warm-started from the
    previous window's warm model (first ``cfg.freeze_prefix`` layers
    frozen), once from scratch.
    """
    windows = list(windows)
    if not windows:
        raise ValueError("need at least one window")
    eval_count = cfg.eval_count if eval_count is None else eval_count
    results = []
    prev = None
    for k, w in enumerate(windows):
        model = model_factory(w)
        ev = make_test_set(model, eval_count, cfg.seed, cfg.inflation)
        cold = run(model, cfg, train_cfg, None, ev)
        if k == 0:
            warm = cold
        else:
            warm = run(model, cfg, train_cfg, prev, ev)
        results.append(WindowResult(w, warm, cold))
        prev = warm.params
    return results


def write_rolling_csv(results, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["window", "epoch", "f1_warm", "f1_cold"])
        for res in results:
            fw, fc = res.f1_curves()
            for e, (a, b) in enumerate(zip(fw, fc)):
                wr.writerow([res.window, e, "%.17g" % a, "%.17g" % b])


def perturb(feeder, ders, level, rng):
    """Scale every bus-step load and every interval-DER bound by U[1-level, 1+level]."""
    loads = feeder.loads * rng.uniform(1.0 - level, 1.0 + level, size=feeder.loads.shape)
    new_ders = []
    for der in ders:
        # same draw count for every DER keeps streams aligned across mixes
        f = rng.uniform(1.0 - level, 1.0 + level, size=feeder.T)
        if der.kind == INTERVAL:
            lo = der.p_min * f
            hi = der.p_max * f
            der = replace(der, p_min=np.minimum(lo, hi), p_max=np.maximum(lo, hi))
        new_ders.append(der)
    return replace(feeder, loads=loads), new_ders


def robustness_sweep(feeder, ders, levels, per_level_count, params, seed,
                     inflation=DEFAULT_INFLATION, max_retries=ROBUSTNESS_RETRIES):
    """Score nominal ``params`` on test sets relabeled under perturbed models.

    Each level draws its own scenario from a per-level stream; a scenario
    whose DER polytope is empty is redrawn up to ``max_retries`` times.
    The test points use the same ``seed`` at every level, so level 0
    reproduces the nominal test set exactly.
    """
    rows = []
    for level in levels:
        g = rng_mod.stream(seed, f"perturb:{level!r}")
        model = None
        retried = 0
        for attempt in range(max_retries + 1):
            f2, d2 = perturb(feeder, ders, level, g)
            try:
                model = assemble_compact(f2, d2)
                break
            except EmptyInterior as exc:
                retried += 1
                log.info("level %s scenario %d empty (%s); redrawing", level, attempt, exc.row_class)
        if model is None:
            rows.append({"level": level, "f1": float("nan"), "precision": float("nan"),
                         "recall": float("nan"), "scenarios_retried": retried, "aborted": True})
            continue
        test = make_test_set(model, per_level_count, seed, inflation)
        rep = score(params, test)
        rows.append({"level": level, "f1": rep.f1, "precision": rep.precision,
                     "recall": rep.recall, "scenarios_retried": retried, "aborted": False})
    return rows


def write_robustness_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["level", "f1", "precision", "recall", "scenarios_retried"])
        for r in rows:
            w.writerow(["%.17g" % r["level"], "%.17g" % r["f1"], "%.17g" % r["precision"],
                        "%.17g" % r["recall"], r["scenarios_retried"]])


def timing_benchmark(params, model, batch_size=1000, seed=0, oracle_samples=100, repeats=5):
    """Per-sample wall time of batch classification vs. one oracle LP."""
    if batch_size < 100:
        raise ValueError("batch_size must be at least 100")
    box = bounding_box(model)
    X = box.sample(rng_mod.stream(seed, "timing"), batch_size)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        classify(params, X)
        best = min(best, time.perf_counter() - t0)
    classify_per = best / batch_size
    pts = X[:min(oracle_samples, batch_size)]
    t0 = time.perf_counter()
    for q in pts:
        check_feasible(model, q)
    oracle_per = (time.perf_counter() - t0) / len(pts)
    return {"classify_per_sample_s": classify_per, "oracle_per_sample_s": oracle_per,
            "ratio": oracle_per / classify_per}
