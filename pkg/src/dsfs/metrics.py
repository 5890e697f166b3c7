"""Held-out test sets and classification scores (feasible is the positive class)."""

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import rng as rng_mod
from .exceptions import EmptyTestSet, InvalidCount
from .mlp import classify
from .oracle import DEFAULT_INFLATION, bounding_box, label_batch, labels_vector, points_matrix


@dataclass
class EvalReport:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float
    accuracy: float
    timing: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def confusion_report(y_true, y_pred, timing=None):
    y_true = np.asarray(y_true).astype(int)
    y_pred = np.asarray(y_pred).astype(int)
    if y_true.size == 0:
        raise EmptyTestSet("no test samples")
    tp = int(np.sum((y_pred == 1) & (y_true == 1)))
    fp = int(np.sum((y_pred == 1) & (y_true == 0)))
    fn = int(np.sum((y_pred == 0) & (y_true == 1)))
    tn = int(np.sum((y_pred == 0) & (y_true == 0)))
    return report_from_counts(tp, fp, fn, tn, timing)


def report_from_counts(tp, fp, fn, tn, timing=None):
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    denom = 2 * tp + fp + fn
    f1 = 2 * tp / denom if denom else 0.0
    total = tp + fp + fn + tn
    accuracy = (tp + tn) / total if total else 0.0
    return EvalReport(tp, fp, fn, tn, precision, recall, f1, accuracy, dict(timing or {}))


def make_test_set(model, count, seed, inflation=DEFAULT_INFLATION, box=None):
    """``count`` uniform profiles from the inflated bounding box, oracle-labeled.

    Draws come from the ``"test"`` stream of ``seed``, which no training
    pool ever uses.
    """
    if count < 1:
        raise InvalidCount("a test set needs at least one sample")
    box = box or bounding_box(model, inflation)
    pts = box.sample(rng_mod.stream(seed, "test"), count)
    return label_batch(model, pts)


def score(params, test):
    """Confusion counts of ``params`` against labeled samples, with timing."""
    if not test:
        raise EmptyTestSet("no test samples")
    X = points_matrix(test)
    y = labels_vector(test)
    if np.any(y < 0):
        raise ValueError("test samples must be labeled")
    t0 = time.perf_counter()
    pred = classify(params, X)
    dt = time.perf_counter() - t0
    oracle_t = [s.wall_time for s in test if s.wall_time]
    timing = {"classify_per_sample_s": dt / len(test),
              "oracle_per_sample_s": float(np.mean(oracle_t)) if oracle_t else float("nan")}
    return confusion_report(y, pred, timing)
