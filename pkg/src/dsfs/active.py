"""Closed-loop training: sample a pool, filter by uncertainty, label, train.

Labels come from the exact oracle unless the query already lies in the
certified inner set (robust box plus hull of verified feasible samples), in
which case it is labeled feasible for free. Every oracle-feasible sample
enlarges the inner set.
"""

import logging
import os
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import inner as inner_mod
from . import rng as rng_mod
from .exceptions import EmptyPool, InvalidConfig
from .metrics import make_test_set, score
from .mlp import DEFAULT_HIDDEN, TrainConfig, classify, init_params, posterior, train_epoch, transfer_load, uncertainty
from .oracle import DEFAULT_INFLATION, Label, Provenance, SamplePoint, bounding_box, check_feasible
from .robust_box import solve_inner_box

log = logging.getLogger(__name__)

UNCERTAINTY = "uncertainty"
RANDOM = "random"


@dataclass
class ActiveConfig:
    pool_size: int = 20000
    init_labeled: int = 100
    per_epoch: int = 10
    epochs: int = 50
    label_budget: int = None  # cap on oracle calls
    seed: int = 0
    use_inner_box: bool = True
    use_hull_labeling: bool = True
    strategy: str = UNCERTAINTY
    inflation: float = DEFAULT_INFLATION
    eval_count: int = 1000
    hidden_layer_sizes: tuple = DEFAULT_HIDDEN
    freeze_prefix: int = 1
    reinit_each_epoch: bool = False

    def __post_init__(self):
        self.hidden_layer_sizes = tuple(self.hidden_layer_sizes)
        if self.strategy not in (UNCERTAINTY, RANDOM):
            raise InvalidConfig(f"unknown strategy {self.strategy!r}")
        if self.init_labeled > self.pool_size:
            raise InvalidConfig("init_labeled exceeds pool_size")
        if self.per_epoch < 1:
            raise InvalidConfig("per_epoch must be at least 1")
        if self.init_labeled < 0 or self.epochs < 0:
            raise InvalidConfig("counts must be nonnegative")


@dataclass
class LoopState:
    model: object
    cfg: ActiveConfig
    train_cfg: TrainConfig
    box: object  # oracle BoundingBox used for the pool
    pool: np.ndarray  # (N, T) unlabeled profiles, in pool-index order
    labeled: list
    inner: inner_mod.InnerSet
    params: object
    opt_state: object = None
    epoch: int = 0
    oracle_calls: int = 0
    hull_labels: int = 0
    select_rng: object = None
    warnings: list = field(default_factory=list)
    losses: list = field(default_factory=list)

    @property
    def budget_left(self):
        if self.cfg.label_budget is None:
            return np.inf
        return self.cfg.label_budget - self.oracle_calls

    def training_arrays(self):
        X = np.vstack([s.p0 for s in self.labeled])
        y = np.array([int(s.label) for s in self.labeled], dtype=float)
        return X, y


def _fresh_params(cfg, box):
    lo, hi = box.inflated
    half = np.where(hi > lo, 0.5 * (hi - lo), 1.0)
    sizes = (lo.size,) + tuple(cfg.hidden_layer_sizes) + (1,)
    return init_params(sizes, cfg.seed, 0.5 * (lo + hi), half)


def label_point(state, q):
    """Label ``q`` for free when it is an inner-set member, otherwise by oracle.

    Returns None when the oracle is needed but the budget is spent.
    """
    q = np.atleast_1d(np.asarray(q, dtype=float))
    if state.cfg.use_hull_labeling and inner_mod.is_member(state.inner, q):
        state.hull_labels += 1
        return SamplePoint(q, Label.FEASIBLE, Provenance.HULL)
    if state.budget_left <= 0:
        return None
    res = check_feasible(state.model, q)
    state.oracle_calls += 1
    if res.feasible:
        state.inner = inner_mod.grow(state.inner, [q])
    return SamplePoint(q, res.label, Provenance.ORACLE)


def _take(state, indices):
    """Label pool rows ``indices`` in the given order and move them out of the pool."""
    taken = []
    for i in indices:
        sp = label_point(state, state.pool[i])
        if sp is None:
            break
        state.labeled.append(sp)
        taken.append(i)
    if taken:
        state.pool = np.delete(state.pool, taken, axis=0)
    return len(taken)


def initialize(model, cfg, train_cfg=None, warm=None):
    """Draw the pool, seed the inner set and label the initial samples."""
    train_cfg = train_cfg or TrainConfig(seed=cfg.seed)
    box = bounding_box(model, cfg.inflation)
    pool = box.sample(rng_mod.stream(cfg.seed, "pool"), cfg.pool_size)
    warnings = []
    inner = inner_mod.InnerSet()
    if cfg.use_inner_box:
        ib = solve_inner_box(model)
        if ib.degenerate:
            warnings.append("DegenerateBoxWarning: robust box collapsed to a point")
            log.warning("robust inner box is degenerate; starting from an empty inner set")
        else:
            inner = inner_mod.from_box(ib.p0_minus, ib.p0_plus)
    if warm is not None:
        params = transfer_load(warm, cfg.freeze_prefix, n_inputs=model.T)
    else:
        params = _fresh_params(cfg, box)
    state = LoopState(model, cfg, train_cfg, box, pool, [], inner, params,
                      select_rng=rng_mod.stream(cfg.seed, "select"), warnings=warnings)
    if cfg.init_labeled:
        idx = rng_mod.stream(cfg.seed, "init").choice(cfg.pool_size, cfg.init_labeled, replace=False)
        _take(state, list(idx))
    return state


def select(state):
    """Pool indices to label next, most informative first."""
    k = min(state.cfg.per_epoch, state.pool.shape[0])
    if state.cfg.strategy == RANDOM:
        return list(state.select_rng.choice(state.pool.shape[0], k, replace=False))
    M = uncertainty(posterior(state.params, state.pool))
    # stable sort keeps lower pool index first among ties
    order = np.argsort(-M, kind="stable")
    return list(order[:k])


def run_epoch(state):
    """One filter-label-train cycle; returns the number of newly labeled points."""
    if state.pool.shape[0] == 0:
        raise EmptyPool("no unlabeled samples left")
    added = _take(state, select(state))
    if state.labeled:
        X, y = state.training_arrays()
        if state.cfg.reinit_each_epoch:
            state.params = _fresh_params(state.cfg, state.box)
            state.opt_state = None
        state.params, trace, state.opt_state = train_epoch(state.params, X, y, state.train_cfg, state.opt_state)
        state.losses.append(float(np.mean(trace)) if trace else float("nan"))
    else:
        state.losses.append(float("nan"))
    state.epoch += 1
    state.inner = inner_mod.redundancy_prune(state.inner)
    return added


@dataclass
class RunResult:
    params: object
    state: LoopState
    history: list
    initial: object = None  # EvalReport before any training, when an eval set is given


def _history_row(state, report):
    row = {"epoch": state.epoch}
    if report is not None:
        row.update(f1=report.f1, precision=report.precision, recall=report.recall)
    else:
        row.update(f1=float("nan"), precision=float("nan"), recall=float("nan"))
    row.update(oracle_calls=state.oracle_calls, hull_labels=state.hull_labels,
               mean_loss=state.losses[-1] if state.losses else float("nan"))
    return row


def run(model, cfg, train_cfg=None, warm=None, eval_set=None, checkpoint_dir=None, on_epoch=None):
    """Initialize, then run up to ``cfg.epochs`` epochs.

    Stops early when the pool is exhausted or the oracle budget is spent.
    ``eval_set`` defaults to ``cfg.eval_count`` oracle-labeled held-out
    samples (skipped when ``eval_count`` is 0).
    """
    if eval_set is None and cfg.eval_count:
        eval_set = make_test_set(model, cfg.eval_count, cfg.seed, cfg.inflation)
    state = initialize(model, cfg, train_cfg, warm)
    initial = score(state.params, eval_set) if eval_set else None
    history = []
    for _ in range(cfg.epochs):
        if state.pool.shape[0] == 0 or state.budget_left <= 0:
            break
        added = run_epoch(state)
        report = score(state.params, eval_set) if eval_set else None
        history.append(_history_row(state, report))
        if checkpoint_dir:
            state.params.save(os.path.join(checkpoint_dir, f"model_epoch{state.epoch}.json"))
        if on_epoch:
            on_epoch(state, history[-1])
        if added == 0:
            break
    return RunResult(state.params, state, history, initial)


class ActiveFlexibilityLearner(ClassifierMixin, BaseEstimator):
    """Estimator front end for the active learning loop.

    ``fit`` takes a :class:`~dsfs.network.CompactModel` instead of a data
    matrix: the training data is generated and labeled internally.
    ``predict``/``predict_proba`` then work on arrays of substation
    profiles like any scikit-learn classifier.
    """

    def __init__(self, pool_size=20000, init_labeled=100, per_epoch=10, epochs=50,
                 label_budget=None, strategy=UNCERTAINTY, use_inner_box=True,
                 use_hull_labeling=True, inflation=DEFAULT_INFLATION, eval_count=1000,
                 hidden_layer_sizes=DEFAULT_HIDDEN, learning_rate=1e-3, steps_per_epoch=300,
                 batch_size=None, weight_decay=0.0, freeze_prefix=1, random_state=0):
        self.pool_size = pool_size
        self.init_labeled = init_labeled
        self.per_epoch = per_epoch
        self.epochs = epochs
        self.label_budget = label_budget
        self.strategy = strategy
        self.use_inner_box = use_inner_box
        self.use_hull_labeling = use_hull_labeling
        self.inflation = inflation
        self.eval_count = eval_count
        self.hidden_layer_sizes = hidden_layer_sizes
        self.learning_rate = learning_rate
        self.steps_per_epoch = steps_per_epoch
        self.batch_size = batch_size
        self.weight_decay = weight_decay
        self.freeze_prefix = freeze_prefix
        self.random_state = random_state

    def configs(self):
        cfg = ActiveConfig(
            pool_size=self.pool_size, init_labeled=self.init_labeled, per_epoch=self.per_epoch,
            epochs=self.epochs, label_budget=self.label_budget, seed=self.random_state,
            use_inner_box=self.use_inner_box, use_hull_labeling=self.use_hull_labeling,
            strategy=self.strategy, inflation=self.inflation, eval_count=self.eval_count,
            hidden_layer_sizes=self.hidden_layer_sizes, freeze_prefix=self.freeze_prefix)
        tcfg = TrainConfig(learning_rate=self.learning_rate, steps_per_epoch=self.steps_per_epoch,
                           batch_size=self.batch_size, weight_decay=self.weight_decay,
                           seed=self.random_state)
        return cfg, tcfg

    def fit(self, model, y=None, warm_start=None, eval_set=None):
        cfg, tcfg = self.configs()
        result = run(model, cfg, tcfg, warm_start, eval_set)
        self.params_ = result.params
        self.history_ = result.history
        self.state_ = result.state
        self.inner_set_ = result.state.inner
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = model.T
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        P = posterior(self.params_, check_array(X))
        return np.column_stack([1.0 - P, P])

    def predict(self, X):
        check_is_fitted(self, "params_")
        return classify(self.params_, check_array(X))
