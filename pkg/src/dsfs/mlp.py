"""Multilayer perceptron posterior ``f : R^T -> (0, 1)`` trained with Adam.

Hidden layers use ReLU, the output unit a logistic sigmoid, and training
minimizes mean binary cross-entropy. Inputs are normalized per coordinate
as ``(x - center) / half_width`` before the first layer. Individual layers
can be frozen for transfer learning across time windows.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import rng as rng_mod
from . import serialize
from .exceptions import (
    ArchitectureMismatch,
    DimensionMismatch,
    EmptyDataset,
    InvalidArchitecture,
    NonFiniteLoss,
    OutOfRange,
)

DEFAULT_HIDDEN = (64, 64, 64, 64)
LOGIT_CLIP = 30.0


@dataclass
class MlpParams:
    layer_sizes: tuple
    weights: list  # weights[l] has shape (layer_sizes[l], layer_sizes[l+1])
    biases: list
    center: np.ndarray
    half_width: np.ndarray
    frozen: list
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        _check_sizes(self.layer_sizes)
        self.center = np.asarray(self.center, dtype=float)
        self.half_width = np.asarray(self.half_width, dtype=float)
        if self.center.shape != (self.n_inputs,) or self.half_width.shape != (self.n_inputs,):
            raise InvalidArchitecture("normalization does not match the input width")
        if np.any(self.half_width <= 0):
            raise InvalidArchitecture("normalization half-widths must be positive")
        for l, (a, b) in enumerate(zip(self.layer_sizes[:-1], self.layer_sizes[1:])):
            if self.weights[l].shape != (a, b) or self.biases[l].shape != (b,):
                raise InvalidArchitecture(f"layer {l + 1} has inconsistent shapes")
        if len(self.frozen) != self.n_layers:
            raise InvalidArchitecture("need one frozen flag per layer")

    @property
    def n_inputs(self):
        return self.layer_sizes[0]

    @property
    def n_layers(self):
        return len(self.layer_sizes) - 1

    @property
    def n_params(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self):
        return replace(self, weights=[w.copy() for w in self.weights],
                       biases=[b.copy() for b in self.biases],
                       center=self.center.copy(), half_width=self.half_width.copy(),
                       frozen=list(self.frozen), meta=dict(self.meta))

    def to_dict(self):
        return {
            "layer_sizes": list(self.layer_sizes),
            "weights": [w for w in self.weights],
            "biases": [b for b in self.biases],
            "norm": {"center": self.center, "half_width": self.half_width},
            "frozen": [bool(f) for f in self.frozen],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d):
        sizes = d["layer_sizes"]
        ws = [np.asarray(w, dtype=float).reshape(a, b) for w, a, b in zip(d["weights"], sizes[:-1], sizes[1:])]
        bs = [np.asarray(b, dtype=float).reshape(-1) for b in d["biases"]]
        return cls(sizes, ws, bs, d["norm"]["center"], d["norm"]["half_width"],
                   list(d["frozen"]), dict(d.get("meta", {})))

    def save(self, path):
        serialize.dump(self.to_dict(), path)

    @classmethod
    def load(cls, path):
        return cls.from_dict(serialize.load(path))


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    steps_per_epoch: int = 300
    batch_size: int = None  # None means full batch
    weight_decay: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")
        if self.steps_per_epoch < 0:
            raise ValueError("steps_per_epoch must be nonnegative")


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    epochs: int = 0


def _check_sizes(sizes):
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise InvalidArchitecture(f"invalid layer sizes {sizes}")
    if sizes[-1] != 1:
        raise InvalidArchitecture("the output layer must have one unit")


def init_params(layer_sizes, seed, center=None, half_width=None):
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    sizes = tuple(int(s) for s in layer_sizes)
    _check_sizes(sizes)
    g = rng_mod.stream(seed, "mlp-init")
    ws, bs = [], []
    for a, b in zip(sizes[:-1], sizes[1:]):
        lim = 1.0 / np.sqrt(a)
        ws.append(g.uniform(-lim, lim, size=(a, b)))
        bs.append(np.zeros(b))
    T = sizes[0]
    center = np.zeros(T) if center is None else center
    half_width = np.ones(T) if half_width is None else half_width
    return MlpParams(sizes, ws, bs, center, half_width, [False] * (len(sizes) - 1),
                     {"seed": int(seed), "epochs": 0})


def zero_params(layer_sizes, center=None, half_width=None):
    """All-zero network; its posterior is exactly 0.5 everywhere."""
    p = init_params(layer_sizes, 0, center, half_width)
    for w, b in zip(p.weights, p.biases):
        w[...] = 0.0
        b[...] = 0.0
    return p


def _check_batch(params, X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != params.n_inputs:
        raise DimensionMismatch(f"batch has shape {X.shape}, expected (*, {params.n_inputs})")
    return X


def _forward(params, X):
    """Return (pre-activations, activations); the last pre-activation is the logit."""
    a = (X - params.center) / params.half_width
    acts = [a]
    pres = []
    last = params.n_layers - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w + b
        pres.append(z)
        if l < last:
            a = np.maximum(z, 0.0)
            acts.append(a)
    return pres, acts


def logits(params, X):
    X = _check_batch(params, X)
    return _forward(params, X)[0][-1][:, 0]


def _sigmoid(z):
    return expit(np.clip(z, -LOGIT_CLIP, LOGIT_CLIP))


def posterior(params, X):
    """P(feasible | p0) for each row of ``X``."""
    return _sigmoid(logits(params, X))


def classify(params, X):
    """1 where the posterior is strictly above 0.5."""
    return (posterior(params, X) > 0.5).astype(int)


def uncertainty(P):
    """2 * min(P, 1 - P): 1 at P = 0.5, 0 at certainty."""
    P = np.asarray(P, dtype=float)
    if np.any(P < 0) | np.any(P > 1) | np.any(~np.isfinite(P)):
        raise OutOfRange("posteriors must lie in [0, 1]")
    return np.where(P > 0.5, 2.0 * (1.0 - P), 2.0 * P)


def loss_and_grads(params, X, y, weight_decay=0.0):
    """Mean binary cross-entropy and its gradients for every layer."""
    pres, acts = _forward(params, X)
    z = pres[-1][:, 0]
    n = X.shape[0]
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    if weight_decay:
        loss += 0.5 * weight_decay * sum(float(np.sum(w * w)) for w in params.weights)
    # d loss / d logit
    delta = (expit(z) - y)[:, None] / n
    gw = [None] * params.n_layers
    gb = [None] * params.n_layers
    for l in range(params.n_layers - 1, -1, -1):
        gw[l] = acts[l].T @ delta
        gb[l] = delta.sum(axis=0)
        if weight_decay:
            gw[l] = gw[l] + weight_decay * params.weights[l]
        if l > 0:
            delta = (delta @ params.weights[l].T) * (pres[l - 1] > 0)
    return loss, gw, gb


def new_adam_state(params):
    m = [(np.zeros_like(w), np.zeros_like(b)) for w, b in zip(params.weights, params.biases)]
    v = [(np.zeros_like(w), np.zeros_like(b)) for w, b in zip(params.weights, params.biases)]
    return AdamState(m, v)


def train_epoch(params, X, y, cfg, state=None):
    """Run ``cfg.steps_per_epoch`` Adam steps on mean cross-entropy.

    Returns ``(params', loss_trace, state')``. The input ``params`` is not
    modified; frozen layers come back bit-identical.
    """
    X = _check_batch(params, X)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.shape[0] == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    if y.shape[0] != X.shape[0]:
        raise DimensionMismatch("labels and samples differ in count")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    params = params.copy()
    if state is None:
        state = new_adam_state(params)
    else:
        state = AdamState([(a.copy(), b.copy()) for a, b in state.m],
                          [(a.copy(), b.copy()) for a, b in state.v], state.step, state.epochs)
    g = rng_mod.stream(cfg.seed + state.epochs, "minibatch")
    b1, b2, lr, eps = cfg.adam_beta1, cfg.adam_beta2, cfg.learning_rate, cfg.adam_eps
    trace = []
    n = X.shape[0]
    trainable = [l for l in range(params.n_layers) if not params.frozen[l]]
    for _ in range(cfg.steps_per_epoch):
        if cfg.batch_size and cfg.batch_size < n:
            idx = g.choice(n, size=cfg.batch_size, replace=False)
            Xb, yb = X[idx], y[idx]
        else:
            Xb, yb = X, y
        # divergence is reported below, not as numpy warnings
        with np.errstate(over="ignore", invalid="ignore"):
            loss, gw, gb = loss_and_grads(params, Xb, yb, cfg.weight_decay)
        if not np.isfinite(loss):
            raise NonFiniteLoss("training loss diverged; lower the learning rate")
        trace.append(loss)
        if not trainable:
            continue
        state.step += 1
        c1 = 1.0 - b1 ** state.step
        c2 = 1.0 - b2 ** state.step
        for l in trainable:
            for k, grad, param in ((0, gw[l], params.weights[l]), (1, gb[l], params.biases[l])):
                m = state.m[l][k]
                v = state.v[l][k]
                m *= b1
                m += (1.0 - b1) * grad
                v *= b2
                v += (1.0 - b2) * grad * grad
                param -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    state.epochs += 1
    params.meta["epochs"] = int(params.meta.get("epochs", 0)) + 1
    return params, trace, state


def transfer_load(checkpoint, freeze_prefix=1, n_inputs=None):
    """Warm start from ``checkpoint`` with the first ``freeze_prefix`` layers frozen."""
    if n_inputs is not None and checkpoint.n_inputs != n_inputs:
        raise ArchitectureMismatch(
            f"checkpoint expects {checkpoint.n_inputs} inputs, model has {n_inputs}")
    if not 0 <= freeze_prefix <= checkpoint.n_layers:
        raise ArchitectureMismatch("freeze_prefix exceeds the number of layers")
    p = checkpoint.copy()
    p.frozen = [l < freeze_prefix for l in range(p.n_layers)]
    p.meta["warm_start"] = True
    p.meta["frozen_layers"] = int(freeze_prefix)
    return p


class FlexibilityClassifier(ClassifierMixin, BaseEstimator):
    """scikit-learn style wrapper around the MLP posterior.

    ``fit`` trains ``max_epochs`` epochs of ``steps_per_epoch`` Adam steps;
    ``partial_fit`` runs one more epoch, keeping optimizer state. Labels
    must be 0 (infeasible) or 1 (feasible).

    Parameters
    ----------
    hidden_layer_sizes : tuple of int
    learning_rate, beta1, beta2, epsilon : float
        Adam settings.
    steps_per_epoch : int
    batch_size : int or None
        None trains full batch.
    max_epochs : int
    weight_decay : float
    center, half_width : array-like or None
        Input normalization. When None it is taken from the training data
        range.
    random_state : int
    """

    def __init__(self, hidden_layer_sizes=DEFAULT_HIDDEN, learning_rate=1e-3, beta1=0.9,
                 beta2=0.999, epsilon=1e-8, steps_per_epoch=300, batch_size=None,
                 max_epochs=1, weight_decay=0.0, center=None, half_width=None, random_state=0):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.steps_per_epoch = steps_per_epoch
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.weight_decay = weight_decay
        self.center = center
        self.half_width = half_width
        self.random_state = random_state

    def _train_config(self):
        return TrainConfig(self.learning_rate, self.beta1, self.beta2, self.epsilon,
                           self.steps_per_epoch, self.batch_size, self.weight_decay,
                           self.random_state)

    def _init(self, X):
        if self.center is None or self.half_width is None:
            lo, hi = X.min(axis=0), X.max(axis=0)
            center = 0.5 * (lo + hi)
            half = np.where(hi > lo, 0.5 * (hi - lo), 1.0)
        else:
            center = np.asarray(self.center, dtype=float)
            half = np.asarray(self.half_width, dtype=float)
        sizes = (X.shape[1],) + tuple(self.hidden_layer_sizes) + (1,)
        self.params_ = init_params(sizes, self.random_state, center, half)
        self.state_ = None
        self.loss_curve_ = []
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self._init(X)
        for _ in range(self.max_epochs):
            self._epoch(X, y)
        return self

    def partial_fit(self, X, y):
        X, y = check_X_y(X, y)
        if not hasattr(self, "params_"):
            self._init(X)
        self._epoch(X, y)
        return self

    def _epoch(self, X, y):
        self.params_, trace, self.state_ = train_epoch(self.params_, X, y, self._train_config(), self.state_)
        self.loss_curve_.extend(trace)

    @classmethod
    def from_params(cls, params, **kwargs):
        """Wrap existing parameters, e.g. a loaded checkpoint."""
        est = cls(hidden_layer_sizes=params.layer_sizes[1:-1], center=params.center,
                  half_width=params.half_width, **kwargs)
        est.params_ = params
        est.state_ = None
        est.loss_curve_ = []
        est.classes_ = np.array([0, 1])
        est.n_features_in_ = params.n_inputs
        return est

    def decision_function(self, X):
        check_is_fitted(self, "params_")
        return logits(self.params_, check_array(X))

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        P = posterior(self.params_, check_array(X))
        return np.column_stack([1.0 - P, P])

    def predict(self, X):
        check_is_fitted(self, "params_")
        return classify(self.params_, check_array(X))
