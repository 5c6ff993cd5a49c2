"""Black-box predictors and from-scratch reference classifiers.

Every model owns a standardising scaler fitted on its training rows, so
callers always score vectors in original feature units. ``score`` returns
``P(y = 1)``; ``classify`` thresholds it at 0.5.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .data import Dataset

__all__ = [
    "ConvergenceWarning",
    "Predictor",
    "Scaler",
    "LogisticModel",
    "MLPModel",
    "RegressionTree",
    "GradBoostModel",
    "LinearSVCModel",
    "train_logreg",
    "train_mlp",
    "train_gradboost",
    "train_linear_svc",
    "mlp_loss_and_grad",
    "ModelConfig",
    "TrainReport",
    "cross_validate",
    "stratified_folds",
    "grid_search",
    "f1_accuracy",
    "model_to_json",
    "model_from_json",
    "MODEL_FORMAT",
]

MODEL_FORMAT = "cfexplain-model"
MODEL_FORMAT_VERSION = 1


class ConvergenceWarning(UserWarning):
    """A training loop hit its iteration cap before meeting its tolerance."""


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X) -> "Scaler":
        X = np.asarray(X, dtype=float)
        std = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(std > 0, std, 1.0))

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.mean) / self.std

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["mean"], dtype=float), np.array(d["std"], dtype=float))


class Predictor:
    """Opaque scorer mapping a feature vector (or matrix of rows) to P(y=1)."""

    kind = "predictor"

    def score(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return float(self._score_rows(x[None, :])[0])
        return self._score_rows(x)

    def classify(self, x):
        s = self.score(x)
        if np.ndim(s) == 0:
            return int(s >= 0.5)
        return (s >= 0.5).astype(np.int64)

    def _score_rows(self, X) -> np.ndarray:
        raise NotImplementedError

    def _params(self) -> dict:
        raise NotImplementedError


class FunctionPredictor(Predictor):
    """Wrap a plain callable ``rows -> scores``. Not serialisable."""

    kind = "function"

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray]):
        self.fn = fn

    def _score_rows(self, X):
        return np.clip(np.asarray(self.fn(X), dtype=float), 0.0, 1.0)


# -- logistic regression ----------------------------------------------------


class LogisticModel(Predictor):
    kind = "logreg"

    def __init__(self, scaler: Scaler, coef, intercept: float):
        self.scaler = scaler
        self.coef = np.asarray(coef, dtype=float)
        self.intercept = float(intercept)
        # folded into raw units so single-vector scoring is one dot product
        self._w_raw = self.coef / scaler.std
        self._b_raw = self.intercept - float(self._w_raw @ scaler.mean)

    def decision(self, X):
        return np.asarray(X, dtype=float) @ self._w_raw + self._b_raw

    def score(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            z = float(x @ self._w_raw) + self._b_raw
            return 0.5 * (1.0 + math.tanh(0.5 * z))
        return self._score_rows(x)

    def _score_rows(self, X):
        return _sigmoid(self.decision(X))

    def _params(self):
        return {"coef": self.coef.tolist(), "intercept": self.intercept}

    @classmethod
    def _from_params(cls, scaler, params):
        return cls(scaler, params["coef"], params["intercept"])


def _class_weights(y, balanced: bool) -> np.ndarray:
    if not balanced:
        return np.ones(y.size)
    counts = np.bincount(y, minlength=2).astype(float)
    per_class = y.size / (2.0 * counts)
    return per_class[y]


def train_logreg(
    data: Dataset,
    l2: float = 1e-3,
    balanced: bool = True,
    lr: float = 0.5,
    max_iter: int = 5000,
    tol: float = 1e-8,
    seed: int = 0,
) -> LogisticModel:
    """Full-batch gradient descent on the (class-weighted) log loss.

    Stops when the loss changes by less than ``tol`` between iterations.
    ``seed`` is accepted for interface uniformity; the fit is deterministic.
    """
    if l2 < 0:
        raise ValueError("l2 must be >= 0")
    scaler = Scaler.fit(data.records)
    X = scaler.transform(data.records)
    y = data.targets.astype(float)
    sw = _class_weights(data.targets, balanced)
    sw = sw / sw.sum()
    w = np.zeros(X.shape[1])
    b = 0.0
    prev = np.inf
    converged = False
    for _ in range(max_iter):
        z = X @ w + b
        prob = _sigmoid(z)
        # log(1 + e^z) - y z, stable form
        loss = float(sw @ (np.logaddexp(0.0, z) - y * z)) + 0.5 * l2 * float(w @ w)
        if abs(prev - loss) < tol:
            converged = True
            break
        prev = loss
        r = sw * (prob - y)
        w -= lr * (X.T @ r + l2 * w)
        b -= lr * r.sum()
    if not converged and max_iter > 0:
        warnings.warn(f"logistic regression stopped after {max_iter} iterations", ConvergenceWarning)
    return LogisticModel(scaler, w, b)


# -- multi-layer perceptron ---------------------------------------------------


class MLPModel(Predictor):
    """One hidden layer with logistic units and a logistic output unit."""

    kind = "mlp"

    def __init__(self, scaler: Scaler, W1, b1, w2, b2: float):
        self.scaler = scaler
        self.W1 = np.asarray(W1, dtype=float)
        self.b1 = np.asarray(b1, dtype=float)
        self.w2 = np.asarray(w2, dtype=float)
        self.b2 = float(b2)
        self._W1_raw = self.W1 / scaler.std[:, None]
        self._b1_raw = self.b1 - scaler.mean @ self._W1_raw

    def score(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            h = _sigmoid(x @ self._W1_raw + self._b1_raw)
            z = float(h @ self.w2) + self.b2
            return 0.5 * (1.0 + math.tanh(0.5 * z))
        return self._score_rows(x)

    def _score_rows(self, X):
        H = _sigmoid(np.asarray(X, dtype=float) @ self._W1_raw + self._b1_raw)
        return _sigmoid(H @ self.w2 + self.b2)

    def _params(self):
        return {
            "W1": self.W1.tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.tolist(),
            "b2": self.b2,
        }

    @classmethod
    def _from_params(cls, scaler, params):
        return cls(scaler, params["W1"], params["b1"], params["w2"], params["b2"])


def _mlp_unpack(theta, p, h):
    i = 0
    W1 = theta[i : i + p * h].reshape(p, h)
    i += p * h
    b1 = theta[i : i + h]
    i += h
    w2 = theta[i : i + h]
    b2 = theta[i + h]
    return W1, b1, w2, b2


def mlp_loss_and_grad(theta, X, y, hidden_units: int, l2: float = 0.0, sample_weight=None):
    """Mean cross-entropy (+ L2 on weights) and its gradient w.r.t. the flat parameters.

    Layout of ``theta``: ``W1`` (p x h, row-major), ``b1``, ``w2``, ``b2``.
    """
    n, p = X.shape
    W1, b1, w2, b2 = _mlp_unpack(theta, p, hidden_units)
    sw = np.full(n, 1.0 / n) if sample_weight is None else sample_weight / sample_weight.sum()
    H = _sigmoid(X @ W1 + b1)
    z = H @ w2 + b2
    loss = float(sw @ (np.logaddexp(0.0, z) - y * z))
    loss += 0.5 * l2 * (float((W1 * W1).sum()) + float(w2 @ w2))
    dz = sw * (_sigmoid(z) - y)
    g_w2 = H.T @ dz + l2 * w2
    g_b2 = dz.sum()
    dH = np.outer(dz, w2) * H * (1.0 - H)
    g_W1 = X.T @ dH + l2 * W1
    g_b1 = dH.sum(axis=0)
    return loss, np.concatenate([g_W1.ravel(), g_b1, g_w2, [g_b2]])


def train_mlp(
    data: Dataset,
    hidden_units: int = 22,
    l2: float = 1e-4,
    lr: float = 0.5,
    epochs: int = 200,
    batch_size: int = 64,
    momentum: float = 0.9,
    seed: int = 0,
) -> MLPModel:
    """Mini-batch gradient descent with momentum, fixed seed."""
    if hidden_units < 1:
        raise ValueError("hidden_units must be >= 1")
    rng = np.random.default_rng(seed)
    scaler = Scaler.fit(data.records)
    X = scaler.transform(data.records)
    y = data.targets.astype(float)
    n, p = X.shape
    h = hidden_units
    limit = math.sqrt(6.0 / (p + h))
    theta = np.concatenate(
        [rng.uniform(-limit, limit, p * h), np.zeros(h), rng.uniform(-limit, limit, h), [0.0]]
    )
    velocity = np.zeros_like(theta)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            loss, grad = mlp_loss_and_grad(theta, X[idx], y[idx], h, l2)
            if not np.isfinite(loss):
                raise FloatingPointError("MLP loss became non-finite; lower the learning rate")
            velocity = momentum * velocity - lr * grad
            theta = theta + velocity
    W1, b1, w2, b2 = _mlp_unpack(theta, p, h)
    return MLPModel(scaler, W1.copy(), b1.copy(), w2.copy(), b2)


# -- gradient boosting ----------------------------------------------------------


class RegressionTree:
    """Least-squares regression tree stored as flat node arrays."""

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)

    def apply(self, X) -> np.ndarray:
        """Leaf index of every row."""
        X = np.atleast_2d(X)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            nd = node[rows]
            go_left = X[rows, self.feature[nd]] <= self.threshold[nd]
            node[rows] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return node

    def predict(self, X):
        return self.value[self.apply(X)]

    def to_dict(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["feature"], d["threshold"], d["left"], d["right"], d["value"])

    @classmethod
    def fit(cls, X, target, max_depth: int, min_samples_leaf: int = 1) -> "RegressionTree":
        feature, threshold, left, right, value = [], [], [], [], []

        def new_node(rows):
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(float(target[rows].mean()))
            return len(feature) - 1

        root_rows = np.arange(X.shape[0])
        stack = [(new_node(root_rows), root_rows, 0)]
        while stack:
            node, rows, depth = stack.pop()
            if depth >= max_depth or rows.size < 2 * min_samples_leaf:
                continue
            split = _best_split(X[rows], target[rows], min_samples_leaf)
            if split is None:
                continue
            j, thr = split
            mask = X[rows, j] <= thr
            feature[node], threshold[node] = j, thr
            lrows, rrows = rows[mask], rows[~mask]
            left[node] = new_node(lrows)
            right[node] = new_node(rrows)
            stack.append((right[node], rrows, depth + 1))
            stack.append((left[node], lrows, depth + 1))
        return cls(feature, threshold, left, right, value)


def _best_split(X, t, min_leaf):
    n = t.size
    best_gain, best = 1e-12, None
    total = t.sum()
    base = total * total / n
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        csum = np.cumsum(t[order])[:-1]
        nl = np.arange(1, n)
        valid = xs[1:] > xs[:-1]
        valid &= (nl >= min_leaf) & (n - nl >= min_leaf)
        if not valid.any():
            continue
        gain = csum**2 / nl + (total - csum) ** 2 / (n - nl) - base
        gain = np.where(valid, gain, -np.inf)
        k = int(np.argmax(gain))
        if gain[k] > best_gain:
            best_gain = gain[k]
            best = (j, 0.5 * (xs[k] + xs[k + 1]))
    return best


class GradBoostModel(Predictor):
    """Boosted trees; probability is ``sigmoid(2 F)`` for ensemble margin ``F``."""

    kind = "gradboost"

    def __init__(self, scaler: Scaler, init: float, learning_rate: float, trees: Sequence[RegressionTree]):
        self.scaler = scaler
        self.init = float(init)
        self.learning_rate = float(learning_rate)
        self.trees = list(trees)
        self._forest = None

    def _packed(self):
        # every tree padded to a common node count, so all trees descend together
        if getattr(self, "_forest", None) is None:
            T = len(self.trees)
            m = max(t.feature.size for t in self.trees)
            feature = np.full((T, m), -1, dtype=np.int64)
            threshold = np.zeros((T, m))
            left = np.zeros((T, m), dtype=np.int64)
            right = np.zeros((T, m), dtype=np.int64)
            value = np.zeros((T, m))
            for i, t in enumerate(self.trees):
                k = t.feature.size
                feature[i, :k], threshold[i, :k], value[i, :k] = t.feature, t.threshold, t.value
                left[i, :k], right[i, :k] = t.left, t.right
            self._forest = (feature, threshold, left, right, value)
        return self._forest

    def margin(self, X, n_trees: int | None = None):
        Z = self.scaler.transform(np.atleast_2d(X))
        feature, threshold, left, right, value = (a[:n_trees] for a in self._packed())
        T, m = feature.shape
        n, p = Z.shape
        # flat indices: node j of tree t is t * m + j, feature f of row i is i * p + f
        offset = np.arange(T) * m
        flat = [a.ravel() for a in (feature, threshold, left, right, value)]
        feature, threshold, left, right, value = flat
        node = np.broadcast_to(offset, (n, T)).copy()
        row = (np.arange(n) * p)[:, None]
        Zf = Z.ravel()
        while True:
            f = feature[node]
            leaf = f < 0
            if leaf.all():
                break
            x = Zf[row + np.maximum(f, 0)]
            step = np.where(x <= threshold[node], left[node], right[node]) + offset
            node = np.where(leaf, node, step)
        return self.init + self.learning_rate * value[node].sum(axis=1)

    def _score_rows(self, X):
        return _sigmoid(2.0 * self.margin(X))

    def _params(self):
        return {
            "init": self.init,
            "learning_rate": self.learning_rate,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def _from_params(cls, scaler, params):
        trees = [RegressionTree.from_dict(t) for t in params["trees"]]
        return cls(scaler, params["init"], params["learning_rate"], trees)


def exponential_loss(y, F) -> float:
    """Mean of ``exp(-y_pm F)`` with ``y_pm`` in {-1, +1}."""
    return float(np.mean(np.exp(-(2.0 * y - 1.0) * F)))


def train_gradboost(
    data: Dataset,
    trees: int = 100,
    depth: int = 3,
    loss: str = "exponential",
    learning_rate: float = 0.1,
    min_samples_leaf: int = 1,
    seed: int = 0,
) -> GradBoostModel:
    """Gradient boosting of regression trees on the exponential loss.

    Each tree fits the negative gradient; leaf values take one Newton step,
    which never increases the training loss for ``learning_rate <= 1``.
    """
    if loss != "exponential":
        raise ValueError("only the exponential loss is supported")
    if trees < 1 or depth < 1:
        raise ValueError("trees and depth must be >= 1")
    if np.all(data.records == data.records[0]):
        raise ValueError("degenerate data: every row is identical, no split exists")
    scaler = Scaler.fit(data.records)
    X = scaler.transform(data.records)
    y = data.targets.astype(float)
    ypm = 2.0 * y - 1.0
    prior = y.mean()
    init = 0.5 * math.log(prior / (1.0 - prior))
    F = np.full(y.size, init)
    fitted = []
    for _ in range(trees):
        w = np.exp(-ypm * F)
        residual = ypm * w
        tree = RegressionTree.fit(X, residual, depth, min_samples_leaf)
        leaves = tree.apply(X)
        num = np.bincount(leaves, weights=residual, minlength=tree.value.size)
        den = np.bincount(leaves, weights=w, minlength=tree.value.size)
        values = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
        tree.value = values
        F = F + learning_rate * values[leaves]
        fitted.append(tree)
    return GradBoostModel(scaler, init, learning_rate, fitted)


# -- linear SVM -----------------------------------------------------------------


class LinearSVCModel(Predictor):
    """Linear SVM whose margin is mapped to a probability by a fitted logistic."""

    kind = "linear_svc"

    def __init__(self, scaler: Scaler, coef, intercept: float, platt_a: float, platt_b: float):
        self.scaler = scaler
        self.coef = np.asarray(coef, dtype=float)
        self.intercept = float(intercept)
        self.platt_a = float(platt_a)
        self.platt_b = float(platt_b)
        self._w_raw = self.coef / scaler.std
        self._b_raw = self.intercept - float(self._w_raw @ scaler.mean)

    def decision(self, X):
        return np.asarray(X, dtype=float) @ self._w_raw + self._b_raw

    def calibrate(self, margin):
        return _sigmoid(self.platt_a * np.asarray(margin, dtype=float) + self.platt_b)

    def score(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            m = float(x @ self._w_raw) + self._b_raw
            return 0.5 * (1.0 + math.tanh(0.5 * (self.platt_a * m + self.platt_b)))
        return self._score_rows(x)

    def _score_rows(self, X):
        return self.calibrate(self.decision(X))

    def _params(self):
        return {
            "coef": self.coef.tolist(),
            "intercept": self.intercept,
            "platt_a": self.platt_a,
            "platt_b": self.platt_b,
        }

    @classmethod
    def _from_params(cls, scaler, params):
        return cls(scaler, params["coef"], params["intercept"], params["platt_a"], params["platt_b"])


def _platt_fit(margin, y, iters: int = 100):
    """Newton's method for ``P(y=1) = sigmoid(a m + b)``, with Platt's smoothed targets."""
    n_pos, n_neg = y.sum(), y.size - y.sum()
    t = np.where(y == 1, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))
    a, b = 1.0, 0.0
    for _ in range(iters):
        p = _sigmoid(a * margin + b)
        g = np.array([((p - t) * margin).sum(), (p - t).sum()])
        s = p * (1 - p) + 1e-12
        H = np.array([[(s * margin * margin).sum(), (s * margin).sum()], [(s * margin).sum(), s.sum()]])
        H += 1e-9 * np.eye(2)
        da, db = np.linalg.solve(H, g)
        a, b = a - da, b - db
        if abs(da) + abs(db) < 1e-10:
            break
    return float(a), float(b)


def train_linear_svc(
    data: Dataset,
    c: float = 0.001,
    balanced: bool = True,
    max_iter: int = 2000,
    lr: float = 1.0,
    tol: float = 1e-8,
    seed: int = 0,
) -> LinearSVCModel:
    """Subgradient descent on ``0.5 |w|^2 + C sum_i c_i hinge(y_i f(x_i))``.

    The step shrinks as ``lr / sqrt(t)`` and the best iterate by objective
    value is kept. Scores are calibrated on the training margins.
    """
    if c <= 0:
        raise ValueError("c must be > 0")
    scaler = Scaler.fit(data.records)
    X = scaler.transform(data.records)
    y = data.targets
    ypm = 2.0 * y - 1.0
    cw = c * _class_weights(y, balanced)
    w = np.zeros(X.shape[1])
    b = 0.0
    best = (np.inf, w.copy(), b)
    stale = 0
    for t in range(1, max_iter + 1):
        m = ypm * (X @ w + b)
        hinge = np.maximum(0.0, 1.0 - m)
        obj = 0.5 * float(w @ w) + float(cw @ hinge)
        if obj < best[0] - tol:
            best = (obj, w.copy(), b)
            stale = 0
        else:
            stale += 1
            if stale > 200:
                break
        active = m < 1.0
        coeff = cw * ypm * active
        gw = w - X.T @ coeff
        gb = -coeff.sum()
        eta = lr / ((1.0 + cw.sum()) * math.sqrt(t))
        w = w - eta * gw
        b = b - eta * gb
    else:
        warnings.warn(f"linear SVC stopped after {max_iter} iterations", ConvergenceWarning)
    _, w, b = best
    margin = X @ w + b
    a, pb = _platt_fit(margin, y.astype(float))
    return LinearSVCModel(scaler, w, b, a, pb)


# -- persistence ----------------------------------------------------------------

_KINDS = {cls.kind: cls for cls in (LogisticModel, MLPModel, GradBoostModel, LinearSVCModel)}


def model_to_json(model: Predictor) -> str:
    if model.kind not in _KINDS:
        raise TypeError(f"model kind {model.kind!r} is not serialisable")
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_FORMAT_VERSION,
        "kind": model.kind,
        "scaler": model.scaler.to_dict(),
        "params": model._params(),
    }
    return json.dumps(doc, sort_keys=True)


def model_from_json(text: str) -> Predictor:
    doc = json.loads(text)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError("not a cfexplain model document")
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model document version {doc.get('version')}")
    cls = _KINDS.get(doc["kind"])
    if cls is None:
        raise ValueError(f"unknown model kind {doc['kind']!r}")
    return cls._from_params(Scaler.from_dict(doc["scaler"]), doc["params"])


# -- evaluation -----------------------------------------------------------------

TRAINERS: dict[str, Callable[..., Predictor]] = {
    "logreg": train_logreg,
    "mlp": train_mlp,
    "gradboost": train_gradboost,
    "linear_svc": train_linear_svc,
}


@dataclass(frozen=True)
class ModelConfig:
    """A model family plus hyperparameters; calling it trains on a Dataset."""

    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in TRAINERS:
            raise ValueError(f"unknown model kind {self.kind!r}; choose from {sorted(TRAINERS)}")

    def __call__(self, data: Dataset) -> Predictor:
        return TRAINERS[self.kind](data, seed=self.seed, **dict(self.params))

    def describe(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params), "seed": self.seed}


@dataclass(frozen=True)
class TrainReport:
    f1: float
    accuracy: float
    folds: int
    hyperparams: Mapping[str, Any]

    def to_dict(self):
        return {
            "f1": self.f1,
            "accuracy": self.accuracy,
            "folds": self.folds,
            "hyperparams": dict(self.hyperparams),
        }


def f1_accuracy(y_true, y_pred) -> tuple[float, float]:
    """Positive-class F1 (0 when nothing is predicted positive) and accuracy."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    fp = int(np.sum((y_true == 0) & (y_pred == 1)))
    fn = int(np.sum((y_true == 1) & (y_pred == 0)))
    f1 = 0.0 if tp == 0 else 2.0 * tp / (2.0 * tp + fp + fn)
    return f1, float(np.mean(y_true == y_pred))


def stratified_folds(targets, k: int, seed: int = 0) -> np.ndarray:
    """Fold id per row: each class is shuffled then dealt round-robin."""
    if k < 2:
        raise ValueError("k must be >= 2")
    targets = np.asarray(targets)
    rng = np.random.default_rng(seed)
    folds = np.empty(targets.size, dtype=np.int64)
    offset = 0
    for cls in (0, 1):
        rows = np.flatnonzero(targets == cls)
        rows = rows[rng.permutation(rows.size)]
        folds[rows] = (np.arange(rows.size) + offset) % k
        offset += rows.size
    for f in range(k):
        held = targets[folds == f]
        if held.size == 0 or held.min() == held.max():
            raise ValueError(f"fold {f} contains a single class; lower k")
    return folds


def cross_validate(
    data: Dataset,
    trainer: Callable[[Dataset], Predictor],
    k: int = 3,
    seed: int = 0,
) -> TrainReport:
    """Stratified k-fold CV: mean positive-class F1 and accuracy over folds."""
    folds = stratified_folds(data.targets, k, seed)
    f1s, accs = [], []
    for f in range(k):
        train_rows = np.flatnonzero(folds != f)
        test_rows = np.flatnonzero(folds == f)
        train = data.subset(train_rows)
        model = trainer(train)
        pred = model.classify(data.records[test_rows])
        f1, acc = f1_accuracy(data.targets[test_rows], pred)
        f1s.append(f1)
        accs.append(acc)
    hyper = trainer.describe() if isinstance(trainer, ModelConfig) else {}
    return TrainReport(float(np.mean(f1s)), float(np.mean(accs)), k, hyper)


def grid_search(
    data: Dataset,
    grid: Sequence[Callable[[Dataset], Predictor]],
    k: int = 3,
    seed: int = 0,
):
    """Cross-validate every configuration; best F1 wins, then accuracy, then grid order."""
    if not grid:
        raise ValueError("grid must contain at least one configuration")
    best = None
    for config in grid:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            report = cross_validate(data, config, k, seed)
        if best is None or (report.f1, report.accuracy) > (best[1].f1, best[1].accuracy):
            best = (config, report)
    return best
