"""Second-order gradient boosting with exact greedy regression trees.

Each round fits a tree to the first and second derivatives ``g``, ``h`` of
the loss at the current raw prediction, scoring a split by

    0.5 * [G_L^2 / (H_L + lambda) + G_R^2 / (H_R + lambda) - G^2 / (H + lambda)] - gamma

and giving each leaf the weight ``-G / (H + lambda)``.  Split search is
exhaustive over midpoints between consecutive distinct feature values.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numba as nb
import numpy as np
from scipy.special import expit

from .errors import NumericalError, ValidationError
from .tabular import FrameTable

LOSSES = ("squared_error", "logistic")
FORMAT_NAME = "causalboost.boosted_ensemble"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class BoostConfig:
    n_rounds: int = 100
    max_depth: int = 4
    reg_lambda: float = 1.0
    gamma: float = 0.0
    min_child_weight: float = 1.0
    learning_rate: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_rounds < 0:
            raise ValidationError("n_rounds must be >= 0")
        if self.max_depth < 1:
            raise ValidationError("max_depth must be >= 1")
        if self.reg_lambda < 0 or self.gamma < 0 or self.min_child_weight < 0:
            raise ValidationError("reg_lambda, gamma and min_child_weight must be >= 0")
        if not 0 < self.learning_rate <= 1:
            raise ValidationError("learning_rate must lie in (0, 1]")


@dataclass(frozen=True)
class Tree:
    """Flat binary tree; node 0 is the root and ``feature == -1`` marks a leaf.

    Rows go left iff ``x[feature] <= threshold``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        def walk(k):
            if self.feature[k] < 0:
                return 0
            return 1 + max(walk(self.left[k]), walk(self.right[k]))
        return walk(0)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row of ``X``."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            feat = self.feature[node]
            inner = feat >= 0
            if not inner.any():
                return node
            r, k, f = rows[inner], node[inner], feat[inner]
            go_left = X[r, f] <= self.threshold[k]
            node[r] = np.where(go_left, self.left[k], self.right[k])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self, k: int = 0) -> dict:
        if self.feature[k] < 0:
            return {"leaf": float(self.value[k])}
        return {
            "feature": int(self.feature[k]),
            "threshold": float(self.threshold[k]),
            "left": self.to_dict(int(self.left[k])),
            "right": self.to_dict(int(self.right[k])),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Tree":
        feature, threshold, left, right, value = [], [], [], [], []

        def add(node):
            k = len(feature)
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(0.0)
            if "leaf" in node:
                value[k] = float(node["leaf"])
                return k
            feature[k] = int(node["feature"])
            threshold[k] = float(node["threshold"])
            left[k] = add(node["left"])
            right[k] = add(node["right"])
            return k

        add(doc)
        return cls(np.array(feature, dtype=np.int64), np.array(threshold),
                   np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                   np.array(value))


@dataclass(frozen=True)
class BoostedEnsemble:
    base_score: float
    learning_rate: float
    trees: tuple[Tree, ...]
    loss: str
    n_features: int
    feature_names: tuple[str, ...] = ()
    train_loss: tuple[float, ...] = field(default=(), compare=False)

    def raw_predict(self, X) -> np.ndarray:
        X = _check_arity(X, self.n_features)
        out = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            out += self.learning_rate * tree.predict(X)
        return out

    def to_json(self) -> str:
        doc = {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "loss": self.loss,
            "base_score": self.base_score,
            "learning_rate": self.learning_rate,
            "n_features": self.n_features,
            "feature_names": list(self.feature_names),
            "trees": [t.to_dict() for t in self.trees],
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "BoostedEnsemble":
        doc = json.loads(text)
        if doc.get("format") != FORMAT_NAME or doc.get("version") != FORMAT_VERSION:
            raise ValidationError("not a version-1 boosted ensemble document")
        return cls(float(doc["base_score"]), float(doc["learning_rate"]),
                   tuple(Tree.from_dict(t) for t in doc["trees"]), doc["loss"],
                   int(doc["n_features"]), tuple(doc.get("feature_names", ())))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


def _check_arity(X, n_features: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != n_features:
        raise ValidationError(
            f"model expects {n_features} features, got {X.shape[1]}")
    return X


def gradients(loss: str, y, yhat) -> tuple[np.ndarray, np.ndarray]:
    """First and second derivatives of the loss w.r.t. the raw prediction."""
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape:
        raise ValidationError(f"length mismatch: {y.shape} vs {yhat.shape}")
    if loss == "squared_error":
        return yhat - y, np.ones_like(y)
    if loss == "logistic":
        if not np.all((y == 0) | (y == 1)):
            raise ValidationError("logistic loss needs a 0/1 target")
        p = expit(yhat)
        return p - y, p * (1.0 - p)
    raise ValidationError(f"unknown loss {loss!r}")


def _loss_value(loss: str, y: np.ndarray, raw: np.ndarray) -> float:
    if loss == "squared_error":
        return float(0.5 * np.mean((y - raw) ** 2))
    # log(1 + e^raw) - y * raw, stable form
    return float(np.mean(np.logaddexp(0.0, raw) - y * raw))


@nb.njit(cache=True, nogil=True)
def _grow(X, order, g, h, max_depth, lam, gamma, min_child_weight):
    n, d = X.shape
    cap = 2 ** (max_depth + 1) - 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    G = np.zeros(cap)
    H = np.zeros(cap)
    is_open = np.zeros(cap, dtype=np.bool_)
    node_of = np.zeros(n, dtype=np.int64)
    for i in range(n):
        G[0] += g[i]
        H[0] += h[i]
    is_open[0] = True
    n_nodes = 1

    GL = np.zeros(cap)
    HL = np.zeros(cap)
    last = np.zeros(cap)
    seen = np.zeros(cap, dtype=np.bool_)
    best_gain = np.zeros(cap)
    best_feat = np.full(cap, -1, dtype=np.int64)
    best_thr = np.zeros(cap)

    for _ in range(max_depth):
        any_open = False
        for k in range(n_nodes):
            if is_open[k]:
                any_open = True
                best_gain[k] = 0.0
                best_feat[k] = -1
        if not any_open:
            break
        for f in range(d):
            for k in range(n_nodes):
                GL[k] = 0.0
                HL[k] = 0.0
                seen[k] = False
            for pos in range(n):
                i = order[f, pos]
                k = node_of[i]
                if not is_open[k]:
                    continue
                v = X[i, f]
                if seen[k] and v > last[k]:
                    hl = HL[k]
                    hr = H[k] - hl
                    if hl >= min_child_weight and hr >= min_child_weight \
                            and hl + lam > 0.0 and hr + lam > 0.0:
                        gl = GL[k]
                        gr = G[k] - gl
                        parent = 0.0
                        if H[k] + lam > 0.0:
                            parent = G[k] * G[k] / (H[k] + lam)
                        gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent) - gamma
                        if gain > best_gain[k]:
                            best_gain[k] = gain
                            best_feat[k] = f
                            thr = 0.5 * (last[k] + v)
                            if thr >= v:
                                thr = last[k]
                            best_thr[k] = thr
                GL[k] += g[i]
                HL[k] += h[i]
                last[k] = v
                seen[k] = True

        level_end = n_nodes
        for k in range(level_end):
            if not is_open[k]:
                continue
            is_open[k] = False
            if best_feat[k] < 0:
                continue
            feature[k] = best_feat[k]
            threshold[k] = best_thr[k]
            left[k] = n_nodes
            right[k] = n_nodes + 1
            is_open[n_nodes] = True
            is_open[n_nodes + 1] = True
            n_nodes += 2
        for i in range(n):
            k = node_of[i]
            if k < level_end and feature[k] >= 0:
                if X[i, feature[k]] <= threshold[k]:
                    node_of[i] = left[k]
                else:
                    node_of[i] = right[k]
        for k in range(level_end, n_nodes):
            G[k] = 0.0
            H[k] = 0.0
        for i in range(n):
            k = node_of[i]
            if k >= level_end:
                G[k] += g[i]
                H[k] += h[i]

    value = np.zeros(n_nodes)
    for k in range(n_nodes):
        if feature[k] < 0 and H[k] + lam > 0.0:
            value[k] = -G[k] / (H[k] + lam)
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            value, node_of)


def _presort(X: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T.astype(np.int64))


def _fit_tree_sorted(X, order, g, h, config: BoostConfig) -> tuple[Tree, np.ndarray]:
    feature, threshold, left, right, value, leaf_of = _grow(
        X, order, g, h, config.max_depth, float(config.reg_lambda),
        float(config.gamma), float(config.min_child_weight))
    return Tree(feature, threshold, left, right, value), leaf_of


def fit_tree(X, g, h, config: BoostConfig = BoostConfig()) -> Tree:
    """Fit one regression tree to gradient statistics ``g`` and ``h``."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    g = np.ascontiguousarray(g, dtype=np.float64)
    h = np.ascontiguousarray(h, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValidationError("fit_tree needs a non-empty two-dimensional X")
    if g.shape != (X.shape[0],) or h.shape != g.shape:
        raise ValidationError("g and h must have one entry per row of X")
    if np.any(h < 0):
        raise ValidationError("hessians must be non-negative")
    tree, _ = _fit_tree_sorted(X, _presort(X), g, h, config)
    return tree


def boost_arrays(X, y, config: BoostConfig = BoostConfig(), loss: str = "squared_error",
                 feature_names: Sequence[str] = ()) -> BoostedEnsemble:
    """Fit a boosted ensemble on raw arrays; see :func:`fit_boosted`."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] == 0:
        raise ValidationError("boosting needs at least one feature column")
    if X.shape[0] != y.shape[0]:
        raise ValidationError("X and y lengths differ")
    if X.shape[0] < 2:
        raise ValidationError("boosting needs at least two rows")
    if loss == "squared_error":
        base = float(np.mean(y))
    elif loss == "logistic":
        if not np.all((y == 0) | (y == 1)):
            raise ValidationError("logistic loss needs a 0/1 target")
        p = float(np.mean(y))
        if p in (0.0, 1.0):
            raise NumericalError("logistic target is all 0 or all 1")
        base = float(np.log(p / (1.0 - p)))
    else:
        raise ValidationError(f"unknown loss {loss!r}")

    order = _presort(X)
    raw = np.full(X.shape[0], base)
    history = [_loss_value(loss, y, raw)]
    trees = []
    for _ in range(config.n_rounds):
        g, h = gradients(loss, y, raw)
        tree, leaf_of = _fit_tree_sorted(X, order, g, h, config)
        raw = raw + config.learning_rate * tree.value[leaf_of]
        trees.append(tree)
        history.append(_loss_value(loss, y, raw))
    return BoostedEnsemble(base, float(config.learning_rate), tuple(trees), loss,
                           X.shape[1], tuple(feature_names), tuple(history))


def fit_boosted(table: FrameTable, target: str, config: BoostConfig = BoostConfig(),
                loss: str = "squared_error",
                features: Sequence[str] | None = None) -> BoostedEnsemble:
    """Boost ``target`` on ``features`` (default: the table's feature columns).

    ``train_loss`` holds the mean training loss before the first round and
    after every round.
    """
    names = [n for n in (table.feature_names if features is None else features) if n != target]
    if not names:
        raise ValidationError("no feature columns to boost on")
    return boost_arrays(table.matrix(names), table.column(target), config, loss, names)


def predict(model: BoostedEnsemble, X) -> np.ndarray:
    """Raw score for squared error; probability for logistic loss."""
    raw = model.raw_predict(X)
    if model.loss == "logistic":
        return expit(raw)
    return raw
