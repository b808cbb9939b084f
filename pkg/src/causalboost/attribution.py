"""Shapley attribution of boosted-ensemble predictions.

Attributions explain the raw score (margin) of the ensemble under the
interventional value function

    v(S, x) = mean_b f(z),  z_S = x_S,  z_rest = b_rest,

averaged over an explicit background sample ``b``.  :func:`shap_exact`
enumerates all coalitions and serves as the oracle for the fast
tree-path engine :func:`shap_tree`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from math import factorial
from pathlib import Path
from typing import Iterable, Sequence

import numba as nb
import numpy as np

from .boost import BoostedEnsemble, Tree, _check_arity
from .errors import ValidationError
from .tabular import FrameTable, _fmt

MAX_EXACT_FEATURES = 20


def _as_rows(data, model: BoostedEnsemble, what: str) -> np.ndarray:
    if isinstance(data, FrameTable):
        names = list(model.feature_names) or data.feature_names
        data = data.matrix(names)
    X = np.asarray(data, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != model.n_features:
        raise ValidationError(
            f"{what} has {X.shape[1]} columns, model expects {model.n_features}")
    return X


@dataclass(frozen=True)
class ValueFunction:
    model: BoostedEnsemble
    background: np.ndarray

    def __post_init__(self):
        bg = _as_rows(self.background, self.model, "background")
        if bg.shape[0] == 0:
            raise ValidationError("background sample is empty")
        object.__setattr__(self, "background", bg)

    @property
    def d(self) -> int:
        return self.model.n_features

    def __call__(self, S: Iterable[int], x) -> float:
        x = np.asarray(x, dtype=np.float64).ravel()
        z = self.background.copy()
        idx = sorted(set(S))
        z[:, idx] = x[idx]
        return float(self.model.raw_predict(z).mean())

    def all_coalitions(self, x) -> np.ndarray:
        """``v`` for every coalition, indexed by bitmask (bit j <=> feature j)."""
        x = np.asarray(x, dtype=np.float64).ravel()
        d, bg = self.d, self.background
        masks = np.arange(2 ** d)
        bits = ((masks[:, None] >> np.arange(d)) & 1).astype(bool)
        out = np.empty(len(masks))
        chunk = max(1, 2 ** 16 // bg.shape[0])
        for start in range(0, len(masks), chunk):
            sel = bits[start:start + chunk]
            z = np.where(sel[:, None, :], x, bg[None, :, :]).reshape(-1, d)
            out[start:start + chunk] = self.model.raw_predict(z).reshape(len(sel), -1).mean(axis=1)
        return out


def marginal_contribution(v: ValueFunction, x, j: int, S: Iterable[int]) -> float:
    """v(S + {j}, x) - v(S, x)."""
    S = set(S)
    if j in S:
        raise ValidationError(f"feature {j} is already in the coalition")
    return v(S | {j}, x) - v(S, x)


def shap_exact(v: ValueFunction, x) -> tuple[np.ndarray, float]:
    """Shapley values by full coalition enumeration; returns ``(phi, baseline)``."""
    d = v.d
    if d > MAX_EXACT_FEATURES:
        raise ValidationError(f"exact enumeration limited to {MAX_EXACT_FEATURES} features")
    values = v.all_coalitions(x)
    masks = np.arange(2 ** d)
    sizes = np.array([bin(m).count("1") for m in masks])
    weight = np.array([factorial(s) * factorial(d - s - 1) / factorial(d) if s < d else 0.0
                       for s in range(d + 1)])
    phi = np.zeros(d)
    for j in range(d):
        without = masks[(masks >> j) & 1 == 0]
        phi[j] = np.sum(weight[sizes[without]] * (values[without | (1 << j)] - values[without]))
    return phi, float(values[0])


@dataclass(frozen=True)
class AttributionResult:
    baseline: float
    phi: np.ndarray
    importance: np.ndarray
    feature_names: tuple[str, ...]

    def to_csv(self, path: str | Path) -> None:
        """Comment lines carry baseline and importances; then one phi row per instance."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["#baseline", _fmt(self.baseline)])
            w.writerow(["#importance", *map(_fmt, self.importance)])
            w.writerow(["row", *self.feature_names])
            for i, row in enumerate(self.phi):
                w.writerow([i, *map(_fmt, row)])


def _leaf_paths(tree: Tree):
    """Per-leaf box constraints ``lo < x[f] <= hi`` for the features on its path."""
    paths = []

    def walk(k, box):
        f = tree.feature[k]
        if f < 0:
            paths.append((tree.value[k], dict(box)))
            return
        thr = tree.threshold[k]
        lo, hi = box.get(f, (-np.inf, np.inf))
        walk(tree.left[k], {**box, f: (lo, min(hi, thr))})
        walk(tree.right[k], {**box, f: (max(lo, thr), hi)})

    walk(0, {})
    width = max((len(b) for _, b in paths), default=0)
    n_leaves = len(paths)
    feat = np.zeros((n_leaves, max(width, 1)), dtype=np.int64)
    lo = np.zeros((n_leaves, max(width, 1)))
    hi = np.zeros((n_leaves, max(width, 1)))
    count = np.zeros(n_leaves, dtype=np.int64)
    value = np.zeros(n_leaves)
    for l, (val, box) in enumerate(paths):
        value[l] = val
        count[l] = len(box)
        for p, f in enumerate(sorted(box)):
            feat[l, p] = f
            lo[l, p], hi[l, p] = box[f]
    return feat, lo, hi, count, value


def _coalition_weights(max_features: int) -> tuple[np.ndarray, np.ndarray]:
    """Shapley weights of an x-side (a players) vs background-side (c players) leaf game."""
    size = max_features + 1
    wa = np.zeros((size, size))
    wb = np.zeros((size, size))
    for a in range(size):
        for c in range(size):
            if a + c == 0:
                continue
            if a >= 1:
                wa[a, c] = factorial(a - 1) * factorial(c) / factorial(a + c)
            if c >= 1:
                wb[a, c] = factorial(a) * factorial(c - 1) / factorial(a + c)
    return wa, wb


@nb.njit(cache=True, nogil=True)
def _tree_phi(X, bg, feat, lo, hi, count, value, wa, wb, out):
    n, m = X.shape[0], bg.shape[0]
    for i in range(n):
        for b in range(m):
            for l in range(value.shape[0]):
                a = 0
                c = 0
                reach = True
                for p in range(count[l]):
                    f = feat[l, p]
                    xo = lo[l, p] < X[i, f] <= hi[l, p]
                    bo = lo[l, p] < bg[b, f] <= hi[l, p]
                    if not xo and not bo:
                        reach = False
                        break
                    if xo and not bo:
                        a += 1
                    elif bo and not xo:
                        c += 1
                if not reach or a + c == 0:
                    continue
                up = value[l] * wa[a, c] / m
                down = value[l] * wb[a, c] / m
                for p in range(count[l]):
                    f = feat[l, p]
                    xo = lo[l, p] < X[i, f] <= hi[l, p]
                    bo = lo[l, p] < bg[b, f] <= hi[l, p]
                    if xo and not bo:
                        out[i, f] += up
                    elif bo and not xo:
                        out[i, f] -= down


def tree_shap_single(tree: Tree, background: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Interventional Shapley values of one tree's output, shape ``X.shape``."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    bg = np.ascontiguousarray(background, dtype=np.float64)
    out = np.zeros(X.shape)
    feat, lo, hi, count, value = _leaf_paths(tree)
    wa, wb = _coalition_weights(int(count.max()) if count.size else 0)
    _tree_phi(X, bg, feat, lo, hi, count, value, wa, wb, out)
    return out


def shap_tree(model: BoostedEnsemble, background, X) -> AttributionResult:
    """Shapley values of ``model``'s raw score for every row of ``X``.

    Each tree is attributed leaf by leaf: for an (instance, background row)
    pair a leaf contributes only through the path features on which the two
    rows disagree, with closed-form coalition weights.  Tree attributions
    are summed and scaled by the learning rate.
    """
    bg = _as_rows(background, model, "background")
    if bg.shape[0] == 0:
        raise ValidationError("background sample is empty")
    X = _as_rows(X, model, "X")
    phi = np.zeros(X.shape)
    for tree in model.trees:
        phi += tree_shap_single(tree, bg, X)
    phi *= model.learning_rate
    baseline = float(model.raw_predict(bg).mean())
    names = tuple(model.feature_names) or tuple(f"x{j}" for j in range(model.n_features))
    return AttributionResult(baseline, phi, np.abs(phi).mean(axis=0), names)


def rank_features(result: AttributionResult) -> tuple[list[tuple[str, float]], list[str]]:
    """Features by descending mean |phi| (ties: column order) and those above 0."""
    imp = np.asarray(result.importance)
    order = sorted(range(len(imp)), key=lambda j: (-imp[j], j))
    ranking = [(result.feature_names[j], float(imp[j])) for j in order]
    selected = [name for name, value in ranking if value > 0.0]
    return ranking, selected


def importance_from_phi(phi: np.ndarray, names: Sequence[str], baseline: float = 0.0) -> AttributionResult:
    phi = np.asarray(phi, dtype=np.float64)
    return AttributionResult(baseline, phi, np.abs(phi).mean(axis=0), tuple(names))
