"""Honest causal forest.

Each tree draws a bootstrap sample, keeps a subsample of it, and divides
that subsample into a splitting half (tree structure) and an estimation
half (leaf effects).  Splits maximise

    (n_L * n_R / n^2) * (tau_L - tau_R)^2

where ``tau`` is the in-node difference in treated/control means, subject
to at least ``min_node`` treated and ``min_node`` control rows per child.
The forest CATE is the plain mean of the per-tree estimates.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba as nb
import numpy as np

from ..boost import Tree, _check_arity
from ..errors import NumericalError, ValidationError
from .nuisance import NuisanceFit
from .sample import CausalSample


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 500
    subsample_fraction: float = 0.5
    honesty_fraction: float = 0.5
    min_node: int = 5
    max_depth: int | None = None
    mtry: int | None = None
    seed: int = 0
    weighted_split: bool = True
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValidationError("n_trees must be >= 1")
        if not 0 < self.subsample_fraction <= 1:
            raise ValidationError("subsample_fraction must lie in (0, 1]")
        if not 0 < self.honesty_fraction < 1:
            raise ValidationError("honesty_fraction must lie in (0, 1)")
        if self.min_node < 1:
            raise ValidationError("min_node must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValidationError("max_depth must be >= 0")
        if self.mtry is not None and self.mtry < 1:
            raise ValidationError("mtry must be >= 1")
        if self.n_jobs < 1:
            raise ValidationError("n_jobs must be >= 1")


@dataclass(frozen=True)
class CausalTree:
    """Tree structure with honest per-node effects from the estimation half.

    ``leaf_tau[k]`` is node ``k``'s own difference in means when both arms
    are present there, else the nearest such ancestor's (``fallback[k]``).
    """

    structure: Tree
    parent: np.ndarray
    leaf_tau: np.ndarray
    n_treated: np.ndarray
    n_control: np.ndarray
    fallback: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        return self.structure.apply(X)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.leaf_tau[self.apply(X)]


@dataclass(frozen=True)
class CausalForestModel:
    trees: tuple[CausalTree, ...]
    config: ForestConfig
    n_features: int
    feature_names: tuple[str, ...] = ()
    nuisance: NuisanceFit | None = None

    def per_tree_predictions(self, X) -> np.ndarray:
        X = _check_arity(X, self.n_features)
        return np.stack([t.predict(X) for t in self.trees])

    def fallback_rate(self, X) -> float:
        X = _check_arity(X, self.n_features)
        hits = sum(int(t.fallback[t.apply(X)].sum()) for t in self.trees)
        return hits / (len(self.trees) * X.shape[0])


@nb.njit(cache=True, nogil=True)
def _best_split(X, W, Y, features, min_node, weighted):
    n = X.shape[0]
    best_crit = 0.0
    best_feat = -1
    best_thr = 0.0
    n1 = 0.0
    s1 = 0.0
    s0 = 0.0
    for i in range(n):
        if W[i] == 1.0:
            n1 += 1.0
            s1 += Y[i]
        else:
            s0 += Y[i]
    n0 = n - n1
    for f in features:
        col = X[:, f]
        order = np.argsort(col, kind="mergesort")
        n1l = 0.0
        n0l = 0.0
        s1l = 0.0
        s0l = 0.0
        for p in range(n - 1):
            i = order[p]
            if W[i] == 1.0:
                n1l += 1.0
                s1l += Y[i]
            else:
                n0l += 1.0
                s0l += Y[i]
            v = col[i]
            nxt = col[order[p + 1]]
            if not nxt > v:
                continue
            n1r = n1 - n1l
            n0r = n0 - n0l
            if n1l < min_node or n0l < min_node or n1r < min_node or n0r < min_node:
                continue
            tau_l = s1l / n1l - s0l / n0l
            tau_r = (s1 - s1l) / n1r - (s0 - s0l) / n0r
            crit = (tau_l - tau_r) ** 2
            if weighted:
                nl = n1l + n0l
                crit *= nl * (n - nl) / (n * n)
            if crit > best_crit:
                best_crit = crit
                best_feat = f
                thr = 0.5 * (v + nxt)
                if thr >= nxt:
                    thr = v
                best_thr = thr
    return best_feat, best_thr, best_crit


def grow_structure(X, W, Y, config: ForestConfig, rng: np.random.Generator) -> Tree:
    """Greedy tree on the splitting half; returns topology only (values are 0)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    W = np.ascontiguousarray(W, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    d = X.shape[1]
    mtry = min(d, config.mtry or math.ceil(math.sqrt(d)))
    max_depth = config.max_depth if config.max_depth is not None else 10**9
    feature, threshold, left, right = [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        return len(feature) - 1

    stack = [(new_node(), np.arange(X.shape[0]), 0)]
    while stack:
        k, rows, depth = stack.pop()
        if depth >= max_depth:
            continue
        wk = W[rows]
        n1 = wk.sum()
        if n1 < 2 * config.min_node or rows.size - n1 < 2 * config.min_node:
            continue
        cand = np.sort(rng.choice(d, size=mtry, replace=False)).astype(np.int64)
        f, thr, _ = _best_split(X[rows], wk, Y[rows], cand, config.min_node,
                                config.weighted_split)
        if f < 0:
            continue
        feature[k], threshold[k] = int(f), float(thr)
        go_left = X[rows, f] <= thr
        left[k], right[k] = new_node(), new_node()
        # right pushed first so the left subtree is numbered first
        stack.append((right[k], rows[~go_left], depth + 1))
        stack.append((left[k], rows[go_left], depth + 1))
    return Tree(np.array(feature, dtype=np.int64), np.array(threshold),
                np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                np.zeros(len(feature)))


def _parents(structure: Tree) -> np.ndarray:
    parent = np.full(structure.n_nodes, -1, dtype=np.int64)
    for k in range(structure.n_nodes):
        if structure.feature[k] >= 0:
            parent[structure.left[k]] = k
            parent[structure.right[k]] = k
    return parent


def populate_leaves(structure: Tree, X, W, Y) -> CausalTree:
    """Honest effects: difference in means of the estimation rows in each node."""
    X = np.asarray(X, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    parent = _parents(structure)
    m = structure.n_nodes
    n1 = np.zeros(m)
    n0 = np.zeros(m)
    s1 = np.zeros(m)
    s0 = np.zeros(m)
    leaf = structure.apply(X)
    np.add.at(n1, leaf, W)
    np.add.at(n0, leaf, 1 - W)
    np.add.at(s1, leaf, W * Y)
    np.add.at(s0, leaf, (1 - W) * Y)
    # children always have larger ids than their parent
    for k in range(m - 1, 0, -1):
        p = parent[k]
        n1[p] += n1[k]
        n0[p] += n0[k]
        s1[p] += s1[k]
        s0[p] += s0[k]
    tau = np.zeros(m)
    fallback = np.zeros(m, dtype=bool)
    for k in range(m):
        if n1[k] > 0 and n0[k] > 0:
            tau[k] = s1[k] / n1[k] - s0[k] / n0[k]
        elif k > 0:
            tau[k] = tau[parent[k]]
            fallback[k] = True
        else:
            fallback[k] = True
    return CausalTree(structure, parent, tau, n1.astype(np.int64), n0.astype(np.int64), fallback)


def draw_tree_rows(W: np.ndarray, config: ForestConfig,
                   rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Row indices (with repeats) of the splitting and estimation halves.

    Bootstrap n rows with replacement, keep a subsample of that draw, then
    split by distinct original row within each arm so that no unit lands
    in both halves.
    """
    n = len(W)
    boot = rng.integers(0, n, size=n)
    keep = boot[rng.permutation(n)[: max(2, int(round(config.subsample_fraction * n)))]]
    split_part, est_part = [], []
    uniq = np.unique(keep)
    for arm in (0.0, 1.0):
        ids = uniq[W[uniq] == arm]
        ids = ids[rng.permutation(ids.size)]
        cut = int(round(config.honesty_fraction * ids.size))
        split_part.append(ids[:cut])
        est_part.append(ids[cut:])
    in_split = np.zeros(n, dtype=bool)
    in_split[np.concatenate(split_part)] = True
    in_est = np.zeros(n, dtype=bool)
    in_est[np.concatenate(est_part)] = True
    keep = np.sort(keep)
    return keep[in_split[keep]], keep[in_est[keep]]


def _fit_one(sample: CausalSample, config: ForestConfig, index: int) -> CausalTree:
    rng = np.random.default_rng([config.seed, index])
    split_rows, est_rows = draw_tree_rows(sample.W, config, rng)
    structure = grow_structure(sample.X[split_rows], sample.W[split_rows],
                               sample.Y[split_rows], config, rng)
    return populate_leaves(structure, sample.X[est_rows], sample.W[est_rows], sample.Y[est_rows])


def fit_causal_forest(sample: CausalSample, config: ForestConfig = ForestConfig(),
                      nuisance: NuisanceFit | None = None) -> CausalForestModel:
    """Grow ``config.n_trees`` honest trees.

    Tree ``b`` draws all its randomness from ``(config.seed, b)``, so the
    fitted forest does not depend on ``config.n_jobs``.
    """
    n_treated = int(sample.W.sum())
    n_control = sample.n - n_treated
    if min(n_treated, n_control) < 2 * config.min_node:
        raise NumericalError(
            f"arms of size {n_treated}/{n_control} are below 2 * min_node = {2 * config.min_node}")
    indices = range(config.n_trees)
    if config.n_jobs == 1:
        trees = [_fit_one(sample, config, b) for b in indices]
    else:
        with ThreadPoolExecutor(max_workers=config.n_jobs) as pool:
            trees = list(pool.map(lambda b: _fit_one(sample, config, b), indices))
    return CausalForestModel(tuple(trees), config, sample.X.shape[1], sample.feature_names,
                             nuisance)


def predict_cate(model: CausalForestModel, X) -> np.ndarray:
    """Mean over trees of the honest leaf effect each row reaches."""
    return model.per_tree_predictions(X).mean(axis=0)
