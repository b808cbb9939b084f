"""Ward agglomeration of features under the distance 1 - |rho|.

The Lance-Williams Ward recurrence is applied to the correlation distance
as given.  This distance is not Euclidean, so the merge heights are not
within-cluster variances in the geometric sense; the recurrence still
never produces inversions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataQualityWarning, ValidationError
from .tabular import CorrelationMatrix, FrameTable, write_csv

DEFAULT_CUT_HEIGHT = 0.7


@dataclass(frozen=True)
class Merge:
    a: int
    b: int
    height: float
    size: int


@dataclass(frozen=True)
class Dendrogram:
    """Merges use scipy-style ids: leaves ``0..d-1``, merge ``t`` creates ``d + t``."""

    n_leaves: int
    merges: tuple[Merge, ...]
    names: tuple[str, ...] = ()

    @property
    def leaf_order(self) -> list[int]:
        if not self.merges:
            return list(range(self.n_leaves))
        children = {self.n_leaves + t: (m.a, m.b) for t, m in enumerate(self.merges)}
        order, stack = [], [self.n_leaves + len(self.merges) - 1]
        while stack:
            node = stack.pop()
            if node < self.n_leaves:
                order.append(node)
            else:
                a, b = children[node]
                stack.extend((b, a))
        return order

    def to_csv(self, path: str | Path) -> None:
        write_csv(path, ["a", "b", "height", "size"],
                  [[m.a, m.b, m.height, m.size] for m in self.merges])


def correlation_distance(rho: CorrelationMatrix | np.ndarray) -> np.ndarray:
    r = rho.rho if isinstance(rho, CorrelationMatrix) else np.asarray(rho, dtype=np.float64)
    D = 1.0 - np.abs(r)
    np.fill_diagonal(D, 0.0)
    return np.clip(D, 0.0, 1.0)


def ward_linkage(D, names: Sequence[str] = ()) -> Dendrogram:
    """Agglomerate with the Ward update

        d(k, i+j) = [(n_i + n_k) d(k, i) + (n_j + n_k) d(k, j) - n_k d(i, j)] / (n_i + n_j + n_k)

    merging the closest active pair each step; ties go to the smallest
    ``(min id, max id)`` pair.  A single feature gives an empty dendrogram.
    """
    D = np.array(D, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValidationError("distance matrix must be square")
    d = D.shape[0]
    if d == 0:
        raise ValidationError("distance matrix is empty")
    if d == 1:
        warnings.warn("single feature: dendrogram has no merges", DataQualityWarning, stacklevel=2)
        return Dendrogram(1, (), tuple(names))

    # dist[u][v] over active cluster ids
    dist = {i: {j: D[i, j] for j in range(d) if j != i} for i in range(d)}
    size = {i: 1 for i in range(d)}
    merges = []
    for t in range(d - 1):
        best = None
        for u in sorted(dist):
            for v in sorted(dist[u]):
                if v <= u:
                    continue
                key = (dist[u][v], u, v)
                if best is None or key < best:
                    best = key
        h, u, v = best
        new = d + t
        nu, nv = size[u], size[v]
        row = {}
        for k in dist:
            if k in (u, v):
                continue
            nk = size[k]
            row[k] = ((nu + nk) * dist[u][k] + (nv + nk) * dist[v][k] - nk * h) / (nu + nv + nk)
        del dist[u], dist[v]
        for k in dist:
            del dist[k][u], dist[k][v]
            dist[k][new] = row[k]
        dist[new] = row
        size[new] = nu + nv
        merges.append(Merge(u, v, float(h), nu + nv))
    return Dendrogram(d, tuple(merges), tuple(names))


def cut_clusters(dend: Dendrogram, k: int) -> np.ndarray:
    """Labels after undoing the last ``k - 1`` merges.

    Labels are numbered by the smallest member index, so the cluster
    holding feature 0 is label 0.
    """
    d = dend.n_leaves
    if not 1 <= k <= d:
        raise ValidationError(f"k must lie in [1, {d}], got {k}")
    parent = list(range(d + len(dend.merges)))

    def find(u):
        while parent[u] != u:
            parent[u] = parent[parent[u]]
            u = parent[u]
        return u

    for t, m in enumerate(dend.merges[: d - k]):
        parent[find(m.a)] = d + t
        parent[find(m.b)] = d + t
    roots = [find(i) for i in range(d)]
    relabel = {}
    for r in roots:
        relabel.setdefault(r, len(relabel))
    return np.array([relabel[r] for r in roots], dtype=np.int64)


def default_k(dend: Dendrogram, height: float = DEFAULT_CUT_HEIGHT) -> int:
    """One more than the number of merges above ``height``."""
    return 1 + sum(m.height > height for m in dend.merges)


def select_representatives(table: FrameTable | None, rho: CorrelationMatrix,
                           assignment: Sequence[int]) -> list[str]:
    """One medoid per cluster: the member with the largest mean |rho| to the others.

    Ties go to the lowest column index; clusters are returned in label order.
    ``table`` is accepted for call-site symmetry and may be ``None``.
    """
    labels = np.asarray(assignment)
    if labels.shape != (len(rho.names),):
        raise ValidationError("assignment must give one label per correlation column")
    absr = np.abs(rho.rho)
    reps = []
    for label in sorted(set(labels.tolist())):
        members = np.flatnonzero(labels == label)
        if members.size == 1:
            reps.append(rho.names[members[0]])
            continue
        sub = absr[np.ix_(members, members)]
        score = (sub.sum(axis=1) - np.diag(sub)) / (members.size - 1)
        reps.append(rho.names[members[int(np.argmax(score))]])
    return reps
