"""Seeded synthetic designs with known propensity, CATE and ATE.

Covariates are independent standard normals.  Outcomes follow
``Y = mu(X) + W * tau(X) + sigma * eps`` with ``W ~ Bernoulli(e(X))``.

=====================  ===========================  =================  ===============  ====
name                   e(x)                         mu(x)              tau(x)           ATE
=====================  ===========================  =================  ===============  ====
randomized_constant    0.5                          x1 + 0.5 x2        2                2
null_effect            0.5                          x1 + 0.5 x2        0                0
confounded_step        0.2 + 0.6 [x1 > 0]           3 x1               2 [x1 > 0]       1
heterogeneous_linear   0.1 + 0.8 sigmoid(x2)        x2 + 0.5 x3        1 + x1           1
=====================  ===========================  =================  ===============  ====
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import expit

from .causal.sample import CausalSample
from .errors import ValidationError
from .tabular import FrameTable, write_csv


@dataclass(frozen=True)
class _Design:
    min_d: int
    propensity: Callable[[np.ndarray], np.ndarray]
    baseline: Callable[[np.ndarray], np.ndarray]
    effect: Callable[[np.ndarray], np.ndarray]
    ate: float


def _mu_two(X):
    return X[:, 0] + 0.5 * X[:, 1]


DESIGNS = {
    "randomized_constant": _Design(
        2, lambda X: np.full(len(X), 0.5), _mu_two, lambda X: np.full(len(X), 2.0), 2.0),
    "null_effect": _Design(
        2, lambda X: np.full(len(X), 0.5), _mu_two, lambda X: np.zeros(len(X)), 0.0),
    "confounded_step": _Design(
        1, lambda X: 0.2 + 0.6 * (X[:, 0] > 0), lambda X: 3.0 * X[:, 0],
        lambda X: 2.0 * (X[:, 0] > 0), 1.0),
    "heterogeneous_linear": _Design(
        3, lambda X: 0.1 + 0.8 * expit(X[:, 1]), lambda X: X[:, 1] + 0.5 * X[:, 2],
        lambda X: 1.0 + X[:, 0], 1.0),
}


@dataclass(frozen=True)
class DgpSpec:
    name: str
    n: int
    d: int = 5
    sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.name not in DESIGNS:
            raise ValidationError(f"unknown design {self.name!r}; choose from {sorted(DESIGNS)}")
        if self.n < 1:
            raise ValidationError("n must be >= 1")
        if self.d < DESIGNS[self.name].min_d:
            raise ValidationError(f"{self.name} needs d >= {DESIGNS[self.name].min_d}")
        if self.sigma < 0:
            raise ValidationError("sigma must be >= 0")


@dataclass(frozen=True)
class DgpTruth:
    ate: float
    tau: np.ndarray
    e: np.ndarray
    mu0: np.ndarray
    mu1: np.ndarray


def true_ate(name: str) -> float:
    return DESIGNS[name].ate


def draw(spec: DgpSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray, DgpTruth]:
    """Raw ``(X, W, Y, truth)`` arrays; ``W`` may have an empty arm for tiny n."""
    design = DESIGNS[spec.name]
    rng = np.random.default_rng(spec.seed)
    X = rng.standard_normal((spec.n, spec.d))
    e = design.propensity(X)
    W = (rng.random(spec.n) < e).astype(np.float64)
    mu0 = design.baseline(X)
    tau = design.effect(X)
    Y = mu0 + W * tau + spec.sigma * rng.standard_normal(spec.n)
    return X, W, Y, DgpTruth(design.ate, tau, e, mu0, mu0 + tau)


def generate(spec: DgpSpec) -> tuple[CausalSample, DgpTruth]:
    X, W, Y, truth = draw(spec)
    return CausalSample(X, W, Y), truth


def sample_to_table(sample: CausalSample, treatment: str = "sentiment",
                    outcome: str = "outcome") -> FrameTable:
    columns = {name: sample.X[:, j] for j, name in enumerate(sample.feature_names)}
    columns[treatment] = sample.W
    columns[outcome] = sample.Y
    return FrameTable.from_columns(columns, {outcome: "outcome"})


def write_sample_csv(sample: CausalSample, path: str | Path, treatment: str = "sentiment",
                     outcome: str = "outcome") -> None:
    table = sample_to_table(sample, treatment, outcome)
    write_csv(path, table.column_names, table.data.tolist())
