from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NumericalError, ValidationError
from ..tabular import FrameTable


@dataclass(frozen=True)
class CausalSample:
    """Covariates ``X``, binary treatment ``W`` (1 = treated arm) and outcome ``Y``."""

    X: np.ndarray
    W: np.ndarray
    Y: np.ndarray
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        W = np.asarray(self.W, dtype=np.float64).ravel()
        Y = np.asarray(self.Y, dtype=np.float64).ravel()
        if not (X.shape[0] == W.shape[0] == Y.shape[0]):
            raise ValidationError("X, W and Y must have the same number of rows")
        if not np.all((W == 0) | (W == 1)):
            raise ValidationError("treatment must be coded 0/1")
        if W.min() == W.max():
            raise NumericalError("both treatment arms must be non-empty")
        names = tuple(self.feature_names) or tuple(f"x{j + 1}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise ValidationError("feature_names length does not match X")
        for name, value in (("X", X), ("W", W), ("Y", Y)):
            value.flags.writeable = False
            object.__setattr__(self, name, value)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def treated(self) -> np.ndarray:
        return self.W == 1

    @classmethod
    def from_table(cls, table: FrameTable, treatment: str, outcome: str,
                   covariates=None) -> "CausalSample":
        covariates = [c for c in (table.feature_names if covariates is None else covariates)
                      if c not in (treatment, outcome)]
        if not covariates:
            raise ValidationError("no covariates left for the causal model")
        return cls(table.matrix(covariates), table.column(treatment),
                   table.column(outcome), tuple(covariates))


def difference_in_means(sample: CausalSample) -> float:
    t = sample.treated
    return float(sample.Y[t].mean() - sample.Y[~t].mean())
