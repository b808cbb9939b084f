"""Cross-fitted propensity and arm-wise outcome models."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..boost import BoostConfig, BoostedEnsemble, boost_arrays, predict
from ..errors import NumericalError, OverlapWarning, ValidationError
from .sample import CausalSample

PROPENSITY_CLIP = (0.01, 0.99)

DEFAULT_FOLDS = 5

# Propensity trees are kept shallow with a slow learning rate so that
# coin-flip assignment is not chased, while a small hessian floor still
# lets separable assignment reach the clip bounds; arm-wise outcome models see only part of each
# fold and get one level less depth than the boosting default.
PROPENSITY_CONFIG = BoostConfig(n_rounds=100, max_depth=2, learning_rate=0.05,
                                min_child_weight=1.0)
OUTCOME_CONFIG = BoostConfig(n_rounds=100, max_depth=3, learning_rate=0.1,
                             min_child_weight=5.0)


@dataclass(frozen=True)
class NuisanceFit:
    """Out-of-fold nuisance predictions aligned with the sample rows."""

    e_hat: np.ndarray
    m0_hat: np.ndarray
    m1_hat: np.ndarray
    folds: np.ndarray
    models: tuple[tuple[BoostedEnsemble, BoostedEnsemble, BoostedEnsemble], ...]
    n_clipped: int

    @property
    def overlap(self) -> dict:
        lo, hi = PROPENSITY_CLIP
        return {
            "e_min": float(self.e_hat.min()),
            "e_max": float(self.e_hat.max()),
            "e_mean": float(self.e_hat.mean()),
            "clipped_fraction": self.n_clipped / len(self.e_hat),
            "clip_bounds": [lo, hi],
        }


def stratified_folds(W: np.ndarray, folds: int, rng: np.random.Generator) -> np.ndarray:
    """Fold id per row, dealing each arm round-robin after a seeded shuffle."""
    out = np.empty(len(W), dtype=np.int64)
    for arm in (0.0, 1.0):
        idx = np.flatnonzero(W == arm)
        idx = idx[rng.permutation(idx.size)]
        out[idx] = np.arange(idx.size) % folds
    return out


def clip_propensity(e: np.ndarray) -> tuple[np.ndarray, int]:
    lo, hi = PROPENSITY_CLIP
    e = np.asarray(e, dtype=np.float64)
    n_clipped = int(np.sum((e < lo) | (e > hi)))
    return np.clip(e, lo, hi), n_clipped


def fit_nuisance(sample: CausalSample, folds: int = DEFAULT_FOLDS,
                 config: BoostConfig | None = None, seed: int = 0, *,
                 propensity_config: BoostConfig = PROPENSITY_CONFIG,
                 outcome_config: BoostConfig = OUTCOME_CONFIG) -> NuisanceFit:
    """K-fold cross-fitting of e(x) (logistic) and m0(x), m1(x) (squared error).

    For the rows of fold k every model is trained on the other folds only;
    m1 on their treated rows and m0 on their control rows.  A single
    ``config`` overrides both the propensity and the outcome settings.
    """
    if config is not None:
        propensity_config = outcome_config = config
    if folds < 2:
        raise ValidationError("cross-fitting needs at least 2 folds")
    n_treated = int(sample.W.sum())
    n_control = sample.n - n_treated
    if min(n_treated, n_control) < 2 * folds:
        raise NumericalError(
            f"arms of size {n_treated}/{n_control} are too small for {folds}-fold cross-fitting")
    rng = np.random.default_rng(seed)
    fold_of = stratified_folds(sample.W, folds, rng)
    X, W, Y = sample.X, sample.W, sample.Y
    e_raw = np.empty(sample.n)
    m0 = np.empty(sample.n)
    m1 = np.empty(sample.n)
    models = []
    for k in range(folds):
        test = fold_of == k
        train = ~test
        prop = boost_arrays(X[train], W[train], propensity_config, "logistic")
        out1 = boost_arrays(X[train & (W == 1)], Y[train & (W == 1)], outcome_config)
        out0 = boost_arrays(X[train & (W == 0)], Y[train & (W == 0)], outcome_config)
        e_raw[test] = predict(prop, X[test])
        m1[test] = predict(out1, X[test])
        m0[test] = predict(out0, X[test])
        models.append((prop, out0, out1))
    e_hat, n_clipped = clip_propensity(e_raw)
    if n_clipped:
        warnings.warn(
            f"{n_clipped} of {sample.n} propensities clipped to {PROPENSITY_CLIP}; "
            "overlap is poor", OverlapWarning, stacklevel=2)
    return NuisanceFit(e_hat, m0, m1, fold_of, tuple(models), n_clipped)
