"""Pipeline configuration: a TOML file plus command-line overrides.

Schema (all keys optional unless marked)::

    input = "panel.csv"            # required (file or --input)
    outcome = "Net Profit Margin"  # required
    sentiment = "Label 0"          # required; 0/1 column, 1 = positive
    seed = 0
    split = 0.8                    # train fraction for the SHAP model
    out_dir = "results"
    k_clusters = 5                 # default: 1 + merges above height 0.7
    threads = 1                    # forest worker threads; no effect on results
    impute = "none"                # or "mean"
    missing = ""                   # missing-cell marker
    background_size = 128

    [frameworks]                   # required, at least one named list
    asset_composition = ["Loans Pvt Sector", "Loans Fin Inst", "Govt Securities", "Non Banking Assets"]
    balance_sheet = ["Cash Ratio", "Current Ratio", "Debt to Equity Ratio",
                     "Interest Coverage Ratio", "Debt to Capital Ratio"]

    [boost]        # BoostConfig fields for the outcome model
    [forest]       # ForestConfig fields (seed and n_jobs come from the top level)
    [nuisance]     # folds = 5, plus [nuisance.propensity] / [nuisance.outcome]
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .boost import BoostConfig
from .causal.forest import ForestConfig
from .causal.nuisance import DEFAULT_FOLDS, OUTCOME_CONFIG, PROPENSITY_CONFIG
from .errors import ValidationError


@dataclass(frozen=True)
class PipelineConfig:
    input: Path
    outcome: str
    sentiment: str
    frameworks: dict[str, list[str]]
    split: float = 0.8
    seed: int = 0
    out_dir: Path = Path("results")
    k_clusters: int | None = None
    threads: int = 1
    impute: str = "none"
    missing: str = ""
    background_size: int = 128
    boost: BoostConfig = BoostConfig()
    forest: ForestConfig = ForestConfig()
    folds: int = DEFAULT_FOLDS
    propensity: BoostConfig = PROPENSITY_CONFIG
    outcome_model: BoostConfig = OUTCOME_CONFIG

    def __post_init__(self):
        if not 0 < self.split < 1:
            raise ValidationError(f"split must lie in (0, 1), got {self.split}")
        if self.threads < 1:
            raise ValidationError("threads must be >= 1")
        if self.background_size < 1:
            raise ValidationError("background_size must be >= 1")
        if self.folds < 2:
            raise ValidationError("nuisance folds must be >= 2")
        if self.k_clusters is not None and self.k_clusters < 1:
            raise ValidationError("k_clusters must be >= 1")

    def forest_config(self) -> ForestConfig:
        return dataclasses.replace(self.forest, seed=self.seed, n_jobs=self.threads)

    def describe(self) -> dict:
        """Settings that determine outputs (thread count excluded)."""
        return {
            "input": str(self.input),
            "outcome": self.outcome,
            "sentiment": self.sentiment,
            "frameworks": self.frameworks,
            "split": self.split,
            "seed": self.seed,
            "k_clusters": self.k_clusters,
            "impute": self.impute,
            "missing": self.missing,
            "background_size": self.background_size,
            "boost": dataclasses.asdict(self.boost),
            "forest": {k: v for k, v in dataclasses.asdict(self.forest_config()).items()
                       if k != "n_jobs"},
            "folds": self.folds,
            "propensity": dataclasses.asdict(self.propensity),
            "outcome_model": dataclasses.asdict(self.outcome_model),
        }


def _sub(cls, values: Mapping[str, Any] | None, base=None):
    if not values:
        return base if base is not None else cls()
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ValidationError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    start = dataclasses.asdict(base) if base is not None else {}
    start.update(values)
    return cls(**start)


_TOP = {"input", "outcome", "sentiment", "seed", "split", "out_dir", "k_clusters", "threads",
        "impute", "missing", "background_size", "frameworks", "boost", "forest", "nuisance"}


def build_config(doc: Mapping[str, Any], overrides: Mapping[str, Any] | None = None) -> PipelineConfig:
    """Merge a parsed config document with non-``None`` overrides (overrides win)."""
    doc = dict(doc)
    unknown = set(doc) - _TOP
    if unknown:
        raise ValidationError(f"unknown configuration keys: {sorted(unknown)}")
    for key, value in (overrides or {}).items():
        if value is not None:
            doc[key] = value
    for key in ("input", "outcome", "sentiment"):
        if not doc.get(key):
            raise ValidationError(f"configuration is missing {key!r}")
    frameworks = doc.get("frameworks")
    if not frameworks:
        raise ValidationError("configuration needs a [frameworks] table with at least one list")
    clean = {}
    for name, cols in frameworks.items():
        if not isinstance(cols, list) or not cols or not all(isinstance(c, str) for c in cols):
            raise ValidationError(f"framework {name!r} must be a non-empty list of column names")
        clean[name] = list(cols)
    nuisance = dict(doc.get("nuisance") or {})
    folds = int(nuisance.pop("folds", DEFAULT_FOLDS))
    propensity = _sub(BoostConfig, nuisance.pop("propensity", None), PROPENSITY_CONFIG)
    outcome_model = _sub(BoostConfig, nuisance.pop("outcome", None), OUTCOME_CONFIG)
    if nuisance:
        raise ValidationError(f"unknown nuisance keys: {sorted(nuisance)}")
    try:
        return PipelineConfig(
            input=Path(doc["input"]),
            outcome=str(doc["outcome"]),
            sentiment=str(doc["sentiment"]),
            frameworks=clean,
            split=float(doc.get("split", 0.8)),
            seed=int(doc.get("seed", 0)),
            out_dir=Path(doc.get("out_dir", "results")),
            k_clusters=None if doc.get("k_clusters") is None else int(doc["k_clusters"]),
            threads=int(doc.get("threads", 1)),
            impute=str(doc.get("impute", "none")),
            missing=str(doc.get("missing", "")),
            background_size=int(doc.get("background_size", 128)),
            boost=_sub(BoostConfig, doc.get("boost")),
            forest=_sub(ForestConfig, doc.get("forest")),
            folds=folds,
            propensity=propensity,
            outcome_model=outcome_model,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"invalid configuration value: {exc}") from None


def load_config(path: str | Path | None, overrides: Mapping[str, Any] | None = None) -> PipelineConfig:
    doc: dict = {}
    if path is not None:
        with open(path, "rb") as fh:
            try:
                doc = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ValidationError(f"{path}: {exc}") from None
    return build_config(doc, overrides)
