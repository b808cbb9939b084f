"""Pipeline stages: feature clustering, SHAP ranking and per-framework ATEs.

Every stage is a pure function of the input file and the configuration;
output files are written with round-trip float formatting so identical
runs are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attribution import AttributionResult, rank_features, shap_tree
from .boost import BoostedEnsemble, fit_boosted
from .causal.aipw import AteReport, aipw_scores, estimate_ate, write_reports_csv, write_reports_json
from .causal.forest import fit_causal_forest, predict_cate
from .causal.nuisance import fit_nuisance
from .causal.sample import CausalSample
from .cluster import (Dendrogram, correlation_distance, cut_clusters, default_k, select_representatives,
                      ward_linkage)
from .config import PipelineConfig
from .errors import DataQualityWarning, ValidationError
from .tabular import CorrelationMatrix, FrameTable, binarize_at_median, load_csv, pearson_matrix, write_csv

logger = logging.getLogger(__name__)


def load_table(config: PipelineConfig) -> FrameTable:
    table = load_csv(config.input, impute=config.impute, missing=config.missing)
    validate_columns(config, table)
    return table.with_roles(**{config.outcome: "outcome"})


def validate_columns(config: PipelineConfig, table: FrameTable) -> None:
    names = set(table.column_names)
    if config.outcome not in names:
        raise ValidationError(f"outcome column {config.outcome!r} not found in {config.input}")
    if config.sentiment not in names:
        raise ValidationError(f"sentiment column {config.sentiment!r} not found in {config.input}")
    if config.sentiment == config.outcome:
        raise ValidationError("sentiment and outcome must be different columns")
    for fw, cols in config.frameworks.items():
        missing = [c for c in cols if c not in names]
        if missing:
            raise ValidationError(f"framework {fw!r} references unknown columns {missing}")
        if config.outcome in cols:
            raise ValidationError(f"framework {fw!r} lists the outcome column")


@dataclass(frozen=True)
class ClusterResult:
    correlation: CorrelationMatrix
    dendrogram: Dendrogram
    labels: np.ndarray
    representatives: list[str]
    files: list[Path]


def cmd_cluster(config: PipelineConfig, table: FrameTable | None = None) -> ClusterResult:
    table = load_table(config) if table is None else table
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    # sentiment is a treatment, not a firm characteristic, so it is not clustered
    names = [c for c in table.feature_names if c != config.sentiment]
    if not names:
        raise ValidationError("no feature columns to cluster besides sentiment and outcome")
    rho = pearson_matrix(table, names)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DataQualityWarning)
        dend = ward_linkage(correlation_distance(rho), rho.names)
    k = config.k_clusters if config.k_clusters is not None else default_k(dend)
    k = min(k, len(rho.names))
    labels = cut_clusters(dend, k)
    reps = select_representatives(table, rho, labels)

    files = [out / "correlation.csv", out / "dendrogram.csv", out / "representatives.csv"]
    rho.to_csv(files[0])
    dend.to_csv(files[1])
    write_csv(files[2], ["cluster", "representative", "members"],
              [[c, rep, ";".join(n for n, l in zip(rho.names, labels) if l == c)]
               for c, rep in enumerate(reps)])
    for rep in reps:
        print(rep)
    return ClusterResult(rho, dend, labels, reps, files)


@dataclass(frozen=True)
class ShapResult:
    model: BoostedEnsemble
    attribution: AttributionResult
    ranking: list[tuple[str, float]]
    selected: list[str]
    train_rows: np.ndarray
    test_rows: np.ndarray
    files: list[Path]


def train_test_rows(n: int, split: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(split * n))
    if n_train < 2 or n_train >= n:
        raise ValidationError(
            f"split {split} of {n} rows leaves an empty or too-small side "
            f"({n_train} train / {n - n_train} test)")
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def cmd_shap(config: PipelineConfig, table: FrameTable | None = None) -> ShapResult:
    table = load_table(config) if table is None else table
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train, test = train_test_rows(table.n, config.split, config.seed)
    features = table.feature_names
    model = fit_boosted(table.take(train), config.outcome, config.boost, features=features)
    rng = np.random.default_rng([config.seed, 1])
    n_bg = min(config.background_size, train.size)
    background = np.sort(rng.choice(train.size, size=n_bg, replace=False))
    result = shap_tree(model, table.take(train).matrix(features)[background],
                       table.take(test).matrix(features))
    ranking, selected = rank_features(result)
    if not selected:
        warnings.warn("no feature has positive SHAP importance; the selected subset is empty",
                      DataQualityWarning, stacklevel=2)

    files = [out / "shap_values.csv", out / "shap_ranking.csv", out / "shap_model.json"]
    result.to_csv(files[0])
    write_csv(files[1], ["rank", "feature", "importance", "selected"],
              [[i + 1, name, imp, int(name in selected)] for i, (name, imp) in enumerate(ranking)])
    model.save(files[2])
    return ShapResult(model, result, ranking, selected, train, test, files)


@dataclass(frozen=True)
class AteResult:
    framework: str
    reports: list[AteReport]
    files: list[Path]


def ate_treatments(config: PipelineConfig, shap: ShapResult) -> list[str]:
    """Sentiment plus the SHAP-selected features, in SHAP rank order."""
    chosen = [name for name, _ in shap.ranking
              if name == config.sentiment or name in shap.selected]
    if config.sentiment not in chosen:
        chosen.insert(0, config.sentiment)
    return chosen


def _covariates(config: PipelineConfig, shap: ShapResult, framework: str, treatment: str) -> list[str]:
    cols = []
    for name in [*shap.selected, *config.frameworks[framework]]:
        if name not in (treatment, config.outcome) and name not in cols:
            cols.append(name)
    return cols


def cmd_ate(config: PipelineConfig, framework: str, table: FrameTable | None = None,
            shap: ShapResult | None = None) -> AteResult:
    if framework not in config.frameworks:
        raise ValidationError(
            f"unknown framework {framework!r}; available: {sorted(config.frameworks)}")
    table = load_table(config) if table is None else table
    shap = cmd_shap(config, table) if shap is None else shap
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    sentiment = table.column(config.sentiment)
    if not np.all((sentiment == 0) | (sentiment == 1)):
        raise ValidationError(f"sentiment column {config.sentiment!r} must be coded 0/1")

    reports, cate_columns = [], {}
    forest_config = config.forest_config()
    for treatment in ate_treatments(config, shap):
        if treatment == config.sentiment:
            work, w_name, coding = table, treatment, "1 = positive sentiment (Label 0)"
        else:
            work = binarize_at_median(table, treatment)
            w_name, coding = f"{treatment}__hi", "1 = above the column median"
        covariates = _covariates(config, shap, framework, treatment)
        sample = CausalSample.from_table(work, w_name, config.outcome, covariates)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            nuisance = fit_nuisance(sample, config.folds, seed=config.seed,
                                    propensity_config=config.propensity,
                                    outcome_config=config.outcome_model)
        for w in caught:
            logger.warning("%s: %s", treatment, w.message)
        scores = aipw_scores(sample, nuisance.e_hat, nuisance.m0_hat, nuisance.m1_hat)
        forest = fit_causal_forest(sample, forest_config, nuisance)
        cate = predict_cate(forest, sample.X)
        cate_columns[treatment] = cate
        diagnostics = {
            "coding": coding,
            "covariates": covariates,
            "overlap": nuisance.overlap,
            "overlap_warning": bool(nuisance.n_clipped),
            "cate_mean": float(cate.mean()),
            "cate_sd": float(cate.std()),
            "fallback_leaf_rate": forest.fallback_rate(sample.X),
        }
        reports.append(estimate_ate(scores, treatment, diagnostics))

    files = [out / f"ate_{framework}.csv", out / f"ate_{framework}.json", out / f"cate_{framework}.csv"]
    write_reports_csv(reports, files[0])
    write_reports_json(reports, files[1], framework=framework, outcome=config.outcome,
                       conditioners=config.frameworks[framework])
    names = list(cate_columns)
    write_csv(files[2], ["row", *names],
              [[i, *(cate_columns[n][i] for n in names)] for i in range(table.n)])
    for r in reports:
        print(f"{framework}\t{r.treatment_name}\t{r.ate:.6g}{r.stars}\t"
              f"[{r.ci95[0]:.6g}, {r.ci95[1]:.6g}]\tp={r.p_value:.3g}")
    return AteResult(framework, reports, files)


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def cmd_pipeline(config: PipelineConfig) -> Path:
    """cluster -> shap -> ate per framework (config order) -> summary.json."""
    table = load_table(config)
    clusters = cmd_cluster(config, table)
    shap = cmd_shap(config, table)
    ates = [cmd_ate(config, fw, table, shap) for fw in config.frameworks]
    out = Path(config.out_dir)
    files = [*clusters.files, *shap.files, *(f for a in ates for f in a.files)]
    summary = {
        "config": config.describe(),
        "representatives": clusters.representatives,
        "shap_selected": shap.selected,
        "files": [{"path": f.name, "sha256": _digest(f)} for f in files],
    }
    path = out / "summary.json"
    path.write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return path
