"""Doubly-robust ATE from augmented inverse-propensity-weighted scores."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import norm

from ..errors import NumericalError, ValidationError
from ..tabular import _fmt
from .sample import CausalSample

Z_95 = 1.96
SE_FLOOR = 1e-12
TREATMENT_CODING = "W=1 is the treated arm: positive sentiment (Label 0), or a feature above its median"


def aipw_scores(sample: CausalSample, e_hat, m0_hat, m1_hat) -> np.ndarray:
    """Gamma_i = m1 - m0 + W (Y - m1) / e - (1 - W) (Y - m0) / (1 - e)."""
    e = np.asarray(e_hat, dtype=np.float64)
    m0 = np.asarray(m0_hat, dtype=np.float64)
    m1 = np.asarray(m1_hat, dtype=np.float64)
    if not (e.shape == m0.shape == m1.shape == (sample.n,)):
        raise ValidationError("nuisance predictions must align with sample rows")
    if np.any((e <= 0) | (e >= 1)):
        raise NumericalError("propensity outside (0, 1)")
    W, Y = sample.W, sample.Y
    return m1 - m0 + W * (Y - m1) / e - (1 - W) * (Y - m0) / (1 - e)


def significance_stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


@dataclass(frozen=True)
class AteReport:
    treatment_name: str
    ate: float
    se: float
    ci95: tuple[float, float]
    p_value: float
    stars: str
    n: int
    diagnostics: dict = field(default_factory=dict)

    def covers(self, value: float) -> bool:
        return self.ci95[0] <= value <= self.ci95[1]

    def to_dict(self) -> dict:
        return {
            "name": self.treatment_name,
            "ate": self.ate,
            "se": self.se,
            "ci_lo": self.ci95[0],
            "ci_hi": self.ci95[1],
            "p": self.p_value,
            "stars": self.stars,
            "n": self.n,
            "diagnostics": self.diagnostics,
        }


def estimate_ate(scores, treatment_name: str = "treatment",
                 diagnostics: dict | None = None) -> AteReport:
    """Mean of the scores with a normal-approximation CI and two-sided p-value."""
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.size
    if n < 2:
        raise ValidationError("ATE inference needs at least two scores")
    ate = float(scores.mean())
    se = max(float(scores.std(ddof=1) / np.sqrt(n)), SE_FLOOR)
    p = float(2.0 * norm.sf(abs(ate) / se))
    return AteReport(treatment_name, ate, se, (ate - Z_95 * se, ate + Z_95 * se), p,
                     significance_stars(p), n, dict(diagnostics or {}))


def write_reports_json(reports: Sequence[AteReport], path: str | Path, **header) -> None:
    doc = {"treatment_coding": TREATMENT_CODING, **header,
           "reports": [r.to_dict() for r in reports]}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n", encoding="utf-8")


def write_reports_csv(reports: Sequence[AteReport], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["#treatment_coding", TREATMENT_CODING])
        w.writerow(["name", "ate", "se", "ci_lo", "ci_hi", "p", "stars", "n", "diagnostics"])
        for r in reports:
            w.writerow([r.treatment_name, _fmt(r.ate), _fmt(r.se), _fmt(r.ci95[0]),
                        _fmt(r.ci95[1]), _fmt(r.p_value), r.stars, r.n,
                        json.dumps(r.diagnostics, sort_keys=True)])
