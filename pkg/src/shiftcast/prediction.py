"""End-to-end degradation prediction: calibrate once, then rate every factor.

The pipeline is: score the validation set against the nominal reference,
calibrate the conformal threshold from those scores, then for each factor
compute the fraction of its observations scoring strictly above the
threshold (the anomaly rate) and predict ``success = 1 - anomaly_rate``.
Factor sets may hold generated edited observations or real off-nominal
observations; the computation is identical, only the ``source`` annotation
differs.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .calibration import CalibrationResult, calibrate
from .evaluation import average_ranks
from .scoring import ScorerConfig, score_set
from .store import EmbeddingSet, Manifest, load_manifest_sets

# Factor sets smaller than this produce noticeably noisy rate estimates;
# they are worth a warning but not an error.
SMALL_FACTOR_SET = 30


class SmallFactorSetWarning(UserWarning):
    """A factor set has too few observations for a stable anomaly rate."""


@dataclass(frozen=True)
class FactorPrediction:
    """Anomaly rate and predicted success rate for one environmental factor.

    ``anomaly_rate`` is exactly ``n_flagged / n_observations``;
    ``predicted_success`` is exactly ``1 - anomaly_rate``.
    """

    factor: str
    anomaly_rate: float
    predicted_success: float
    n_observations: int
    n_flagged: int
    source: str


@dataclass(frozen=True)
class RedTeamReport:
    """Full output of one prediction run, in manifest factor order."""

    calibration: CalibrationResult
    predictions: tuple[FactorPrediction, ...]
    k: int
    reference_size: int
    small_factors: tuple[str, ...] = ()


def anomaly_rate(factor_set: EmbeddingSet, cfg: ScorerConfig, tau: float) -> float:
    """Fraction of a factor set scoring strictly above ``tau``.

    Always a rational with denominator ``len(factor_set)``; in particular 0
    whenever ``tau`` is +inf.
    """
    scores = score_set(factor_set, cfg)
    return int((scores > tau).sum()) / len(factor_set)


def predict_from_sets(
    nominal: EmbeddingSet,
    validation: EmbeddingSet,
    factor_sets: Mapping[str, EmbeddingSet],
    r_nom: float,
    k: int,
    source: str = "edited",
) -> RedTeamReport:
    """Run calibration plus per-factor prediction on already-loaded sets.

    Calibration completes before any factor is scored. Factor predictions
    are independent of each other and of their ordering; the report lists
    them in the order of ``factor_sets``.
    """
    cfg = ScorerConfig(k=k, reference=nominal)
    validation_scores = score_set(validation, cfg)
    calibration = calibrate(validation_scores, r_nom)
    predictions = []
    small = []
    for name, factor_set in factor_sets.items():
        scores = score_set(factor_set, cfg)
        n_obs = len(factor_set)
        n_flagged = int((scores > calibration.tau).sum())
        rate = n_flagged / n_obs
        if n_obs < SMALL_FACTOR_SET:
            small.append(name)
            warnings.warn(
                f"factor {name!r} has only {n_obs} observations; "
                f"its anomaly rate is a noisy estimate",
                SmallFactorSetWarning,
                stacklevel=2,
            )
        predictions.append(
            FactorPrediction(
                factor=name,
                anomaly_rate=rate,
                predicted_success=1.0 - rate,
                n_observations=n_obs,
                n_flagged=n_flagged,
                source=source,
            )
        )
    return RedTeamReport(
        calibration=calibration,
        predictions=tuple(predictions),
        k=k,
        reference_size=len(nominal),
        small_factors=tuple(small),
    )


def predict_all(manifest: Manifest, k: int, r_nom_override: float | None = None) -> RedTeamReport:
    """Load every set a manifest references and predict all factors.

    ``r_nom_override`` supersedes the manifest's nominal success rate when
    given; calibrating against a deliberately different estimate is a
    supported correction for overly conservative thresholds.
    """
    nominal, validation, factor_sets = load_manifest_sets(manifest)
    r_nom = manifest.r_nom if r_nom_override is None else r_nom_override
    return predict_from_sets(nominal, validation, factor_sets, r_nom, k, source=manifest.source)


def rank_factors(report: RedTeamReport) -> list[tuple[float, str]]:
    """Rank factors by predicted degradation: rank 1 is the worst factor.

    Ties share their average rank. The returned list is sorted by rank and
    then factor name, so ordering is deterministic; the lexicographic
    tie-break affects display order only, never the rank values.
    """
    if not report.predictions:
        raise ValueError("report has no predictions to rank")
    ranks = average_ranks([p.predicted_success for p in report.predictions])
    pairs = [(float(r), p.factor) for r, p in zip(ranks, report.predictions)]
    pairs.sort(key=lambda pair: (pair[0], pair[1]))
    return pairs


def select_worst(report: RedTeamReport, n: int) -> list[str]:
    """The ``n`` factors with the lowest predicted success, for targeted data collection.

    Ties are broken lexicographically by factor name (documented, arbitrary).
    """
    if not 1 <= n <= len(report.predictions):
        raise ValueError(f"n must be in [1, {len(report.predictions)}], got {n}")
    ordered = sorted(report.predictions, key=lambda p: (p.predicted_success, p.factor))
    return [p.factor for p in ordered[:n]]


def report_to_json_dict(report: RedTeamReport) -> dict:
    """JSON-serializable form of a report; ``tau`` is the string "inf" when infinite."""
    tau = report.calibration.tau
    if math.isinf(tau):
        tau = "inf" if tau > 0 else "-inf"
    return {
        "tau": tau,
        "k": report.k,
        "r_nom": report.calibration.r_nom,
        "predictions": [
            {
                "factor": p.factor,
                "anomaly_rate": p.anomaly_rate,
                "predicted_success": p.predicted_success,
                "n": p.n_observations,
                "source": p.source,
            }
            for p in report.predictions
        ],
    }


def write_report(report: RedTeamReport, path) -> None:
    Path(path).write_text(json.dumps(report_to_json_dict(report), indent=2) + "\n", encoding="utf-8")
