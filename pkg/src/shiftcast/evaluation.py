"""Comparison of predicted against measured success rates.

Two metrics: Spearman rank correlation (how well the factor *ordering* was
predicted) and average prediction error (mean absolute gap between predicted
and measured success rates). Ranks use average-rank tie handling and rho is
the Pearson correlation of the rank vectors, which stays correct under ties.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Mapping

import numpy as np

if TYPE_CHECKING:
    from .prediction import RedTeamReport


def average_ranks(values) -> np.ndarray:
    """1-based ranks of ``values`` in ascending order, ties averaged.

    Example: [0.3, 0.1, 0.3] -> [2.5, 1.0, 2.5].
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    order = np.argsort(v, kind="stable")
    sorted_v = v[order]
    # Rank of a tie group is the mean of the positions it occupies.
    boundaries = np.flatnonzero(np.concatenate(([True], sorted_v[1:] != sorted_v[:-1], [True])))
    ranks_sorted = np.empty(v.size, dtype=np.float64)
    for start, stop in zip(boundaries[:-1], boundaries[1:]):
        ranks_sorted[start:stop] = (start + stop + 1) / 2.0
    ranks = np.empty(v.size, dtype=np.float64)
    ranks[order] = ranks_sorted
    return ranks


def spearman_rho(x, y) -> float | None:
    """Spearman rank correlation between two paired samples.

    Computed as the Pearson correlation of the average-tie-corrected rank
    vectors. Returns None when either input has zero rank variance (all
    values equal): the correlation is undefined there, and an explicit
    "undefined" beats a silently wrong 0 or 1 in a results table.
    """
    xv = np.asarray(x, dtype=np.float64).ravel()
    yv = np.asarray(y, dtype=np.float64).ravel()
    if xv.size != yv.size:
        raise ValueError(f"length mismatch: {xv.size} vs {yv.size}")
    if xv.size < 2:
        raise ValueError("need at least 2 paired values")
    if not (np.isfinite(xv).all() and np.isfinite(yv).all()):
        raise ValueError("inputs contain non-finite values")
    rx = average_ranks(xv)
    ry = average_ranks(yv)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    var_x = float(dx @ dx)
    var_y = float(dy @ dy)
    if var_x == 0.0 or var_y == 0.0:
        return None
    rho = float(dx @ dy) / np.sqrt(var_x * var_y)
    return float(min(1.0, max(-1.0, rho)))


def avg_prediction_error(measured: Mapping[str, float], predicted: Mapping[str, float]) -> float:
    """Mean absolute gap between measured and predicted success rates.

    Both maps must cover exactly the same factors, with values in [0, 1].
    Symmetric in its two arguments.
    """
    if set(measured) != set(predicted):
        missing = set(measured) ^ set(predicted)
        raise ValueError(f"factor key sets differ: {sorted(missing)}")
    if not measured:
        raise ValueError("no factors to compare")
    for name in measured:
        for label, value in (("measured", measured[name]), ("predicted", predicted[name])):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{label}[{name!r}] must be in [0, 1], got {value}")
    gaps = [abs(measured[name] - predicted[name]) for name in measured]
    return float(np.mean(gaps))


@dataclass(frozen=True)
class FactorComparison:
    """One row of the evaluation table. Rank 1 is the worst (lowest) success rate."""

    factor: str
    predicted_success: float
    measured_success: float
    predicted_rank: float
    measured_rank: float


@dataclass(frozen=True)
class EvaluationReport:
    """Both metrics plus the per-factor rank table, in prediction order."""

    spearman_rho: float | None
    avg_prediction_error: float
    per_factor: tuple[FactorComparison, ...]


def evaluate(report: "RedTeamReport", measured: Mapping[str, float]) -> EvaluationReport:
    """Score a prediction report against measured per-factor success rates.

    ``measured`` must cover every factor in the report. Ranks are assigned
    ascending by success rate (rank 1 = worst), with ties averaged, matching
    the ranking used for factor selection.
    """
    factors = [p.factor for p in report.predictions]
    missing = [f for f in factors if f not in measured]
    if missing:
        raise ValueError(f"measured success rates missing for factors: {missing}")
    predicted_by_factor = {p.factor: p.predicted_success for p in report.predictions}
    measured_by_factor = {f: float(measured[f]) for f in factors}
    predicted_vals = np.array([predicted_by_factor[f] for f in factors])
    measured_vals = np.array([measured_by_factor[f] for f in factors])
    predicted_ranks = average_ranks(predicted_vals)
    measured_ranks = average_ranks(measured_vals)
    rho = spearman_rho(predicted_vals, measured_vals) if len(factors) >= 2 else None
    error = avg_prediction_error(measured_by_factor, predicted_by_factor)
    rows = tuple(
        FactorComparison(
            factor=f,
            predicted_success=float(predicted_vals[i]),
            measured_success=float(measured_vals[i]),
            predicted_rank=float(predicted_ranks[i]),
            measured_rank=float(measured_ranks[i]),
        )
        for i, f in enumerate(factors)
    )
    return EvaluationReport(spearman_rho=rho, avg_prediction_error=error, per_factor=rows)


def evaluation_to_json_dict(report: EvaluationReport) -> dict:
    """JSON-serializable form of an evaluation report."""
    return {
        "spearman_rho": report.spearman_rho,
        "avg_prediction_error": report.avg_prediction_error,
        "per_factor": [
            {
                "factor": row.factor,
                "predicted_success": row.predicted_success,
                "measured_success": row.measured_success,
                "predicted_rank": row.predicted_rank,
                "measured_rank": row.measured_rank,
            }
            for row in report.per_factor
        ],
    }


def write_evaluation(report: EvaluationReport, path) -> None:
    Path(path).write_text(
        json.dumps(evaluation_to_json_dict(report), indent=2) + "\n", encoding="utf-8"
    )


def render_evaluation_table(report: EvaluationReport) -> str:
    """Aligned plain-text rendering: the two-row metric summary, then per-factor rows."""
    rho = "undefined" if report.spearman_rho is None else f"{report.spearman_rho:.2f}"
    lines = [
        f"{'Metric':<34}{'Value':>10}",
        f"{'Spearman rho [-1,1]':<34}{rho:>10}",
        f"{'Av. prediction error [0,1]':<34}{report.avg_prediction_error:>10.2f}",
        "",
    ]
    name_width = max([len("Factor")] + [len(row.factor) for row in report.per_factor])
    header = (
        f"{'Factor':<{name_width}}  {'Predicted':>9}  {'Measured':>8}  "
        f"{'PredRank':>8}  {'MeasRank':>8}"
    )
    lines.append(header)
    for row in report.per_factor:
        lines.append(
            f"{row.factor:<{name_width}}  {row.predicted_success:>9.3f}  "
            f"{row.measured_success:>8.3f}  {row.predicted_rank:>8.1f}  {row.measured_rank:>8.1f}"
        )
    return "\n".join(lines) + "\n"
