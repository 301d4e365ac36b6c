"""Split-conformal calibration of the anomaly threshold.

Given anomaly scores for a held-out validation set of nominal observations
and the nominal success rate ``r_nom``, the threshold ``tau`` is the
``ceil((n_val + 1) * r_nom)``-th smallest validation score (1-based). Under
exchangeability this bounds the probability that a fresh nominal observation
scores strictly above ``tau`` to at most ``1 - r_nom``.

When the order-statistic index exceeds ``n_val`` (r_nom close to 1 with a
small validation set), no finite threshold gives the guarantee and ``tau``
is +inf: nothing is ever flagged, which is the honest conformal answer. The
mirror edge ``r_nom = 0`` yields index 0 and ``tau = -inf``: everything is
flagged.

Flagging is strict (``score > tau``) throughout. With continuous scores,
ties at ``tau`` are a measure-zero event and need no correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Tolerance for pulling (n+1)*r_nom back onto an integer before the ceiling:
# binary float noise must not bump the order-statistic index past an exact
# integer level (e.g. 10 * 0.9 evaluating to 9.000000000000002).
_CEIL_GUARD = 1e-9


@dataclass(frozen=True)
class CalibrationResult:
    """Threshold ``tau`` plus the provenance needed to audit it.

    ``quantile_index`` is the 1-based order-statistic index actually used;
    ``validation_scores_sorted`` is the non-decreasing score vector the index
    was applied to.
    """

    tau: float
    quantile_index: int
    n_val: int
    r_nom: float
    validation_scores_sorted: np.ndarray = field(repr=False, compare=False)


def calibrate(validation_scores, r_nom: float) -> CalibrationResult:
    """Compute the conformal anomaly threshold from validation scores.

    Pure function of the score multiset and ``r_nom``: the input order of
    scores is irrelevant and no randomness is involved.

    Parameters
    ----------
    validation_scores : array-like
        Anomaly scores of held-out nominal observations; non-empty, finite.
    r_nom : float
        Nominal success rate in [0, 1]. Callers may pass an override rather
        than the manifest estimate; the choice of value is theirs.
    """
    scores = np.asarray(validation_scores, dtype=np.float64).ravel()
    if scores.size == 0:
        raise ValueError("validation score set is empty")
    if not np.isfinite(scores).all():
        raise ValueError("validation scores contain a non-finite value")
    if not 0.0 <= r_nom <= 1.0:
        raise ValueError(f"r_nom must be in [0, 1], got {r_nom}")
    scores_sorted = np.sort(scores)
    n_val = int(scores_sorted.size)
    quantile_index = math.ceil((n_val + 1) * r_nom - _CEIL_GUARD)
    if quantile_index > n_val:
        tau = math.inf
    elif quantile_index < 1:
        tau = -math.inf
    else:
        tau = float(scores_sorted[quantile_index - 1])
    scores_sorted.setflags(write=False)
    return CalibrationResult(
        tau=tau,
        quantile_index=quantile_index,
        n_val=n_val,
        r_nom=float(r_nom),
        validation_scores_sorted=scores_sorted,
    )


def flagged_fraction(scores, tau: float) -> float:
    """Fraction of ``scores`` strictly greater than ``tau``."""
    arr = np.asarray(scores, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValueError("score set is empty")
    return int(np.count_nonzero(arr > tau)) / int(arr.size)


def nominal_anomaly_rate(validation_scores, result: CalibrationResult) -> float:
    """Fraction of nominal scores flagged by ``result.tau``.

    On the calibration scores themselves this is at most
    ``1 - r_nom + 1/n_val`` by construction; on exchangeable fresh scores its
    expectation is bounded by ``1 - r_nom``.
    """
    return flagged_fraction(validation_scores, result.tau)
