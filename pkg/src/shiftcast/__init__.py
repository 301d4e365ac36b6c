"""shiftcast: predict policy performance degradation under environmental shift.

Given embedding sets for nominal observations and for per-factor shifted
observations (generated edits or real recordings), shiftcast calibrates a
conformal anomaly threshold on held-out nominal scores, computes per-factor
anomaly rates, predicts success as one minus the anomaly rate, and evaluates
predictions against measured success rates.

The edit-generation front end (image edits filtered by a critic) lives in
:mod:`shiftcast.editing`; synthetic ground-truth worlds and the k/reference
size sweep live in :mod:`shiftcast.synth`.
"""

from .calibration import CalibrationResult, calibrate, flagged_fraction, nominal_anomaly_rate
from .evaluation import (
    EvaluationReport,
    FactorComparison,
    average_ranks,
    avg_prediction_error,
    evaluate,
    render_evaluation_table,
    spearman_rho,
)
from .prediction import (
    FactorPrediction,
    RedTeamReport,
    SmallFactorSetWarning,
    anomaly_rate,
    predict_all,
    predict_from_sets,
    rank_factors,
    report_to_json_dict,
    select_worst,
)
from .scoring import ScorerConfig, brute_force_score, score, score_set
from .store import (
    EmbeddingDataError,
    EmbeddingFormatError,
    EmbeddingSet,
    Manifest,
    ManifestError,
    cosine_distance,
    load_embedding_set,
    load_manifest,
    load_manifest_sets,
    save_embedding_set,
    save_manifest,
)

__version__ = "0.1.0"

__all__ = [
    "CalibrationResult",
    "EmbeddingDataError",
    "EmbeddingFormatError",
    "EmbeddingSet",
    "EvaluationReport",
    "FactorComparison",
    "FactorPrediction",
    "Manifest",
    "ManifestError",
    "RedTeamReport",
    "ScorerConfig",
    "SmallFactorSetWarning",
    "anomaly_rate",
    "average_ranks",
    "avg_prediction_error",
    "brute_force_score",
    "calibrate",
    "cosine_distance",
    "evaluate",
    "flagged_fraction",
    "load_embedding_set",
    "load_manifest",
    "load_manifest_sets",
    "nominal_anomaly_rate",
    "predict_all",
    "predict_from_sets",
    "rank_factors",
    "render_evaluation_table",
    "report_to_json_dict",
    "save_embedding_set",
    "save_manifest",
    "score",
    "score_set",
    "select_worst",
    "spearman_rho",
]
