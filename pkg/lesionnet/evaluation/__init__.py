from .evaluate import EvaluationResult, evaluate, predict, write_score_table
from .metrics import (
    ConfusionMatrix,
    MetricsReport,
    balanced_accuracy,
    overall_accuracy,
    per_class_precision,
    per_class_recall,
)

__all__ = [
    "ConfusionMatrix",
    "EvaluationResult",
    "MetricsReport",
    "balanced_accuracy",
    "evaluate",
    "overall_accuracy",
    "per_class_precision",
    "per_class_recall",
    "predict",
    "write_score_table",
]
