"""Timing-based detection: alpha masks, KNN, random forest, evaluation."""

from dnstiming.detect.evaluate import (
    Evaluation, EvaluationError, Forest, Knn, Metrics, NaiveMask, attack_task, cache_task,
    distribution_check, evaluate, level_task,
)
from dnstiming.detect.forest import ForestModel, rf_fit, rf_predict
from dnstiming.detect.knn import KnnModel, ModelError, knn_fit, knn_predict
from dnstiming.detect.mask import (
    AlphaMask, alpha_grid, attack_success_rate, build_alpha_mask, classify_mask, majority_mask, sweep,
)

__all__ = [
    "AlphaMask", "Evaluation", "EvaluationError", "Forest", "ForestModel", "Knn", "KnnModel", "Metrics",
    "ModelError", "NaiveMask", "alpha_grid", "attack_success_rate", "attack_task", "build_alpha_mask",
    "cache_task", "classify_mask", "distribution_check", "evaluate", "knn_fit", "knn_predict", "level_task",
    "majority_mask", "rf_fit", "rf_predict", "sweep",
]
