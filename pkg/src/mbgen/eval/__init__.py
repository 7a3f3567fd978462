"""Ranking metrics, task-level evaluation and reference rankers."""

from .evaluate import (
    JOINT_TASKS, EmptyEvaluationError, GenerativeRanker, MetricsReport, OracleRanker, UniformRandomRanker,
    beam_count_sweep, evaluate_task, evaluation_queries, next_behavior_accuracy, rows_csv, score_predictions,
)
from .metrics import binomial_band, first_hit_rank, hit_rate_at_k, ndcg_at_k

__all__ = [
    "JOINT_TASKS", "EmptyEvaluationError", "GenerativeRanker", "MetricsReport", "OracleRanker",
    "UniformRandomRanker", "beam_count_sweep", "evaluate_task", "evaluation_queries",
    "next_behavior_accuracy", "rows_csv", "score_predictions", "binomial_band", "first_hit_rank",
    "hit_rate_at_k", "ndcg_at_k",
]
