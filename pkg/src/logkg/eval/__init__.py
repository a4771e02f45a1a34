"""Evaluation: graph metrics, tactics metrics, diverse sampling, LLM judge."""

from .judge import geval_score, parse_score
from .metrics import (
    GoldPair,
    MetricsReport,
    entity_linking_accuracy,
    read_gold,
    relationship_linking_accuracy,
    run_metrics,
    tactics_prf,
    tactics_report,
    triple_prf,
)
from .sampler import cosine_distance, sample_dataset

__all__ = [
    "GoldPair",
    "MetricsReport",
    "cosine_distance",
    "entity_linking_accuracy",
    "geval_score",
    "parse_score",
    "read_gold",
    "relationship_linking_accuracy",
    "run_metrics",
    "sample_dataset",
    "tactics_prf",
    "tactics_report",
    "triple_prf",
]
