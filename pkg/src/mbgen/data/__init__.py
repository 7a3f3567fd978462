"""Interaction logs, leave-one-out splits and planted synthetic data."""

from .dataset import (
    TEST, TRAIN, VALID, BehaviorVocab, IngestError, Interaction, InteractionDataset, Query,
    UserSequence, ingest, load_item_features, truncate_history,
)
from .synthetic import (
    BayesReference, SyntheticSpec, bayes_reference, default_transition, generate_synthetic,
    joint_stationary, planted_spec,
)

__all__ = [
    "TRAIN", "VALID", "TEST", "BehaviorVocab", "IngestError", "Interaction", "InteractionDataset",
    "Query", "UserSequence", "ingest", "load_item_features", "truncate_history",
    "BayesReference", "SyntheticSpec", "bayes_reference", "default_transition",
    "generate_synthetic", "joint_stationary", "planted_spec",
]
