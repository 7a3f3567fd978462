"""Constrained beam search, the prediction tasks and behavior-aware sampling."""

from .beam import RankedPrediction, beam_search, exhaustive_ranking
from .tasks import TASKS, Predictor, allocate_slots, dump_predictions, predictions_csv
from .trie import CodeTrie

__all__ = [
    "RankedPrediction", "beam_search", "exhaustive_ranking", "TASKS", "Predictor", "allocate_slots",
    "dump_predictions", "predictions_csv", "CodeTrie",
]
