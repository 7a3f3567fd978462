"""Item codes (balanced semantic IDs, chunked IDs, an RQ baseline) and the token vocabulary."""

from .codes import (
    CapacityError, CodeAssignment, ItemTokenizer, Level2Result, RQReport, assign_level3, build_cid,
    digits_to_int, fit_level1, fit_level2, fit_rqvae_baseline, fit_sid, int_to_digits,
)
from .config import TokenizerConfig
from .kmeans import KMeansResult, kmeans, kmeans_plusplus
from .quantizer import QuantizedAutoencoder, nearest
from .stats import CodeStats, code_distribution_stats, minimal_variance, one_hot_variance, prefix_histogram
from .vocab import (
    BOS, EOS, PAD, TokenError, Vocabulary, build_model_sequence, detokenize_interaction, hash_user,
    role_name, tokenize_interaction,
)

__all__ = [
    "CapacityError", "CodeAssignment", "ItemTokenizer", "Level2Result", "RQReport", "assign_level3",
    "build_cid", "digits_to_int", "fit_level1", "fit_level2", "fit_rqvae_baseline", "fit_sid",
    "int_to_digits", "TokenizerConfig", "KMeansResult", "kmeans", "kmeans_plusplus",
    "QuantizedAutoencoder", "nearest", "CodeStats", "code_distribution_stats", "minimal_variance",
    "one_hot_variance", "prefix_histogram", "BOS", "EOS", "PAD", "TokenError", "Vocabulary",
    "build_model_sequence", "detokenize_interaction", "hash_user", "role_name", "tokenize_interaction",
]
