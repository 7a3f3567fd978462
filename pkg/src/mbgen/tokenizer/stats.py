"""Balance statistics of item code tables."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class CodeStats:
    variances: list[float]   # variances[l-1] is the histogram variance over all K**l prefixes
    collisions: int          # items whose full code is shared with at least one other item

    def as_dict(self) -> dict:
        return {f"L{i + 1}_variance": v for i, v in enumerate(self.variances)} | {"collisions": self.collisions}


def prefix_histogram(codes: np.ndarray, K: int, level: int) -> np.ndarray:
    """Item counts for every one of the ``K**level`` possible ``level``-digit prefixes."""
    codes = np.asarray(codes, dtype=np.int64)
    if np.any(codes[:, :level] >= K) or np.any(codes[:, :level] < 0):
        raise ValueError(f"digits outside [0, {K}) in the first {level} levels")
    key = np.zeros(len(codes), dtype=np.int64)
    for j in range(level):
        key = key * K + codes[:, j]
    return np.bincount(key, minlength=K ** level)


def code_distribution_stats(codes: np.ndarray, K: int, levels: int | None = None) -> CodeStats:
    """Population variance of each prefix histogram plus the full-code collision count."""
    codes = np.asarray(codes, dtype=np.int64)
    levels = codes.shape[1] if levels is None else levels
    variances = [float(np.var(prefix_histogram(codes, K, lvl))) for lvl in range(1, levels + 1)]
    _, inverse, counts = np.unique(codes[:, :levels], axis=0, return_inverse=True, return_counts=True)
    collisions = int(np.sum(counts[inverse.reshape(-1)] > 1))
    return CodeStats(variances, collisions)


def minimal_variance(n_items: int, n_bins: int) -> float:
    """Smallest histogram variance possible for ``n_items`` spread over ``n_bins``."""
    rem = n_items % n_bins
    return rem * (n_bins - rem) / n_bins ** 2


def one_hot_variance(n_items: int, n_bins: int) -> float:
    """Variance when every item lands in the same bin."""
    return n_items ** 2 * (n_bins - 1) / n_bins ** 2
