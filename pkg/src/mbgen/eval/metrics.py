from __future__ import annotations

import numpy as np


def first_hit_rank(ranked, truth) -> int | None:
    """1-based rank of ``truth`` in ``ranked`` (``None`` when absent).

    Elements are compared with ``==``, so tuples such as (behavior, item) work.
    """
    for r, x in enumerate(ranked, start=1):
        if x == truth:
            return r
    return None


def hit_rate_at_k(ranked, truth, k: int) -> float:
    if k < 1:
        raise ValueError("K must be >= 1")
    r = first_hit_rank(list(ranked)[:k], truth)
    return 0.0 if r is None else 1.0


def ndcg_at_k(ranked, truth, k: int) -> float:
    """Single-relevant-item NDCG: ``1 / log2(1 + rank)`` inside the cutoff, else 0."""
    if k < 1:
        raise ValueError("K must be >= 1")
    r = first_hit_rank(list(ranked)[:k], truth)
    return 0.0 if r is None else float(1.0 / np.log2(1.0 + r))


def binomial_band(p: float, n: int, sigmas: float = 3.0) -> tuple[float, float]:
    """``p +/- sigmas * sqrt(p(1-p)/n)`` clipped to [0, 1]."""
    half = sigmas * np.sqrt(p * (1 - p) / n)
    return max(0.0, p - half), min(1.0, p + half)
