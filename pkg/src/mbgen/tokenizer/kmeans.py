"""Lloyd's k-means with k-means++ seeding and farthest-point empty-cluster repair."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class KMeansResult:
    centers: np.ndarray
    labels: np.ndarray
    n_iter: int
    inertia: float


def sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = (x * x).sum(1)[:, None] - 2.0 * x @ c.T + (c * c).sum(1)[None, :]
    return np.maximum(d, 0.0)


def kmeans_plusplus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    idx = [int(rng.integers(n))]
    d = sq_dists(x, x[idx[0]][None])[:, 0]
    for _ in range(1, k):
        total = d.sum()
        if total <= 0:
            # every point coincides with a chosen center; fall back to unused points
            rest = np.setdiff1d(np.arange(n), idx)
            nxt = int(rng.choice(rest)) if len(rest) else int(rng.integers(n))
        else:
            nxt = int(np.searchsorted(np.cumsum(d), rng.random() * total, side="right"))
            nxt = min(nxt, n - 1)
        idx.append(nxt)
        d = np.minimum(d, sq_dists(x, x[nxt][None])[:, 0])
    return x[idx].copy()


def kmeans(x: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 100,
           tol: float = 1e-6) -> KMeansResult:
    """Cluster rows of ``x`` into ``k`` groups.

    Stops after ``max_iter`` Lloyd steps or when the squared center shift,
    relative to the squared center norms, falls below ``tol``. A cluster that
    loses all its points is re-seeded at the point farthest from its center.
    Distance ties go to the lowest center index.
    """
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n_points, got k={k}, n={n}")
    centers = kmeans_plusplus(x, k, rng)
    labels = np.zeros(n, dtype=np.int64)
    it = 0
    for it in range(1, max_iter + 1):
        d = sq_dists(x, centers)
        labels = np.argmin(d, axis=1)
        new = centers.copy()
        counts = np.bincount(labels, minlength=k)
        for j in np.nonzero(counts)[0]:
            new[j] = x[labels == j].mean(axis=0)
        empty = np.nonzero(counts == 0)[0]
        if len(empty):
            far = d[np.arange(n), labels].copy()
            for j in empty:
                p = int(np.argmax(far))
                new[j] = x[p]
                labels[p] = j
                far[p] = -1.0
        shift = float(((new - centers) ** 2).sum())
        scale = float((centers ** 2).sum()) + 1e-12
        centers = new
        if len(empty) == 0 and shift / scale < tol:
            break
    d = sq_dists(x, centers)
    labels = np.argmin(d, axis=1)
    return KMeansResult(centers, labels, it, float(d[np.arange(n), labels].sum()))
