"""Lloyd's k-means with k-means++ seeding."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class KMeansResult:
    centroids: np.ndarray
    labels: np.ndarray = field(repr=False)
    wcss: float
    history: tuple = field(default=(), repr=False)
    n_iter: int = 0


def _sq_dist(x, c):
    d = (x * x).sum(1)[:, None] - 2.0 * x @ c.T + (c * c).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _plus_plus(x, k, rng):
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    closest = ((x - centers[0]) ** 2).sum(1)
    for i in range(1, k):
        total = closest.sum()
        if total <= 0:
            # remaining points coincide with chosen centres
            raise ValueError("k exceeds the number of distinct points")
        idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
        idx = min(idx, n - 1)
        centers[i] = x[idx]
        closest = np.minimum(closest, ((x - centers[i]) ** 2).sum(1))
    return centers


def kmeans(points, k: int, seed: int = 0, max_iter: int = 300, tol: float = 1e-10) -> KMeansResult:
    """Cluster ``points`` into ``k`` groups.

    Stops when no centroid moves more than ``tol`` or after ``max_iter``
    Lloyd iterations. ``history`` holds the within-cluster sum of squares
    after every assignment step.
    """
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if k < 1:
        raise ValueError("k must be at least 1")
    if x.shape[0] == 0:
        raise ValueError("no points to cluster")
    n_distinct = np.unique(x, axis=0).shape[0]
    if k > n_distinct:
        raise ValueError(f"k={k} exceeds the number of distinct points ({n_distinct})")

    rng = np.random.Generator(np.random.PCG64(seed))
    centroids = _plus_plus(x, k, rng)
    history = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        labels = _sq_dist(x, centroids).argmin(1)
        own = ((x - centroids[labels]) ** 2).sum(1)
        history.append(float(own.sum()))
        new = np.empty_like(centroids)
        counts = np.bincount(labels, minlength=k)
        for j in range(k):
            if counts[j]:
                new[j] = x[labels == j].mean(0)
            else:
                # relocate an empty cluster onto the worst-served point
                far = int(own.argmax())
                new[j] = x[far]
                own[far] = 0.0
        shift = np.sqrt(((new - centroids) ** 2).sum(1)).max()
        centroids = new
        if shift <= tol:
            break

    labels = _sq_dist(x, centroids).argmin(1)
    wcss = float(((x - centroids[labels]) ** 2).sum())
    return KMeansResult(centroids, labels, wcss, tuple(history), n_iter)
