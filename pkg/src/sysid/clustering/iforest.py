"""Isolation forest scoring used to drop sparse edge-region points."""

from __future__ import annotations

import math

import numpy as np

_EULER_GAMMA = 0.5772156649015329


def average_path_length(n) -> np.ndarray:
    """``c(n)``: mean unsuccessful-search path length of a BST with ``n`` nodes."""
    n = np.asarray(n, dtype=float)
    out = np.zeros_like(n)
    big = n > 2
    out[n == 2] = 1.0
    nb = n[big]
    out[big] = 2.0 * (np.log(nb - 1.0) + _EULER_GAMMA) - 2.0 * (nb - 1.0) / nb
    return out


class _Tree:
    __slots__ = ("feature", "threshold", "left", "right", "size", "depth")

    def __init__(self, x, rng, height_limit):
        feature, threshold, left, right, size, depth = [], [], [], [], [], []

        def grow(idx, d):
            node = len(feature)
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            size.append(len(idx))
            depth.append(d)
            if d >= height_limit or len(idx) <= 1:
                return node
            sub = x[idx]
            lo, hi = sub.min(0), sub.max(0)
            usable = np.flatnonzero(hi > lo)
            if usable.size == 0:
                return node
            q = int(usable[rng.integers(usable.size)])
            p = lo[q] + rng.random() * (hi[q] - lo[q])
            go_left = sub[:, q] < p
            feature[node] = q
            threshold[node] = p
            left[node] = grow(idx[go_left], d + 1)
            right[node] = grow(idx[~go_left], d + 1)
            return node

        grow(np.arange(x.shape[0]), 0)
        self.feature = np.array(feature)
        self.threshold = np.array(threshold)
        self.left = np.array(left)
        self.right = np.array(right)
        self.size = np.array(size)
        self.depth = np.array(depth)

    def path_length(self, x):
        node = np.zeros(x.shape[0], dtype=int)
        while True:
            feat = self.feature[node]
            inner = feat >= 0
            if not inner.any():
                break
            rows = np.flatnonzero(inner)
            n = node[rows]
            go_left = x[rows, feat[rows]] < self.threshold[n]
            node[rows] = np.where(go_left, self.left[n], self.right[n])
        return self.depth[node] + average_path_length(self.size[node])


class IsolationForest:
    """Ensemble of random axis-aligned isolation trees.

    Parameters
    ----------
    n_trees : int
        Number of trees.
    subsample : int
        Points drawn (without replacement) to grow each tree.
    seed : int
        Seed of the PCG64 stream used for all random choices.
    """

    def __init__(self, n_trees: int = 100, subsample: int = 256, seed: int = 0):
        self.n_trees = n_trees
        self.subsample = subsample
        self.seed = seed

    def fit(self, points):
        x = np.asarray(points, dtype=float)
        rng = np.random.Generator(np.random.PCG64(self.seed))
        self.sample_size_ = min(self.subsample, x.shape[0])
        height_limit = math.ceil(math.log2(max(self.sample_size_, 2)))
        self.trees_ = []
        for _ in range(self.n_trees):
            idx = rng.choice(x.shape[0], size=self.sample_size_, replace=False)
            self.trees_.append(_Tree(x[idx], rng, height_limit))
        return self

    def score(self, points) -> np.ndarray:
        """Anomaly score ``2 ** (-E[h(x)] / c(psi))`` in (0, 1]; higher is more isolated."""
        x = np.asarray(points, dtype=float)
        mean_path = np.mean([t.path_length(x) for t in self.trees_], axis=0)
        norm = average_path_length(self.sample_size_)
        if norm <= 0:
            return np.full(x.shape[0], 0.5)
        return 2.0 ** (-mean_path / norm)


def edge_filter(points, fraction: float = 0.05, n_trees: int = 100, subsample: int = 256,
                seed: int = 0) -> np.ndarray:
    """Indices (ascending) of the points kept after dropping the most isolated ones.

    Exactly ``ceil(fraction * N)`` points with the highest anomaly score are
    removed; ties go to the lower index first.
    """
    if not 0 <= fraction < 1:
        raise ValueError("fraction must lie in [0, 1)")
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    n_drop = math.ceil(fraction * n - 1e-9)  # guard 0.05 * 20000 round-off
    if n_drop == 0:
        return np.arange(n)
    scores = IsolationForest(n_trees, subsample, seed).fit(x).score(x)
    order = np.argsort(-scores, kind="stable")
    keep = np.ones(n, dtype=bool)
    keep[order[:n_drop]] = False
    return np.flatnonzero(keep)
