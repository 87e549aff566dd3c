"""Kramers-Moyal estimates of drift and diffusion from a sampled trajectory.

Two estimators are provided:

* :func:`finite_differences` -- one increment per consecutive pair,
  ``b_n = dx / dt`` and ``a_n = dx dx^T / dt``.
* :func:`weighted_estimates` -- Gaussian-kernel weighted averages of those
  increments around query points (Nadaraya-Watson with a full bandwidth
  matrix), optionally restricted to a subset of increments per query.

The bandwidth matrix ``H`` enters the kernel as
``exp(-0.5 (xn - x)^T H^{-1} (xn - x))``, so an isotropic ``H = diag(h, h)``
makes ``h`` a *variance*, not a length scale.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .simulate import Trajectory


@dataclass(frozen=True)
class RawIncrements:
    """Per-step finite-difference estimates anchored at ``anchors[n] = x_n``."""

    dt: float
    anchors: np.ndarray = field(repr=False)
    b_hat: np.ndarray = field(repr=False)

    @property
    def a_hat(self) -> np.ndarray:
        """``(N-1, D, D)`` rank-one diffusion estimates (materialised on demand)."""
        dx = self.b_hat * self.dt
        return dx[:, :, None] * dx[:, None, :] / self.dt

    def __len__(self) -> int:
        return self.b_hat.shape[0]

    @property
    def dim(self) -> int:
        return self.b_hat.shape[1]


@dataclass(frozen=True)
class PointEstimates:
    points: np.ndarray
    b_tilde: np.ndarray
    a_tilde: np.ndarray
    effective_weight: np.ndarray

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def finite_differences(traj: Trajectory) -> RawIncrements:
    """One increment per consecutive pair of samples, anchored at the left one."""
    x = traj.states
    dx = np.diff(x, axis=0)
    return RawIncrements(dt=traj.dt, anchors=x[:-1], b_hat=dx / traj.dt)


def subsample(raw: RawIncrements, stride: int) -> RawIncrements:
    """Every ``stride``-th increment (the time step of each pair is unchanged)."""
    if stride < 1:
        raise ValueError("stride must be at least 1")
    return RawIncrements(raw.dt, raw.anchors[::stride], raw.b_hat[::stride])


def gaussian_kernel(x, xn, h) -> float | np.ndarray:
    """``exp(-0.5 (xn - x)^T H^{-1} (xn - x))``; ``xn`` may hold many rows."""
    h = np.atleast_2d(np.asarray(h, dtype=float))
    h_inv = _bandwidth_inverse(h)
    diff = np.asarray(xn, dtype=float) - np.asarray(x, dtype=float)
    quad = np.einsum("...i,ij,...j->...", diff, h_inv, diff)
    return np.exp(-0.5 * quad)


def _bandwidth_inverse(h: np.ndarray) -> np.ndarray:
    if h.shape[0] != h.shape[1]:
        raise ValueError("degenerate bandwidth")
    try:
        chol = np.linalg.cholesky(0.5 * (h + h.T))
    except np.linalg.LinAlgError:
        raise ValueError("degenerate bandwidth") from None
    if np.min(np.diag(chol)) <= 1e-150:
        raise ValueError("degenerate bandwidth")
    inv_chol = np.linalg.inv(chol)
    return inv_chol.T @ inv_chol


def worker_count(requested: int | None = None) -> int:
    """Worker count: explicit request, else ``SYSID_THREADS`` (0 = auto)."""
    if requested is None:
        requested = int(os.environ.get("SYSID_THREADS", "0") or 0)
    if requested <= 0:
        requested = os.cpu_count() or 1
    return max(1, requested)


def _moment_columns(raw: RawIncrements) -> np.ndarray:
    """``[b_1..b_D, a_11, a_12, .., a_DD]`` per increment, shape (N-1, D + D^2)."""
    b = raw.b_hat
    n, dim = b.shape
    cols = np.empty((n, dim + dim * dim))
    cols[:, :dim] = b
    scaled = b * raw.dt
    for i in range(dim):
        for j in range(dim):
            cols[:, dim + i * dim + j] = b[:, i] * scaled[:, j]
    return cols


def weighted_estimates(
    raw: RawIncrements,
    reps,
    bandwidths,
    masks=None,
    *,
    base_points=None,
    weight_floor: float = 1e-12,
    workers: int | None = None,
) -> PointEstimates:
    """Kernel-weighted conditional moments at each representative point.

    Parameters
    ----------
    raw : RawIncrements
        Increments; ``raw.anchors`` are the points the kernel is centred on.
    reps : array_like, shape (M, D)
        Query points.
    bandwidths : array_like, shape (D, D) or (M, D, D)
        One bandwidth matrix for all queries, or one per query.
    masks : sequence of index arrays, optional
        Restrict the average at query ``m`` to ``raw`` rows ``masks[m]``.
        Queries that share a subset should share the same array object:
        the gathered rows are cached per object.
    base_points : array_like, shape (N, D), optional
        Kernel centres of the increments, one per row of ``raw``; defaults
        to ``raw.anchors``.
    weight_floor : float
        Smallest acceptable total kernel weight.
    workers : int, optional
        Thread count; defaults to ``SYSID_THREADS`` or the CPU count.
        Results do not depend on it.
    """
    reps = np.atleast_2d(np.asarray(reps, dtype=float))
    m, dim = reps.shape
    if dim != raw.dim:
        raise ValueError("representative points do not match the state dimension")
    bw = np.asarray(bandwidths, dtype=float)
    if bw.ndim == 2:
        bw = np.broadcast_to(bw, (m, dim, dim))
    if bw.shape != (m, dim, dim):
        raise ValueError("bandwidths must be (D, D) or (M, D, D)")
    if masks is not None and len(masks) != m:
        raise ValueError("one mask per representative point is required")

    h_inv = np.array([_bandwidth_inverse(h) for h in bw])
    moments = _moment_columns(raw)
    anchors = raw.anchors
    if base_points is not None:
        anchors = np.asarray(base_points, dtype=float)
        if anchors.shape != raw.anchors.shape:
            raise ValueError("base_points must have one D-vector per increment")

    # queries sharing one mask object share one gathered subset
    subsets = {}
    if masks is not None:
        for idx, sel in enumerate(masks):
            sel = np.asarray(sel)
            if sel.size == 0:
                raise ValueError(f"no support at representative point {idx} {reps[idx]}: empty mask")
            if id(masks[idx]) not in subsets:
                subsets[id(masks[idx])] = (anchors[sel], moments[sel])

    def one(idx):
        if masks is None:
            xa, mom = anchors, moments
        else:
            xa, mom = subsets[id(masks[idx])]
        diff = xa - reps[idx]
        quad = np.sum((diff @ h_inv[idx]) * diff, axis=1)
        w = np.exp(-0.5 * quad)
        total = np.sum(w)
        if not total >= weight_floor:
            raise ValueError(
                f"no support at representative point {idx} {reps[idx]}: "
                f"kernel mass {total:.3g} below floor {weight_floor:g}"
            )
        return total, (w @ mom) / total

    n_workers = min(worker_count(workers), m)
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(one, range(m)))
    else:
        results = [one(i) for i in range(m)]

    weight = np.array([r[0] for r in results])
    avg = np.array([r[1] for r in results]).reshape(m, dim + dim * dim)
    b_tilde = avg[:, :dim]
    a_tilde = avg[:, dim:].reshape(m, dim, dim)
    a_tilde = 0.5 * (a_tilde + np.swapaxes(a_tilde, 1, 2))
    return PointEstimates(reps.copy(), b_tilde, a_tilde, weight)


def from_exact_model(model, points) -> PointEstimates:
    """Point estimates holding the true ``b`` and ``A`` of ``model``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    b, a = model.evaluate_many(points)
    return PointEstimates(points, b, a, np.ones(points.shape[0]))


def from_increments(raw: RawIncrements) -> PointEstimates:
    """Treat every raw increment as its own point estimate (naive pipeline)."""
    return PointEstimates(raw.anchors, raw.b_hat, raw.a_hat, np.ones(len(raw)))
