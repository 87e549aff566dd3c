"""Dense linear-algebra helpers shared by the estimation stages."""

from __future__ import annotations

import numpy as np


def _as_finite_matrix(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or not np.all(np.isfinite(m)):
        raise ValueError("invalid matrix")
    return m


def default_rcond(shape) -> float:
    return 1e-10 * max(shape)


def pinv(m, rcond: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudo-inverse through an SVD.

    Singular values below ``rcond * s_max`` are treated as zero. When
    ``rcond`` is None it defaults to ``1e-10 * max(rows, cols)``.
    """
    m = _as_finite_matrix(m)
    if rcond is None:
        rcond = default_rcond(m.shape)
    if rcond < 0:
        raise ValueError("rcond must be non-negative")
    if m.size == 0:
        return np.zeros(m.shape[::-1])
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    cutoff = rcond * (s[0] if s.size else 0.0)
    keep = s > cutoff
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    return (vt.T * s_inv) @ u.T


def cholesky_psd(a, clamp_eps: float = 1e-12) -> np.ndarray:
    """Lower-triangular factor of a symmetric matrix, repairing indefiniteness.

    Plain Cholesky is tried first. If it fails, eigenvalues below
    ``clamp_eps`` are raised to ``clamp_eps`` and the repaired matrix is
    factored instead.
    """
    a = _as_finite_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise ValueError("not symmetric")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-10):
        raise ValueError("not symmetric")
    a = 0.5 * (a + a.T)
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        pass
    w, v = np.linalg.eigh(a)
    w = np.maximum(w, clamp_eps)
    repaired = (v * w) @ v.T
    repaired = 0.5 * (repaired + repaired.T)
    try:
        return np.linalg.cholesky(repaired)
    except np.linalg.LinAlgError:
        # clamp_eps below round-off: fall back to a QR of the symmetric root
        root = v * np.sqrt(w)
        r = np.linalg.qr(root.T, mode="r")
        lower = r.T
        signs = np.where(np.diag(lower) < 0, -1.0, 1.0)
        return lower * signs


def sample_covariance(points) -> np.ndarray:
    """Unbiased sample covariance of a set of D-vectors (one per row)."""
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise ValueError("insufficient data")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (x.shape[0] - 1)
    return 0.5 * (cov + cov.T)
