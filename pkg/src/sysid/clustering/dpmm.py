"""Variational Dirichlet-process Gaussian mixture (truncated stick-breaking).

Mean-field family: Beta sticks, Normal-Wishart component parameters and
categorical assignments, updated by coordinate ascent. Priors are weak and
data-driven: the mean prior is the data mean, the Wishart scale prior is the
data covariance with ``D`` degrees of freedom, and the mean precision prior
is 1. Initial responsibilities come from a hard k-means partition.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betaln, digamma, gammaln, logsumexp

from .kmeans import kmeans

log = logging.getLogger(__name__)

_TINY = 10 * np.finfo(float).eps


@dataclass(frozen=True)
class DpmmModel:
    """Fitted variational posterior.

    ``covariances[k]`` is the posterior-mean covariance ``W_k^{-1} / nu_k``.
    ``sticks`` holds the Beta parameters of the stick-breaking fractions,
    ``precision_scale`` the Wishart scale matrices ``W_k``.
    """

    max_components: int
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    sticks: np.ndarray = field(repr=False)
    mean_precision: np.ndarray = field(repr=False)
    dof: np.ndarray = field(repr=False)
    precision_scale: np.ndarray = field(repr=False)
    responsibilities: np.ndarray | None = field(default=None, repr=False)
    elbo_history: tuple = field(default=(), repr=False)
    converged: bool = True
    n_iter: int = 0
    seed: int = 0
    weight_floor: float = 1e-2

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def effective_components(self) -> int:
        return int(np.sum(self.weights > self.weight_floor))

    @property
    def active(self) -> np.ndarray:
        return np.flatnonzero(self.weights > self.weight_floor)

    def log_responsibility(self, x) -> np.ndarray:
        """Unnormalised variational log responsibilities, shape (N, K)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return _log_rho(x, self.sticks, self.means, self.mean_precision, self.dof,
                        self.precision_scale)

    @classmethod
    def from_components(cls, weights, means, covariances, n_points: float = 1000.0,
                        weight_floor: float = 1e-2, seed: int = 0) -> DpmmModel:
        """Model whose posterior is concentrated at the given mixture.

        Mostly for deserialisation and testing: sticks, mean precision and
        degrees of freedom are set as if ``n_points`` observations had been
        distributed according to ``weights``.
        """
        w = np.asarray(weights, dtype=float)
        w = w / w.sum()
        means = np.asarray(means, dtype=float)
        cov = np.asarray(covariances, dtype=float)
        k, dim = means.shape
        counts = w * n_points
        tail = np.concatenate([np.cumsum(counts[::-1])[::-1][1:], [0.0]])
        sticks = np.column_stack([1.0 + counts, 1.0 + tail])
        dof = dim + counts
        scale = np.linalg.inv(cov) / dof[:, None, None]
        return cls(k, w, means, cov, sticks, 1.0 + counts, dof, scale,
                   weight_floor=weight_floor, seed=seed)


def _expected_log_weights(sticks):
    total = digamma(sticks.sum(1))
    e_log_v = digamma(sticks[:, 0]) - total
    e_log_1mv = digamma(sticks[:, 1]) - total
    return e_log_v + np.concatenate([[0.0], np.cumsum(e_log_1mv)[:-1]])


def _expected_log_det(dof, scale):
    dim = scale.shape[1]
    _, logdet = np.linalg.slogdet(scale)
    return (digamma(0.5 * (dof[:, None] - np.arange(dim)[None, :])).sum(1)
            + dim * np.log(2.0) + logdet)


def _log_rho(x, sticks, means, mean_precision, dof, scale):
    n, dim = x.shape
    k = means.shape[0]
    quad = np.empty((n, k))
    for j in range(k):
        chol = np.linalg.cholesky(scale[j])
        y = (x - means[j]) @ chol
        quad[:, j] = np.einsum("ni,ni->n", y, y)
    return (_expected_log_weights(sticks)[None, :]
            + 0.5 * _expected_log_det(dof, scale)[None, :]
            - 0.5 * dim * np.log(2.0 * np.pi)
            - 0.5 * (dim / mean_precision[None, :] + dof[None, :] * quad))


def _log_wishart_norm(scale, dof):
    """``ln B(W, nu)``, the Wishart normaliser."""
    dim = scale.shape[-1]
    _, logdet = np.linalg.slogdet(scale)
    return (-0.5 * dof * logdet
            - (0.5 * dof * dim * np.log(2.0) + 0.25 * dim * (dim - 1) * np.log(np.pi)
               + gammaln(0.5 * (dof[:, None] - np.arange(dim)[None, :])).sum(1)))


@dataclass
class _Prior:
    concentration: float
    mean: np.ndarray
    mean_precision: float
    dof: float
    scale_inv: np.ndarray  # W0^{-1}


def _m_step(x, resp, prior):
    nk = resp.sum(0) + _TINY
    xbar = (resp.T @ x) / nk[:, None]
    k, dim = resp.shape[1], x.shape[1]
    scatter = np.empty((k, dim, dim))
    for j in range(k):
        diff = x - xbar[j]
        scatter[j] = (resp[:, j, None] * diff).T @ diff  # N_k S_k
    tail = np.concatenate([np.cumsum(nk[::-1])[::-1][1:], [0.0]])
    sticks = np.column_stack([1.0 + nk, prior.concentration + tail])
    beta = prior.mean_precision + nk
    means = (prior.mean_precision * prior.mean + nk[:, None] * xbar) / beta[:, None]
    dof = prior.dof + nk
    scale = np.empty((k, dim, dim))
    for j in range(k):
        dm = (xbar[j] - prior.mean)[:, None]
        w_inv = (prior.scale_inv + scatter[j]
                 + prior.mean_precision * nk[j] / (prior.mean_precision + nk[j]) * (dm @ dm.T))
        w_inv = 0.5 * (w_inv + w_inv.T)
        scale[j] = np.linalg.inv(w_inv)
        scale[j] = 0.5 * (scale[j] + scale[j].T)
    return dict(nk=nk, xbar=xbar, scatter=scatter, sticks=sticks, beta=beta, means=means,
                dof=dof, scale=scale)


def _elbo(x, resp, p, prior):
    """Evidence lower bound for responsibilities ``resp`` and parameters ``p``."""
    n, dim = x.shape
    nk, xbar, scatter = p["nk"], p["xbar"], p["scatter"]
    sticks, beta, m, dof, w = p["sticks"], p["beta"], p["means"], p["dof"], p["scale"]
    k = m.shape[0]
    e_logdet = _expected_log_det(dof, w)
    total_dig = digamma(sticks.sum(1))
    e_log_v = digamma(sticks[:, 0]) - total_dig
    e_log_1mv = digamma(sticks[:, 1]) - total_dig
    e_log_pi = e_log_v + np.concatenate([[0.0], np.cumsum(e_log_1mv)[:-1]])

    like = 0.0
    prior_mu_lam = 0.0
    q_mu_lam = 0.0
    for j in range(k):
        dx = xbar[j] - m[j]
        dm = m[j] - prior.mean
        like += 0.5 * (nk[j] * (e_logdet[j] - dim / beta[j] - dim * np.log(2 * np.pi))
                       - dof[j] * np.trace(scatter[j] @ w[j])
                       - nk[j] * dof[j] * dx @ w[j] @ dx)
        prior_mu_lam += 0.5 * (dim * np.log(prior.mean_precision / (2 * np.pi)) + e_logdet[j]
                               - dim * prior.mean_precision / beta[j]
                               - prior.mean_precision * dof[j] * dm @ w[j] @ dm)
        prior_mu_lam += 0.5 * (prior.dof - dim - 1) * e_logdet[j]
        prior_mu_lam -= 0.5 * dof[j] * np.trace(prior.scale_inv @ w[j])
        q_mu_lam += 0.5 * e_logdet[j] + 0.5 * dim * np.log(beta[j] / (2 * np.pi)) - 0.5 * dim
    scale0 = np.linalg.inv(prior.scale_inv)[None]
    prior_mu_lam += k * _log_wishart_norm(scale0, np.array([prior.dof]))[0]
    entropy_wishart = (-_log_wishart_norm(w, dof) - 0.5 * (dof - dim - 1) * e_logdet
                       + 0.5 * dof * dim)
    q_mu_lam -= entropy_wishart.sum()

    z_term = float(resp.sum(0) @ e_log_pi)
    g = prior.concentration
    v_prior = k * np.log(g) + (g - 1.0) * e_log_1mv.sum()
    v_q = (-betaln(sticks[:, 0], sticks[:, 1]) + (sticks[:, 0] - 1) * e_log_v
           + (sticks[:, 1] - 1) * e_log_1mv).sum()
    with np.errstate(divide="ignore", invalid="ignore"):
        ent_z = np.where(resp > 0, resp * np.log(resp), 0.0).sum()
    return float(like + z_term + v_prior + prior_mu_lam - ent_z - v_q - q_mu_lam)


def dpmm_fit(points, max_components: int = 10, seed: int = 0, max_iter: int = 500,
             tol: float = 1e-3, concentration: float = 1.0, mean_precision: float = 1.0,
             weight_floor: float = 1e-2) -> DpmmModel:
    """Fit the truncated DP mixture by coordinate-ascent variational inference.

    Iterates until the evidence lower bound improves by less than ``tol``
    (absolute) or ``max_iter`` iterations; when the latter happens the last
    model is returned with ``converged=False``.
    """
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, dim = x.shape
    if n < max_components:
        raise ValueError("need at least max_components points")
    cov = np.atleast_2d(np.cov(x, rowvar=False))
    prior = _Prior(concentration, x.mean(0), mean_precision, float(dim), cov)

    init = kmeans(x, max_components, seed=seed, max_iter=300, tol=1e-10)
    resp = np.zeros((n, max_components))
    resp[np.arange(n), init.labels] = 1.0

    history = []
    converged = False
    params = _m_step(x, resp, prior)
    history.append(_elbo(x, resp, params, prior))
    it = 0
    for it in range(1, max_iter + 1):
        log_rho = _log_rho(x, params["sticks"], params["means"], params["beta"],
                           params["dof"], params["scale"])
        resp = np.exp(log_rho - logsumexp(log_rho, axis=1, keepdims=True))
        params = _m_step(x, resp, prior)
        history.append(_elbo(x, resp, params, prior))
        if abs(history[-1] - history[-2]) < tol:
            converged = True
            break
    if not converged:
        log.warning("dpmm_fit did not converge in %d iterations", max_iter)

    sticks = params["sticks"]
    frac = sticks[:, 0] / sticks.sum(1)
    weights = frac * np.concatenate([[1.0], np.cumprod(1.0 - frac)[:-1]])
    weights = weights / weights.sum()
    covariances = np.linalg.inv(params["scale"]) / params["dof"][:, None, None]
    covariances = 0.5 * (covariances + np.swapaxes(covariances, 1, 2))
    return DpmmModel(
        max_components=max_components,
        weights=weights,
        means=params["means"],
        covariances=covariances,
        sticks=sticks,
        mean_precision=params["beta"],
        dof=params["dof"],
        precision_scale=params["scale"],
        responsibilities=resp,
        elbo_history=tuple(history),
        converged=converged,
        n_iter=it,
        seed=seed,
        weight_floor=weight_floor,
    )


def dpmm_assign(model: DpmmModel, x) -> np.ndarray | int:
    """Most responsible component among those above the weight floor.

    Accepts one point (returns an int) or an (N, D) array. Ties go to the
    lowest component index.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    active = model.active
    if active.size == 0:
        active = np.arange(model.max_components)
    log_rho = model.log_responsibility(np.atleast_2d(x))[:, active]
    labels = active[np.argmax(log_rho, axis=1)]
    return int(labels[0]) if single else labels
