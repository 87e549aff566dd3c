"""Generator EDMD: regress the Koopman generator onto a monomial dictionary.

Convention: row ``k`` of the generator matrix ``L`` holds the coefficients of
``d/dt psi_k`` in the dictionary, so ``(L psi)(x)`` approximates the time
derivative of every basis function. Reports show ``L.T``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numba
import numpy as np

from . import linalg
from .dictionary import Dictionary, iter_pairs
from .simulate import _integrate_cholesky

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GeneratorMatrix:
    dictionary: Dictionary
    entries: np.ndarray = field(repr=False)
    method: str = "ols"
    lam: float = 0.0

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        n = self.dictionary.size
        if entries.shape != (n, n):
            raise ValueError("generator matrix does not match the dictionary")
        if not np.all(np.isfinite(entries)):
            raise ValueError("generator matrix has non-finite entries")
        object.__setattr__(self, "entries", entries)

    @property
    def transposed(self) -> np.ndarray:
        return self.entries.T


@dataclass(frozen=True)
class ExtractedCoefficients:
    """Drift ``(D, N_dic)`` and diffusion-product ``(D, D, N_dic)`` polynomials."""

    dictionary: Dictionary
    drift: np.ndarray = field(repr=False)
    a_poly: np.ndarray = field(repr=False)
    overflow: float = 0.0
    warnings: tuple = ()

    def drift_at(self, x) -> np.ndarray:
        psi = self.dictionary.evaluate(np.atleast_2d(x))
        return psi @ self.drift.T

    def diffusion_at(self, x) -> np.ndarray:
        psi = self.dictionary.evaluate(np.atleast_2d(x))
        return np.einsum("ijk,nk->nij", self.a_poly, psi)


def compute_dpsi(d: Dictionary, x, b_hat, a_hat) -> np.ndarray:
    """Generator applied to each basis function with the given ``b`` and ``A``.

    ``dpsi_k = sum_d b_d d/dx_d psi_k + 1/2 sum_ij a_ij d2/dx_i dx_j psi_k``.
    Accepts a single point or stacked points (leading axis N).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    b = np.asarray(b_hat, dtype=float).reshape(x.shape[0], d.dim)
    a = np.asarray(a_hat, dtype=float).reshape(x.shape[0], d.dim, d.dim)
    if x.shape[1] != d.dim:
        raise ValueError("dimension mismatch between points and dictionary")
    first = np.einsum("nkd,nd->nk", d.gradients(x), b)
    second = np.einsum("nkij,nij->nk", d.hessians(x), a)
    out = first + 0.5 * second
    return out[0] if single else out


def _design(d: Dictionary, estimates):
    psi = d.evaluate(estimates.points)
    dpsi = compute_dpsi(d, estimates.points, estimates.b_tilde, estimates.a_tilde)
    return psi, dpsi


def fit_generator_ols(d: Dictionary, estimates, rcond: float | None = None) -> GeneratorMatrix:
    """``L = F G^+`` from point estimates (anything with ``points``, ``b_tilde``, ``a_tilde``)."""
    psi, dpsi = _design(d, estimates)
    return GeneratorMatrix(d, solve_ols(psi, dpsi, rcond), method="ols", lam=0.0)


def solve_ols(psi, dpsi, rcond: float | None = None) -> np.ndarray:
    """``F G^+`` with ``G = psi^T psi / N`` and ``F = dpsi^T psi / N``."""
    psi = np.asarray(psi, dtype=float)
    dpsi = np.asarray(dpsi, dtype=float)
    n = psi.shape[0]
    if n < 1:
        raise ValueError("at least one point is required")
    g = psi.T @ psi / n
    f = dpsi.T @ psi / n
    if not np.any(g):
        raise ValueError("degenerate data")
    g = 0.5 * (g + g.T)
    return f @ linalg.pinv(g, rcond)


@dataclass
class LassoTrace:
    sweeps: np.ndarray
    converged: np.ndarray
    objective: np.ndarray | None = None


def lasso_rows(features, targets, lam: float, tol: float = 1e-10, max_sweeps: int = 10_000,
               record: bool = False):
    """Row-wise lasso: for each target column ``y`` minimise ``|y - X w|^2 + lam |w|_1``.

    Cyclic coordinate descent on the shared Gram matrix. Rows that have not
    settled after ``max_sweeps`` sweeps (monomial features are badly
    conditioned) are finished by feature-sign search, which terminates at
    a point satisfying the optimality conditions. Returns the coefficient
    matrix ``W`` (one row per target column) and a :class:`LassoTrace`.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    x = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    gram = x.T @ x
    gram = 0.5 * (gram + gram.T)
    corr = np.ascontiguousarray((x.T @ y).T)
    yy = np.einsum("nk,nk->k", y, y)
    w, sweeps, conv, hist = _lasso_cd(gram, corr, yy, float(lam), float(tol), int(max_sweeps), record)
    for r in np.flatnonzero(~conv):
        w[r], conv[r] = _feature_sign(gram, corr[r], w[r], float(lam))
    trace = LassoTrace(sweeps, conv, hist if record else None)
    if not conv.all():
        log.warning("lasso: %d of %d rows did not converge", (~conv).sum(), len(conv))
    return w, trace


def _feature_sign(gram, c, w, lam, max_iter=1000, rtol=1e-8):
    """Feature-sign search for ``w'Gw - 2c'w + lam |w|_1`` warm-started at ``w``.

    Each step solves the stationarity equations on the current support
    with fixed signs, then takes the best point on the segment towards
    that solution (checking every sign change), so the cost never rises.
    Returns ``(w, optimal)``.
    """
    half = 0.5 * lam
    w = w.copy()

    def cost(v):
        return v @ gram @ v - 2.0 * c @ v + lam * np.abs(v).sum()

    scale = max(half, np.abs(c).max(), np.finfo(float).tiny)
    for _ in range(max_iter):
        grad = c - gram @ w  # optimal: grad_j = half*sign(w_j), or |grad_j| <= half at 0
        act = w != 0
        theta = np.sign(w)
        if act.sum() == 0 or np.abs(grad - half * theta)[act].max() <= rtol * scale:
            slack = np.where(act, -np.inf, np.abs(grad) - half)
            j = int(np.argmax(slack))
            if slack[j] <= rtol * scale:
                return w, True
            theta[j] = np.sign(grad[j])
            act[j] = True
        a = np.flatnonzero(act)
        try:
            target = np.linalg.solve(gram[np.ix_(a, a)], c[a] - half * theta[a])
        except np.linalg.LinAlgError:
            return w, False
        start = w[a]
        points = [target]
        for k in np.flatnonzero(np.sign(target) != theta[a]):
            if start[k] != 0:
                t = start[k] / (start[k] - target[k])
                p = start + t * (target - start)
                p[k] = 0.0
                points.append(p)
        best, best_cost = w, cost(w)
        for p in points:
            v = np.zeros_like(w)
            v[a] = np.where(np.sign(p) == theta[a], p, 0.0)
            cv = cost(v)
            if cv < best_cost:
                best, best_cost = v, cv
        if best is w:
            return w, False
        w = best
    return w, False


@numba.njit(cache=True)
def _lasso_cd(gram, corr, yy, lam, tol, max_sweeps, record):
    rows, p = corr.shape
    w = np.zeros((rows, p))
    sweeps = np.zeros(rows, dtype=np.int64)
    conv = np.zeros(rows, dtype=np.bool_)
    hist = np.full((rows, max_sweeps + 1 if record else 1), np.nan)
    half = 0.5 * lam
    for r in range(rows):
        c = corr[r]
        q = np.zeros(p)  # gram @ w
        if record:
            hist[r, 0] = yy[r]
        for s in range(max_sweeps):
            biggest = 0.0
            for j in range(p):
                gjj = gram[j, j]
                old = w[r, j]
                if gjj <= 0.0:
                    new = 0.0
                else:
                    rho = c[j] - q[j] + gjj * old
                    if rho > half:
                        new = (rho - half) / gjj
                    elif rho < -half:
                        new = (rho + half) / gjj
                    else:
                        new = 0.0
                delta = new - old
                if delta != 0.0:
                    w[r, j] = new
                    for i in range(p):
                        q[i] += delta * gram[i, j]
                    if abs(delta) > biggest:
                        biggest = abs(delta)
            sweeps[r] = s + 1
            if record:
                obj = yy[r]
                for j in range(p):
                    obj += -2.0 * c[j] * w[r, j] + w[r, j] * q[j] + lam * abs(w[r, j])
                hist[r, s + 1] = obj
            if biggest < tol:
                conv[r] = True
                break
    return w, sweeps, conv, hist


def lasso_objective(w, features, targets, lam: float) -> float:
    """``sum_n |y_n - W x_n|^2 + lam * sum |W|``, the unnormalised cost."""
    resid = np.asarray(targets) - np.asarray(features) @ np.asarray(w).T
    return float(np.sum(resid ** 2) + lam * np.sum(np.abs(w)))


def fit_generator_lasso(d: Dictionary, estimates, lam: float, tol: float = 1e-10,
                        max_sweeps: int = 10_000, scaling: str = "mean") -> GeneratorMatrix:
    """Sparse generator matrix; the penalty applies to every entry of ``L``.

    With ``scaling="mean"`` (default) the cost is
    ``1/(2N) sum_n |dpsi_n - L psi_n|^2 + lam sum |l_ij|``, so ``lam`` does not
    depend on the number of points N. ``scaling="sum"`` uses the plain
    residual sum ``sum_n |...|^2 + lam sum |l_ij|`` instead.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if scaling not in ("mean", "sum"):
        raise ValueError("scaling must be 'mean' or 'sum'")
    psi, dpsi = _design(d, estimates)
    penalty = 2.0 * psi.shape[0] * lam if scaling == "mean" else lam
    w, _ = lasso_rows(psi, dpsi, penalty, tol=tol, max_sweeps=max_sweeps)
    return GeneratorMatrix(d, w, method="lasso", lam=float(lam))


def shift_by(d: Dictionary, coordinate: int, coefficients) -> tuple[np.ndarray, float]:
    """Multiply a polynomial by ``x_coordinate`` inside the dictionary.

    Returns the shifted coefficients and the largest magnitude that fell
    outside the dictionary (degree above ``max_degree``).
    """
    c = np.asarray(coefficients, dtype=float)
    out = np.zeros_like(c)
    overflow = 0.0
    exps = d.exponents
    for k in np.flatnonzero(c):
        e = exps[k].copy()
        e[coordinate] += 1
        if e.sum() > d.max_degree:
            overflow = max(overflow, abs(c[k]))
            continue
        out[d.index_of(e)] += c[k]
    return out, overflow


def extract_coefficients(gen: GeneratorMatrix) -> ExtractedCoefficients:
    """Drift and diffusion-product polynomials from the generator rows.

    ``b_i`` is the row of ``x_i``; ``a_ij`` is the row of ``x_i x_j`` minus
    ``x_j b_i`` and ``x_i b_j``.
    """
    d = gen.dictionary
    if d.max_degree < 2:
        raise ValueError("dictionary degree must be at least 2 to extract diffusion")
    L = gen.entries
    drift = np.array([L[d.coordinate_index(i)] for i in range(d.dim)])
    a_poly = np.zeros((d.dim, d.dim, d.size))
    overflow = 0.0
    for i, j in iter_pairs(d.dim):
        xj_bi, o1 = shift_by(d, j, drift[i])
        xi_bj, o2 = shift_by(d, i, drift[j])
        overflow = max(overflow, o1, o2)
        a_poly[i, j] = a_poly[j, i] = L[d.pair_index(i, j)] - xj_bi - xi_bj
    warnings = ()
    if overflow > 1e-8:
        warnings = (
            f"drift terms of magnitude up to {overflow:.3g} were truncated "
            f"when shifted beyond degree {d.max_degree}",
        )
    return ExtractedCoefficients(d, drift, a_poly, overflow, warnings)


def _poly_mul_monomial(d: Dictionary, c: np.ndarray, e_shift, scale: float, out: np.ndarray):
    for k in np.flatnonzero(c):
        e = d.exponents[k] + e_shift
        if e.sum() <= d.max_degree:
            out[d.index_of(e)] += scale * c[k]


def analytic_generator(model, d: Dictionary) -> tuple[GeneratorMatrix, np.ndarray]:
    """Generator of a polynomial SDE applied term by term to each basis function.

    Products whose degree exceeds ``d.max_degree`` are dropped; the returned
    boolean mask marks the rows that needed no truncation (exact rows).
    ``model`` must expose ``dictionary``, ``drift`` and ``diffusion``
    coefficient arrays, as :class:`~sysid.simulate.SdeModel` does.
    """
    md = model.dictionary
    drift = np.zeros((md.dim, d.size))
    for i in range(md.dim):
        for k in np.flatnonzero(model.drift[i]):
            drift[i, _lift(d, md.exponents[k])] = model.drift[i, k]
    a_poly = _diffusion_product(model, d)
    drift_deg = max((d.degrees[k] for k in np.flatnonzero(drift.any(axis=0))), default=0)
    diff_deg = max((d.degrees[k] for k in np.flatnonzero(a_poly.reshape(-1, d.size).any(0))), default=0)

    L = np.zeros((d.size, d.size))
    exact = np.ones(d.size, dtype=bool)
    eye = np.eye(d.dim, dtype=int)
    for k, e in enumerate(d.exponents):
        deg = e.sum()
        for i in range(d.dim):
            if e[i] == 0:
                continue
            _poly_mul_monomial(d, drift[i], e - eye[i], float(e[i]), L[k])
            if deg - 1 + drift_deg > d.max_degree:
                exact[k] = False
        for i in range(d.dim):
            for j in range(d.dim):
                f = e[i] * (e[j] - (1 if i == j else 0))
                if f == 0:
                    continue
                _poly_mul_monomial(d, a_poly[i, j], e - eye[i] - eye[j], 0.5 * f, L[k])
                if deg - 2 + diff_deg > d.max_degree:
                    exact[k] = False
    return GeneratorMatrix(d, L, method="analytic"), exact


def _lift(d: Dictionary, exponent) -> int:
    return d.index_of(tuple(int(v) for v in exponent))


def _diffusion_product(model, d: Dictionary) -> np.ndarray:
    """``A = Sigma Sigma^T`` of a polynomial model as coefficients over ``d``."""
    md = model.dictionary
    sig = model.diffusion
    a_poly = np.zeros((md.dim, md.dim, d.size))
    for i in range(md.dim):
        for j in range(md.dim):
            for m in range(sig.shape[1]):
                for k1 in np.flatnonzero(sig[i, m]):
                    for k2 in np.flatnonzero(sig[j, m]):
                        e = md.exponents[k1] + md.exponents[k2]
                        a_poly[i, j, _lift(d, e)] += sig[i, m, k1] * sig[j, m, k2]
    return a_poly


def truth_coefficients(model, d: Dictionary) -> ExtractedCoefficients:
    """The model's own ``b`` and ``A`` polynomials expressed over ``d``."""
    gen, _ = analytic_generator(model, d)
    drift = np.array([gen.entries[d.coordinate_index(i)] for i in range(d.dim)])
    return ExtractedCoefficients(d, drift, _diffusion_product(model, d))


@dataclass(frozen=True)
class ReconstructedModel:
    """Simulatable SDE with the extracted drift and ``Sigma = chol(A)``."""

    coefficients: ExtractedCoefficients
    clamp_eps: float = 1e-12

    @property
    def dim(self) -> int:
        return self.coefficients.dictionary.dim

    @property
    def noise_dim(self) -> int:
        return self.dim

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        b = self.coefficients.drift_at(x)[0]
        a = self.coefficients.diffusion_at(x)[0]
        a = 0.5 * (a + a.T)
        sigma = linalg.cholesky_psd(a, self.clamp_eps)
        return b, sigma, a

    def _integrate(self, x0, dt, noise):
        c = self.coefficients
        d = c.dictionary
        return _integrate_cholesky(
            x0, dt, noise, d.exponents.astype(np.int64), d.max_degree,
            c.drift, np.ascontiguousarray(c.a_poly), float(self.clamp_eps),
        )


def reconstruct_model(c: ExtractedCoefficients, clamp_eps: float = 1e-12) -> ReconstructedModel:
    return ReconstructedModel(c, clamp_eps)
