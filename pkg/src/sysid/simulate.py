"""Polynomial SDE models and Euler-Maruyama trajectories.

A model is ``dX = b(X) dt + Sigma(X) dW`` where every entry of ``b`` and
``Sigma`` is a polynomial stored as a coefficient vector over a monomial
:class:`~sysid.dictionary.Dictionary`.

Gaussian increments come from a ``PCG64`` stream seeded with the integer
seed, turned into normals by the Box-Muller transform. The whole noise
block is drawn before integration, so a given ``(model, x0, dt, steps,
seed)`` always produces the same bits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .dictionary import Dictionary, build_dictionary

BUILTIN_MODELS = ("double_well", "appendix_dense")


@dataclass(frozen=True)
class Trajectory:
    dt: float
    states: np.ndarray = field(repr=False)
    seed: int | None = None

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
        if states.shape[0] < 2:
            raise ValueError("trajectory needs at least 2 states")
        if not np.all(np.isfinite(states)):
            raise ValueError("trajectory contains non-finite values")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "states", states)

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self))


@dataclass(frozen=True)
class SdeModel:
    """Polynomial drift ``(D, N_dic)`` and diffusion ``(D, s, N_dic)`` coefficients."""

    dictionary: Dictionary
    drift: np.ndarray = field(repr=False)
    diffusion: np.ndarray = field(repr=False)
    name: str = "custom"

    def __post_init__(self):
        drift = np.asarray(self.drift, dtype=float)
        diffusion = np.asarray(self.diffusion, dtype=float)
        d = self.dictionary
        if drift.shape != (d.dim, d.size):
            raise ValueError("drift coefficients do not match the dictionary")
        if diffusion.ndim != 3 or diffusion.shape[0] != d.dim or diffusion.shape[2] != d.size:
            raise ValueError("diffusion coefficients do not match the dictionary")
        object.__setattr__(self, "drift", drift)
        object.__setattr__(self, "diffusion", diffusion)

    @property
    def dim(self) -> int:
        return self.dictionary.dim

    @property
    def noise_dim(self) -> int:
        return self.diffusion.shape[1]

    def evaluate(self, x):
        """Return ``(b, sigma, a)`` at a single point."""
        psi = self.dictionary.evaluate(np.asarray(x, dtype=float))
        b = self.drift @ psi
        sigma = self.diffusion @ psi
        return b, sigma, sigma @ sigma.T

    def evaluate_many(self, x):
        """Vectorised drift ``(N, D)`` and diffusion product ``(N, D, D)``."""
        psi = self.dictionary.evaluate(np.atleast_2d(x))
        b = psi @ self.drift.T
        sigma = np.einsum("isk,nk->nis", self.diffusion, psi)
        return b, np.einsum("nis,njs->nij", sigma, sigma)

    def _integrate(self, x0, dt, noise):
        d = self.dictionary
        return _integrate_sigma(
            x0, dt, noise, d.exponents.astype(np.int64), d.max_degree,
            self.drift, self.diffusion,
        )


def polynomial_model(dim: int, drift_terms, diffusion_terms, name: str = "custom") -> SdeModel:
    """Build an :class:`SdeModel` from ``{exponent tuple: coefficient}`` maps.

    ``drift_terms`` is a list of D maps; ``diffusion_terms`` a D x s nested
    list of maps. The dictionary degree is the highest degree that appears.
    """
    all_terms = list(drift_terms) + [t for row in diffusion_terms for t in row]
    degree = max([sum(e) for t in all_terms for e in t] + [1])
    d = build_dictionary(dim, degree)
    s = len(diffusion_terms[0])
    drift = np.zeros((dim, d.size))
    diffusion = np.zeros((dim, s, d.size))
    for i, terms in enumerate(drift_terms):
        for e, c in terms.items():
            drift[i, d.index_of(e)] += c
    for i, row in enumerate(diffusion_terms):
        if len(row) != s:
            raise ValueError("ragged diffusion matrix")
        for j, terms in enumerate(row):
            for e, c in terms.items():
                diffusion[i, j, d.index_of(e)] += c
    return SdeModel(d, drift, diffusion, name=name)


def gradient_drift(potential: dict, dim: int) -> list[dict]:
    """Coefficient maps of ``b = -grad V`` for a polynomial potential."""
    out = []
    for i in range(dim):
        terms = {}
        for e, c in potential.items():
            if e[i] == 0:
                continue
            shifted = list(e)
            shifted[i] -= 1
            key = tuple(shifted)
            terms[key] = terms.get(key, 0.0) - c * e[i]
        out.append(terms)
    return out


# Sigma = [[0.7, x1], [0, 0.5]] for both benchmarks
_STATE_DEPENDENT_NOISE = [
    [{(0, 0): 0.7}, {(1, 0): 1.0}],
    [{}, {(0, 0): 0.5}],
]

DOUBLE_WELL_POTENTIAL = {(4, 0): 1.0, (2, 0): -2.0, (0, 0): 1.0, (0, 2): 1.0}

APPENDIX_DENSE_POTENTIAL = {
    (1, 0): -0.4, (0, 1): 0.4,
    (2, 0): -1.0, (1, 1): -0.3, (0, 2): 2.0,
    (3, 0): 0.2, (2, 1): 0.4, (1, 2): -0.4, (0, 3): -0.2,
    (4, 0): 1.0, (3, 1): -0.2, (2, 2): 0.2, (0, 4): 0.2,
}


def make_builtin(name: str) -> SdeModel:
    """One of the two benchmark models (``-`` and ``_`` are interchangeable)."""
    key = name.replace("-", "_")
    if key == "double_well":
        potential = DOUBLE_WELL_POTENTIAL
    elif key == "appendix_dense":
        potential = APPENDIX_DENSE_POTENTIAL
    else:
        raise ValueError(f"unknown model {name!r}; valid names: {', '.join(BUILTIN_MODELS)}")
    return polynomial_model(2, gradient_drift(potential, 2), _STATE_DEPENDENT_NOISE, name=key)


def eval_model(m: SdeModel, x):
    return m.evaluate(x)


def ornstein_uhlenbeck(rate: float = 1.0, noise: float = 0.5) -> SdeModel:
    """1-D ``dX = -rate X dt + noise dW``."""
    return polynomial_model(1, [{(1,): -rate}], [[{(0,): noise}]], name="ornstein_uhlenbeck")


def standard_normals(seed: int, count: int) -> np.ndarray:
    """``count`` N(0, 1) draws via Box-Muller on a seeded PCG64 uniform stream."""
    pairs = (count + 1) // 2
    u = np.random.Generator(np.random.PCG64(seed)).random((pairs, 2))
    radius = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
    angle = 2.0 * np.pi * u[:, 1]
    z = np.empty((pairs, 2))
    z[:, 0] = radius * np.cos(angle)
    z[:, 1] = radius * np.sin(angle)
    return z.ravel()[:count]


def euler_maruyama(model, x0, dt: float, steps: int, seed: int,
                   on_divergence: str = "raise") -> Trajectory:
    """Integrate ``model`` from ``x0`` for ``steps`` steps of size ``dt``.

    ``model`` is an :class:`SdeModel` or any object exposing ``dim``,
    ``noise_dim`` and ``_integrate(x0, dt, noise)`` (for example a
    reconstructed model from :mod:`sysid.gedmd`).

    A non-finite state raises ``FloatingPointError`` naming the step. With
    ``on_divergence="truncate"`` the finite prefix is returned instead, so
    the result has fewer than ``steps + 1`` samples.
    """
    if on_divergence not in ("raise", "truncate"):
        raise ValueError("on_divergence must be 'raise' or 'truncate'")
    if not dt > 0:
        raise ValueError("dt must be positive")
    if steps < 1:
        raise ValueError("steps must be at least 1")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (model.dim,):
        raise ValueError(f"x0 must have {model.dim} components")
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be finite")
    noise = standard_normals(seed, steps * model.noise_dim).reshape(steps, model.noise_dim)
    noise *= np.sqrt(dt)
    states, bad = model._integrate(x0, float(dt), noise)
    if bad >= 0 and on_divergence == "raise":
        raise FloatingPointError(f"simulation diverged at step {bad}")
    return Trajectory(dt=float(dt), states=states, seed=int(seed))


@numba.njit(cache=True)
def _eval_psi(x, exponents, max_degree, out):
    dim = x.shape[0]
    table = np.empty((dim, max_degree + 1))
    for d in range(dim):
        table[d, 0] = 1.0
        for p in range(1, max_degree + 1):
            table[d, p] = table[d, p - 1] * x[d]
    for k in range(exponents.shape[0]):
        v = 1.0
        for d in range(dim):
            v *= table[d, exponents[k, d]]
        out[k] = v


@numba.njit(cache=True)
def _integrate_sigma(x0, dt, dw, exponents, max_degree, drift, diffusion):
    steps, s = dw.shape
    dim = x0.shape[0]
    nk = exponents.shape[0]
    states = np.empty((steps + 1, dim))
    states[0] = x0
    psi = np.empty(nk)
    for n in range(steps):
        x = states[n]
        _eval_psi(x, exponents, max_degree, psi)
        for i in range(dim):
            b = 0.0
            for k in range(nk):
                b += drift[i, k] * psi[k]
            inc = 0.0
            for j in range(s):
                sig = 0.0
                for k in range(nk):
                    sig += diffusion[i, j, k] * psi[k]
                inc += sig * dw[n, j]
            v = x[i] + b * dt + inc
            if not np.isfinite(v):
                return states[: n + 1], n
            states[n + 1, i] = v
    return states, -1


@numba.njit(cache=True)
def _cholesky_inplace(a, out):
    dim = a.shape[0]
    for i in range(dim):
        for j in range(dim):
            out[i, j] = 0.0
    for j in range(dim):
        acc = a[j, j]
        for k in range(j):
            acc -= out[j, k] * out[j, k]
        if not acc > 0.0:
            return False
        out[j, j] = np.sqrt(acc)
        for i in range(j + 1, dim):
            acc = a[i, j]
            for k in range(j):
                acc -= out[i, k] * out[j, k]
            out[i, j] = acc / out[j, j]
    return True


@numba.njit(cache=True)
def _cholesky_psd(a, clamp_eps, out):
    if _cholesky_inplace(a, out):
        return
    w, v = np.linalg.eigh(a)
    for i in range(w.shape[0]):
        if w[i] < clamp_eps:
            w[i] = clamp_eps
    repaired = (v * w) @ v.T
    repaired = 0.5 * (repaired + repaired.T)
    if _cholesky_inplace(repaired, out):
        return
    # clamp below round-off: symmetric square root is an admissible factor
    root = v * np.sqrt(w)
    out[:, :] = root @ v.T


@numba.njit(cache=True)
def _integrate_cholesky(x0, dt, dw, exponents, max_degree, drift, a_coef, clamp_eps):
    steps, s = dw.shape
    dim = x0.shape[0]
    nk = exponents.shape[0]
    states = np.empty((steps + 1, dim))
    states[0] = x0
    psi = np.empty(nk)
    a = np.empty((dim, dim))
    chol = np.empty((dim, dim))
    for n in range(steps):
        x = states[n]
        _eval_psi(x, exponents, max_degree, psi)
        for i in range(dim):
            for j in range(i, dim):
                acc = 0.0
                for k in range(nk):
                    acc += a_coef[i, j, k] * psi[k]
                a[i, j] = acc
                a[j, i] = acc
        if not np.all(np.isfinite(a)):
            return states[: n + 1], n
        _cholesky_psd(a, clamp_eps, chol)
        for i in range(dim):
            b = 0.0
            for k in range(nk):
                b += drift[i, k] * psi[k]
            inc = 0.0
            for j in range(i + 1):
                inc += chol[i, j] * dw[n, j]
            v = x[i] + b * dt + inc
            if not np.isfinite(v):
                return states[: n + 1], n
            states[n + 1, i] = v
    return states, -1
