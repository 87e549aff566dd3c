"""Monomial dictionaries with analytic first and second derivatives.

Basis functions are ordered by total degree, and within one degree by the
exponent of ``x1`` descending, then ``x2`` descending and so on::

    1, x1, x2, x1^2, x1*x2, x2^2, x1^3, x1^2*x2, ...

With this ordering index 0 is the constant and indices ``1..D`` are the
coordinate functions, which is what the drift/diffusion extraction relies on.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from math import comb

import numpy as np


def _compositions(total: int, parts: int):
    """All tuples of ``parts`` non-negative ints summing to ``total``, lex-descending."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


@dataclass(frozen=True)
class Dictionary:
    dim: int
    max_degree: int
    exponents: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self):
        self.exponents.setflags(write=False)

    @property
    def size(self) -> int:
        return self.exponents.shape[0]

    def __len__(self) -> int:
        return self.size

    def __eq__(self, other):
        return (
            isinstance(other, Dictionary)
            and self.dim == other.dim
            and self.max_degree == other.max_degree
        )

    def __hash__(self):
        return hash((self.dim, self.max_degree))

    @property
    def degrees(self) -> np.ndarray:
        return self.exponents.sum(axis=1)

    def index_of(self, exponent) -> int:
        """Position of the monomial with the given exponent tuple."""
        exponent = tuple(int(e) for e in exponent)
        try:
            return self._lookup[exponent]
        except KeyError:
            raise KeyError(f"monomial {exponent} not in dictionary") from None

    @property
    def _lookup(self) -> dict:
        cache = self.__dict__.get("_lookup_cache")
        if cache is None:
            cache = {tuple(int(v) for v in e): k for k, e in enumerate(self.exponents)}
            object.__setattr__(self, "_lookup_cache", cache)
        return cache

    def coordinate_index(self, i: int) -> int:
        """Index of the full-state observable ``x_{i+1}`` (0-based ``i``)."""
        return 1 + i

    def pair_index(self, i: int, j: int) -> int:
        e = [0] * self.dim
        e[i] += 1
        e[j] += 1
        return self.index_of(e)

    def labels(self) -> list[str]:
        return [monomial_label(e) for e in self.exponents]

    def _check_points(self, x) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.dim:
            raise ValueError(
                f"dimension mismatch: expected {self.dim} coordinates, got {x.shape[1]}"
            )
        return x, single

    def _power_table(self, x: np.ndarray) -> np.ndarray:
        # table[n, d, p] = x[n, d] ** p
        p = np.arange(self.max_degree + 1)
        table = np.empty((x.shape[0], self.dim, self.max_degree + 1))
        table[:, :, 0] = 1.0
        for q in p[1:]:
            table[:, :, q] = table[:, :, q - 1] * x
        return table

    def _monomials(self, table: np.ndarray, exps: np.ndarray) -> np.ndarray:
        # exps may hold negative entries; those terms carry a zero prefactor
        exps = np.clip(exps, 0, None)
        out = np.ones((table.shape[0],) + exps.shape[:-1])
        for d in range(self.dim):
            out *= table[:, d, :][:, exps[..., d]]
        return out

    def evaluate(self, x) -> np.ndarray:
        """psi(x); shape (N_dic,) for one point or (N, N_dic) for many."""
        x, single = self._check_points(x)
        psi = self._monomials(self._power_table(x), self.exponents)
        return psi[0] if single else psi

    def gradients(self, x) -> np.ndarray:
        """Partial derivatives, shape (N, N_dic, D) (or (N_dic, D) for one point)."""
        x, single = self._check_points(x)
        table = self._power_table(x)
        eye = np.eye(self.dim, dtype=int)
        shifted = self.exponents[:, None, :] - eye[None, :, :]
        factor = self.exponents.astype(float)
        grad = factor[None] * self._monomials(table, shifted)
        return grad[0] if single else grad

    def hessians(self, x) -> np.ndarray:
        """Second derivatives, shape (N, N_dic, D, D) (or (N_dic, D, D))."""
        x, single = self._check_points(x)
        table = self._power_table(x)
        eye = np.eye(self.dim, dtype=int)
        e = self.exponents
        shifted = e[:, None, None, :] - eye[None, :, None, :] - eye[None, None, :, :]
        ef = e.astype(float)
        factor = ef[:, :, None] * ef[:, None, :]
        factor -= np.einsum("ki,ij->kij", ef, np.eye(self.dim))
        hess = factor[None] * self._monomials(table, shifted)
        return hess[0] if single else hess

    def derivatives(self, k: int, x) -> tuple[np.ndarray, np.ndarray]:
        """Gradient and Hessian of basis function ``k`` at a single point."""
        if not 0 <= k < self.size:
            raise IndexError(f"basis index {k} out of range [0, {self.size})")
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"dimension mismatch: expected a {self.dim}-vector")
        e = self.exponents[k]
        grad = np.zeros(self.dim)
        hess = np.zeros((self.dim, self.dim))
        for i in range(self.dim):
            if e[i] == 0:
                continue
            ei = e.copy()
            ei[i] -= 1
            grad[i] = e[i] * np.prod(x ** ei)
            for j in range(i, self.dim):
                if ei[j] == 0:
                    continue
                eij = ei.copy()
                eij[j] -= 1
                hess[i, j] = hess[j, i] = e[i] * ei[j] * np.prod(x ** eij)
        return grad, hess

    def polynomial(self, coefficients):
        """Callable evaluating ``c . psi(x)`` for a coefficient vector ``c``."""
        c = np.asarray(coefficients, dtype=float)
        if c.shape != (self.size,):
            raise ValueError("coefficient vector does not match dictionary size")
        return lambda x: self.evaluate(x) @ c


def build_dictionary(dim: int, max_degree: int) -> Dictionary:
    if dim < 1:
        raise ValueError("empty state space")
    if max_degree < 1:
        raise ValueError("max_degree must be at least 1")
    exps = [c for deg in range(max_degree + 1) for c in _compositions(deg, dim)]
    exponents = np.array(exps, dtype=int).reshape(-1, dim)
    assert exponents.shape[0] == comb(dim + max_degree, max_degree)
    return Dictionary(dim, max_degree, exponents)


def monomial_label(exponent) -> str:
    parts = []
    for i, e in enumerate(exponent):
        if e == 0:
            continue
        parts.append(f"x{i + 1}" if e == 1 else f"x{i + 1}^{int(e)}")
    return "*".join(parts) if parts else "1"


_FACTOR = re.compile(r"^x(\d+)(?:\^(\d+))?$")


def parse_label(label: str, dim: int) -> tuple[int, ...]:
    """Inverse of :func:`monomial_label`."""
    label = label.strip()
    exponent = [0] * dim
    if label == "1":
        return tuple(exponent)
    for factor in label.split("*"):
        match = _FACTOR.match(factor.strip())
        if match is None:
            raise ValueError(f"malformed monomial label {label!r}")
        i = int(match.group(1)) - 1
        if not 0 <= i < dim:
            raise ValueError(f"variable index out of range in {label!r}")
        exponent[i] += int(match.group(2) or 1)
    return tuple(exponent)


def dictionary_from_labels(labels, dim: int | None = None) -> Dictionary:
    """Rebuild the dictionary a label list was written from, checking the order."""
    if dim is None:
        dim = max(
            (int(m.group(1)) for lab in labels for f in lab.split("*")
             if (m := _FACTOR.match(f.strip()))),
            default=1,
        )
    exps = [parse_label(lab, dim) for lab in labels]
    max_degree = max(sum(e) for e in exps)
    d = build_dictionary(dim, max(max_degree, 1))
    if [tuple(e) for e in d.exponents] != exps:
        raise ValueError("labels do not form a graded monomial dictionary")
    return d


def iter_pairs(dim: int):
    """Unordered index pairs (i, j) with i <= j."""
    return itertools.combinations_with_replacement(range(dim), 2)
