from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sysid.dictionary import (
    build_dictionary,
    dictionary_from_labels,
    monomial_label,
    parse_label,
)


def test_size_matches_binomial():
    assert build_dictionary(2, 10).size == 66
    for dim in (1, 2, 3):
        for p in (1, 2, 5):
            assert build_dictionary(dim, p).size == comb(dim + p, p)


def test_graded_ordering():
    d = build_dictionary(2, 2)
    assert [tuple(e) for e in d.exponents] == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    d3 = build_dictionary(2, 3)
    assert d3.labels()[:8] == ["1", "x1", "x2", "x1^2", "x1*x2", "x2^2", "x1^3", "x1^2*x2"]
    assert [tuple(e) for e in build_dictionary(1, 3).exponents] == [(0,), (1,), (2,), (3,)]


def test_full_state_indices():
    d = build_dictionary(3, 4)
    assert tuple(d.exponents[0]) == (0, 0, 0)
    for i in range(3):
        assert d.coordinate_index(i) == i + 1
        assert tuple(d.exponents[i + 1]) == tuple(np.eye(3, dtype=int)[i])
    assert tuple(d.exponents[d.pair_index(0, 2)]) == (1, 0, 1)
    assert d.pair_index(2, 0) == d.pair_index(0, 2)


def test_empty_state_space():
    with pytest.raises(ValueError, match="empty state space"):
        build_dictionary(0, 3)


def test_evaluate_examples():
    d = build_dictionary(2, 2)
    np.testing.assert_array_equal(d.evaluate([2.0, 3.0]), [1, 2, 3, 4, 6, 9])
    d10 = build_dictionary(2, 10)
    z = d10.evaluate([0.0, 0.0])
    assert z[0] == 1 and not z[1:].any()
    np.testing.assert_array_equal(d10.evaluate([1.0, 1.0]), np.ones(66))
    with pytest.raises(ValueError):
        d.evaluate([1.0, 2.0, 3.0])


def test_derivative_examples():
    d = build_dictionary(2, 3)
    k = d.index_of((2, 1))
    g, h = d.derivatives(k, np.array([2.0, 3.0]))
    np.testing.assert_array_equal(g, [12, 4])
    np.testing.assert_array_equal(h, [[6, 4], [4, 0]])
    g0, h0 = d.derivatives(0, np.array([0.3, -1.0]))
    assert not g0.any() and not h0.any()
    with pytest.raises(IndexError):
        d.derivatives(d.size, np.zeros(2))


def test_vectorised_derivatives_match_single(rng):
    d = build_dictionary(2, 6)
    x = rng.uniform(-2, 2, (5, 2))
    grads, hess = d.gradients(x), d.hessians(x)
    for n in range(5):
        for k in range(d.size):
            g, h = d.derivatives(k, x[n])
            np.testing.assert_allclose(grads[n, k], g, rtol=1e-14, atol=1e-14)
            np.testing.assert_allclose(hess[n, k], h, rtol=1e-14, atol=1e-14)
            assert np.array_equal(hess[n, k], hess[n, k].T)


def test_derivatives_against_finite_differences(rng):
    """1000 random (k, x) pairs, |x| <= 2, central differences."""
    d = build_dictionary(2, 10)
    step = 1e-5
    worst = 0.0
    for _ in range(1000):
        k = int(rng.integers(d.size))
        x = rng.uniform(-2, 2, 2)
        g, h = d.derivatives(k, x)
        eye = np.eye(2)
        g_fd = np.array([(d.evaluate(x + step * eye[i])[k] - d.evaluate(x - step * eye[i])[k]) / (2 * step)
                         for i in range(2)])
        h_fd = np.array([[(d.gradients(x + step * eye[j])[k, i] - d.gradients(x - step * eye[j])[k, i])
                          / (2 * step) for j in range(2)] for i in range(2)])
        scale_g = max(1.0, np.abs(g).max())
        scale_h = max(1.0, np.abs(h).max())
        worst = max(worst, np.abs(g - g_fd).max() / scale_g, np.abs(h - h_fd).max() / scale_h)
    assert worst <= 1e-5


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_polynomial_evaluation_round_trip(dim, p, seed):
    d = build_dictionary(dim, p)
    r = np.random.default_rng(seed)
    c = r.standard_normal(d.size)
    x = r.uniform(-1.5, 1.5, (100, dim))
    direct = np.array([sum(c[k] * np.prod(xi ** d.exponents[k]) for k in range(d.size)) for xi in x])
    np.testing.assert_allclose(d.polynomial(c)(x), direct, atol=1e-10)


def test_labels_round_trip():
    d = build_dictionary(3, 4)
    labels = d.labels()
    assert labels[0] == "1"
    assert monomial_label((2, 0, 1)) == "x1^2*x3"
    for lab, e in zip(labels, d.exponents):
        assert parse_label(lab, 3) == tuple(e)
    assert parse_label("x1^1*x2^2", 2) == (1, 2)
    assert dictionary_from_labels(labels) == d
    with pytest.raises(ValueError):
        parse_label("y1^2", 2)
