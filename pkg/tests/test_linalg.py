import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sysid.linalg import cholesky_psd, pinv, sample_covariance

# pseudo-inverses of subnormal matrices overflow float64, so keep entries normal
finite = st.one_of(st.just(0.0), st.floats(-10, -1e-3), st.floats(1e-3, 10))


def penrose_residuals(m, p):
    return (
        np.abs(m @ p @ m - m).max(),
        np.abs(p @ m @ p - p).max(),
        np.abs((m @ p).T - m @ p).max(),
        np.abs((p @ m).T - p @ m).max(),
    )


def test_pinv_rank_deficient_diagonal():
    np.testing.assert_array_equal(pinv(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]))


def test_pinv_identity():
    np.testing.assert_allclose(pinv(np.eye(3)), np.eye(3), atol=1e-15)


def test_pinv_penrose_random(rng):
    m = rng.standard_normal((5, 3))
    assert max(penrose_residuals(m, pinv(m))) < 1e-10


@settings(max_examples=50, deadline=None)
@given(arrays(float, (4, 3), elements=finite))
def test_pinv_penrose_property(m):
    p = pinv(m)
    scale = max(1.0, np.abs(m).max()) ** 2 * max(1.0, np.abs(p).max()) ** 2
    assert max(penrose_residuals(m, p)) < 1e-9 * scale


def test_pinv_involution_full_rank(rng):
    for _ in range(20):
        m = rng.standard_normal((4, 4)) + 4 * np.eye(4)
        np.testing.assert_allclose(pinv(pinv(m)), m, atol=1e-8)


def test_pinv_rejects_nonfinite():
    with pytest.raises(ValueError, match="invalid matrix"):
        pinv(np.array([[1.0, np.nan], [0.0, 1.0]]))


def test_pinv_rcond_cuts_small_singular_values():
    m = np.diag([1.0, 1e-3])
    np.testing.assert_allclose(pinv(m, rcond=1e-2), np.diag([1.0, 0.0]))
    np.testing.assert_allclose(pinv(m, rcond=1e-4), np.diag([1.0, 1e3]))


def test_cholesky_examples():
    np.testing.assert_allclose(cholesky_psd(np.array([[4.0, 2.0], [2.0, 5.0]])),
                               [[2.0, 0.0], [1.0, 2.0]], atol=1e-14)
    # hand oracle: l11 = sqrt(1.49), l21 = 0.5 / l11, l22 = sqrt(0.25 - l21^2) = 0.286731
    # (a quoted reference of 0.286774 for l22 does not reproduce A and is not used)
    l11 = np.sqrt(1.49)
    l21 = 0.5 / l11
    l22 = np.sqrt(0.25 - l21 ** 2)
    got = cholesky_psd(np.array([[1.49, 0.5], [0.5, 0.25]]))
    np.testing.assert_allclose(got, [[1.220656, 0.0], [0.409617, 0.286731]], atol=1e-5)
    np.testing.assert_allclose(got, [[l11, 0.0], [l21, l22]], atol=1e-14)
    np.testing.assert_allclose(got @ got.T, [[1.49, 0.5], [0.5, 0.25]], atol=1e-14)


def test_cholesky_zero_matrix_clamped():
    got = cholesky_psd(np.zeros((2, 2)), clamp_eps=1e-12)
    np.testing.assert_allclose(got @ got.T, 1e-12 * np.eye(2), atol=1e-20)
    assert np.allclose(np.diag(got), 1e-6)


def test_cholesky_indefinite_is_repaired():
    a = np.array([[1.0, 2.0], [2.0, 1.0]])  # eigenvalues 3 and -1
    got = cholesky_psd(a, clamp_eps=1e-6)
    w, v = np.linalg.eigh(a)
    clamped = (v * np.maximum(w, 1e-6)) @ v.T
    np.testing.assert_allclose(got @ got.T, clamped, atol=1e-10)
    assert got[0, 1] == 0.0


def test_cholesky_rejects_asymmetric():
    with pytest.raises(ValueError, match="not symmetric"):
        cholesky_psd(np.array([[1.0, 0.1], [0.0, 1.0]]))


@settings(max_examples=100, deadline=None)
@given(arrays(float, (3, 3), elements=st.floats(-3, 3)))
def test_cholesky_round_trip(b):
    a = b @ b.T + 1e-3 * np.eye(3)
    lc = cholesky_psd(a)
    assert np.all(np.triu(lc, 1) == 0.0)
    assert np.all(np.diag(lc) >= 0.0)
    np.testing.assert_allclose(lc @ lc.T, a, atol=1e-10 * max(1.0, np.abs(a).max()))


def test_sample_covariance_examples():
    np.testing.assert_array_equal(sample_covariance([[0, 0], [2, 0]]), [[2.0, 0.0], [0.0, 0.0]])
    np.testing.assert_array_equal(sample_covariance([[1, 1]] * 3), np.zeros((2, 2)))
    with pytest.raises(ValueError, match="insufficient data"):
        sample_covariance([[1.0, 2.0]])


def test_sample_covariance_monte_carlo(rng):
    cov = np.array([[1.0, 0.5], [0.5, 1.0]])
    pts = rng.multivariate_normal([0, 0], cov, size=10_000)
    np.testing.assert_allclose(sample_covariance(pts), cov, atol=0.1)
    np.testing.assert_allclose(sample_covariance(pts), np.cov(pts, rowvar=False), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(arrays(float, (6, 2), elements=st.floats(-5, 5)), arrays(float, 2, elements=st.floats(-5, 5)))
def test_sample_covariance_translation_invariant(pts, shift):
    np.testing.assert_allclose(sample_covariance(pts + shift), sample_covariance(pts), atol=1e-12)
