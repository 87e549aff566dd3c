import numpy as np
import pytest

from sysid.simulate import (
    Trajectory,
    euler_maruyama,
    make_builtin,
    ornstein_uhlenbeck,
    polynomial_model,
    standard_normals,
)


def appendix_potential(x1, x2):
    return (-0.4 * x1 + 0.4 * x2 - x1 ** 2 - 0.3 * x1 * x2 + 2.0 * x2 ** 2
            + 0.2 * x1 ** 3 + 0.4 * x1 ** 2 * x2 - 0.4 * x1 * x2 ** 2 - 0.2 * x2 ** 3
            + x1 ** 4 - 0.2 * x1 ** 3 * x2 + 0.2 * x1 ** 2 * x2 ** 2 + 0.2 * x2 ** 4)


def test_double_well_coefficients():
    m = make_builtin("double_well")
    d = m.dictionary
    b1 = {d.labels()[k]: v for k, v in enumerate(m.drift[0]) if v}
    b2 = {d.labels()[k]: v for k, v in enumerate(m.drift[1]) if v}
    assert b1 == {"x1": 4.0, "x1^3": -4.0}
    assert b2 == {"x2": -2.0}


def test_double_well_evaluation():
    m = make_builtin("double-well")
    b, sigma, a = m.evaluate(np.array([1.0, 0.0]))
    np.testing.assert_allclose(b, [0.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(sigma, [[0.7, 1.0], [0.0, 0.5]])
    np.testing.assert_allclose(a, [[1.49, 0.5], [0.5, 0.25]], atol=1e-15)
    b, _, a = m.evaluate(np.array([0.0, 1.0]))
    np.testing.assert_allclose(b, [0.0, -2.0])
    np.testing.assert_allclose(a, [[0.49, 0.0], [0.0, 0.25]], atol=1e-15)


def test_appendix_drift_is_minus_gradient(rng):
    m = make_builtin("appendix_dense")
    d = m.dictionary
    b1 = {d.labels()[k]: round(v, 12) for k, v in enumerate(m.drift[0]) if v}
    assert b1 == {"1": 0.4, "x1": 2.0, "x2": 0.3, "x1^2": -0.6, "x1*x2": -0.8, "x2^2": 0.4,
                  "x1^3": -4.0, "x1^2*x2": 0.6, "x1*x2^2": -0.4}
    h = 1e-6
    for x in rng.uniform(-2, 2, (20, 2)):
        grad = np.array([
            (appendix_potential(x[0] + h, x[1]) - appendix_potential(x[0] - h, x[1])) / (2 * h),
            (appendix_potential(x[0], x[1] + h) - appendix_potential(x[0], x[1] - h)) / (2 * h),
        ])
        np.testing.assert_allclose(m.evaluate(x)[0], -grad, atol=1e-6)


def test_unknown_model_lists_names():
    with pytest.raises(ValueError, match="double_well"):
        make_builtin("nonexistent")


def test_deterministic_euler_step():
    m = polynomial_model(1, [{(1,): -1.0}], [[{}]])
    traj = euler_maruyama(m, [1.0], 1e-3, 100, seed=0)
    x = 1.0
    for n in range(101):
        assert traj.states[n, 0] == x
        x = x + (-x) * 1e-3


def test_same_seed_identical_and_different_seed_differs():
    m = make_builtin("double_well")
    a = euler_maruyama(m, [1.0, 0.0], 1e-3, 5000, seed=7)
    b = euler_maruyama(m, [1.0, 0.0], 1e-3, 5000, seed=7)
    c = euler_maruyama(m, [1.0, 0.0], 1e-3, 5000, seed=8)
    assert a.states.tobytes() == b.states.tobytes()
    assert not np.array_equal(a.states, c.states)
    assert len(a) == 5001 and a.states[0].tolist() == [1.0, 0.0]


def test_step_matches_formula():
    m = make_builtin("double_well")
    steps, dt, seed = 50, 1e-3, 3
    traj = euler_maruyama(m, [0.3, -0.2], dt, steps, seed)
    xi = standard_normals(seed, 2 * steps).reshape(steps, 2)
    x = np.array([0.3, -0.2])
    for n in range(steps):
        b, sigma, _ = m.evaluate(x)
        x = x + b * dt + sigma @ (np.sqrt(dt) * xi[n])
        np.testing.assert_allclose(traj.states[n + 1], x, rtol=1e-13, atol=1e-15)


def test_standard_normals_moments():
    z = standard_normals(0, 200_001)
    assert z.shape == (200_001,)
    assert abs(z.mean()) < 0.01 and abs(z.var() - 1) < 0.01


def test_ou_stationary_variance():
    traj = euler_maruyama(ornstein_uhlenbeck(1.0, 0.5), [0.0], 1e-3, 1_000_000, seed=11)
    var = traj.states[10_000:, 0].var()
    assert abs(var - 0.125) / 0.125 < 0.05


def test_divergence_names_step():
    m = polynomial_model(1, [{(3,): 1.0}], [[{}]])
    with pytest.raises(FloatingPointError, match="diverged at step"):
        euler_maruyama(m, [10.0], 0.1, 1000, seed=0)
    short = euler_maruyama(m, [10.0], 0.1, 1000, seed=0, on_divergence="truncate")
    assert len(short) < 1001 and np.all(np.isfinite(short.states))


def test_input_validation():
    m = make_builtin("double_well")
    with pytest.raises(ValueError):
        euler_maruyama(m, [1.0, 0.0], 0.0, 10, 0)
    with pytest.raises(ValueError):
        euler_maruyama(m, [1.0, 0.0], 1e-3, 0, 0)
    with pytest.raises(ValueError):
        euler_maruyama(m, [1.0], 1e-3, 10, 0)
    with pytest.raises(ValueError):
        Trajectory(dt=-1.0, states=np.zeros((3, 1)), seed=0)
    with pytest.raises(ValueError):
        Trajectory(dt=1.0, states=np.zeros((1, 1)), seed=0)


@pytest.mark.slow
def test_double_well_bimodal():
    traj = euler_maruyama(make_builtin("double_well"), [1.0, 0.0], 1e-3, 2_000_000, seed=1)
    hist, edges = np.histogram(traj.states[:, 0], bins=80, range=(-2, 2))
    centres = 0.5 * (edges[1:] + edges[:-1])
    left = centres[np.argmax(np.where(centres < 0, hist, -1))]
    right = centres[np.argmax(np.where(centres > 0, hist, -1))]
    assert abs(left + 1) <= 0.2 and abs(right - 1) <= 0.2
    # a real dip between the modes
    assert hist[np.argmin(np.abs(centres))] < 0.5 * min(hist.max(), hist[centres < 0].max())
