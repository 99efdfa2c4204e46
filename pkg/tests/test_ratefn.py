import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import optimize

from treessep.potential import gamma_matrix, sigma_sq
from treessep.ratefn import (
    InfeasibleTargetError,
    ScalingSchedule,
    half_space_rate,
    rate_1d,
    rate_function,
    tilt_for_target,
)

GAMMA3 = gamma_matrix(2, 0.5, [(), (0,), (0, 1)], method="closed-form").entries
finite = st.floats(-5, 5, allow_nan=False)


def test_rate_examples():
    q = rate_function(np.zeros(2), np.eye(2))
    assert q.result == 0.0 and np.all(q.tilt == 0)
    u = np.array([0.3, -1.2, 2.0])
    assert rate_function(u, np.eye(3)).result == pytest.approx(0.5 * u @ u)
    assert rate_function([1.0], [[1 / 3]]).result == pytest.approx(1.5)
    assert rate_1d(1.0, sigma_sq(2, 0.5)) == pytest.approx(1.5)


def test_rate_1d():
    assert rate_1d(0.0, 0.2) == 0.0
    assert rate_1d(2.0, 0.2) == pytest.approx(4 * rate_1d(1.0, 0.2))
    with pytest.raises(ValueError):
        rate_1d(1.0, 0.0)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        rate_function([1.0, 2.0], np.eye(3))


def test_infeasible_target_gives_infinity():
    g = np.array([[1.0, 1.0], [1.0, 1.0]])
    assert rate_function([1.0, -1.0], g).result == float("inf")
    assert rate_function([1.0, 1.0], g).result == pytest.approx(0.5)
    with pytest.raises(InfeasibleTargetError):
        tilt_for_target([1.0, 0.0], g)


def test_tilt_examples():
    assert np.all(tilt_for_target([0.0], [[1 / 3]]) == 0)
    assert tilt_for_target([1 / 3], [[1 / 3]])[0] == pytest.approx(1.0)
    g = gamma_matrix(2, 0.5, [(), (0,)]).entries
    u = np.array([0.4, -0.1])
    phi = tilt_for_target(u, g)
    assert np.abs(g @ phi - u).max() < 1e-10


@given(st.tuples(finite, finite, finite))
def test_rate_is_the_legendre_supremum(u):
    u = np.array(u)
    q = rate_function(u, GAMMA3)
    assert np.abs(GAMMA3 @ q.tilt - u).max() < 1e-8
    rng = np.random.default_rng(0)
    scale = np.abs(q.tilt).max() + 1
    cs = rng.uniform(-2 * scale, 2 * scale, (10_000, 3))
    vals = cs @ u - 0.5 * np.einsum("ij,jk,ik->i", cs, GAMMA3, cs)
    best = cs[np.argmax(vals)]
    assert vals.max() <= q.result + 1e-9
    res = optimize.minimize(lambda c: -(c @ u - 0.5 * c @ GAMMA3 @ c), best, method="BFGS", tol=1e-12)
    assert -res.fun == pytest.approx(q.result, rel=1e-4, abs=1e-9)


@given(st.tuples(finite, finite, finite), st.tuples(finite, finite, finite))
def test_convex_and_nonnegative(u1, u2):
    u1, u2 = np.array(u1), np.array(u2)
    i1 = rate_function(u1, GAMMA3).result
    i2 = rate_function(u2, GAMMA3).result
    im = rate_function((u1 + u2) / 2, GAMMA3).result
    assert i1 >= 0 and i2 >= 0
    assert im <= 0.5 * (i1 + i2) + 1e-9 * (1 + i1 + i2)


def test_half_space_minimiser():
    g = gamma_matrix(2, 0.5, [(), (0,)]).entries
    u = np.array([0.5, 0.5])
    phi = tilt_for_target(u, g)
    val, ustar = half_space_rate(phi, phi @ u, g)
    assert np.allclose(ustar, u)
    assert val == pytest.approx(rate_function(u, g).result)
    # every other point of the boundary hyperplane costs more
    rng = np.random.default_rng(3)
    for _ in range(100):
        v = rng.standard_normal(2)
        v -= (v @ phi) / (phi @ phi) * phi
        assert rate_function(u + v, g).result >= val - 1e-12


@pytest.mark.parametrize("alpha", [0.5, 1.0, 0.2, 1.3])
def test_schedule_range(alpha):
    with pytest.raises(ValueError):
        ScalingSchedule(alpha)


@given(st.floats(0.51, 0.99))
def test_schedule_limits(alpha):
    s = ScalingSchedule(alpha)
    t1, t2 = 1e4, 1e8
    assert s(t2) / t2 < s(t1) / t1
    assert np.sqrt(t2) / s(t2) < np.sqrt(t1) / s(t1)
    assert s.speed(t1) == pytest.approx(s(t1) ** 2 / t1)
