import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from treessep.heatkernel import TruncationError
from treessep.potential import (
    QuadratureError,
    _KernelCurve,
    closed_ball_variance,
    field_on_ball,
    finite_time_covariance,
    gamma_matrix,
    grad_pair_sum,
    grad_pair_sum_radial,
    green_closed_form,
    green_integral,
    green_table,
    k_field_bound,
    k_field_l2,
    resolvent_field,
    resolvent_quadrature,
    sigma_sq,
)
from treessep.treegeo import ORIGIN, VertexId, build_ball


def test_green_examples():
    assert green_integral(2, 0) == pytest.approx(2 / 3, abs=1e-10)
    assert green_integral(2, 1) == pytest.approx(1 / 3, abs=1e-10)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_green_closed_form_by_quadrature(d):
    for k in range(7):
        val, err = green_integral(d, k, with_error=True)
        assert abs(val - d ** (1 - k) / (d * d - 1)) < 1e-8
        assert err < 1e-8
        assert green_closed_form(d, k) == pytest.approx(d ** (1 - k) / (d * d - 1), rel=1e-15)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_green_table_decay(d):
    table = green_table(d, 7)
    assert np.all(table.values > 0)
    assert np.all(np.diff(table.values) < 0)
    assert np.allclose(table.ratios(), 1 / d, atol=1e-6)


def test_sigma_sq():
    assert sigma_sq(2, 0.5) == pytest.approx(1 / 3, abs=1e-10)
    assert sigma_sq(3, 1e-9) < 1e-8
    with pytest.raises(ValueError):
        sigma_sq(2, 0.0)
    with pytest.raises(ValueError):
        sigma_sq(2, 1.2)


@given(st.integers(2, 4), st.floats(0.01, 0.99))
def test_sigma_sq_particle_hole_symmetry(d, p):
    assert sigma_sq(d, p) == pytest.approx(sigma_sq(d, 1 - p), rel=1e-9)


def test_gamma_examples():
    g1 = gamma_matrix(2, 0.5, [ORIGIN])
    assert g1.entries.shape == (1, 1) and g1.entries[0, 0] == pytest.approx(1 / 3, abs=1e-10)
    g2 = gamma_matrix(2, 0.5, [ORIGIN, (0,)])
    assert g2.entries[0, 1] == pytest.approx(1 / 6, abs=1e-10)
    g3 = gamma_matrix(2, 0.5, [(0,), (1,)])
    assert g3.entries[0, 1] == pytest.approx(1 / 12, abs=1e-10)
    with pytest.raises(ValueError):
        gamma_matrix(2, 0.5, [(0,), (0,)])


@given(st.lists(st.lists(st.integers(0, 1), max_size=4), min_size=1, max_size=5, unique_by=tuple))
def test_gamma_is_psd_and_distance_stationary(words):
    pts = [VertexId(tuple(w)) for w in words]
    g = gamma_matrix(2, 0.3, pts, method="closed-form")
    assert np.allclose(g.entries, g.entries.T)
    assert g.min_eigenvalue() >= -1e-10
    assert np.allclose(np.diag(g.entries), sigma_sq(2, 0.3))


@pytest.mark.parametrize("t", [1.0, 10.0, 100.0])
@pytest.mark.parametrize("d", [2, 3])
def test_resolvent_total_mass(d, t):
    f = resolvent_field(d, t)
    assert f.total() == pytest.approx(math.sqrt(t), rel=1e-6)
    assert np.all(f.values >= 0)
    assert np.all(np.diff(f.values) <= 0)
    assert np.abs(f.residual()).max() <= 1e-10


def test_resolvent_against_quadrature():
    f = resolvent_field(2, 4.0)
    assert f.at(0) == pytest.approx(0.41302, abs=1e-5)
    for k in range(3):
        assert abs(f.at(k) - resolvent_quadrature(2, 4.0, k)) < 1e-7


def test_resolvent_truncation_error():
    with pytest.raises(TruncationError):
        resolvent_field(2, 100.0, K_max=5)


def test_resolvent_on_ball_is_radial():
    ball = build_ball(2, 5)
    g = field_on_ball(resolvent_field(2, 4.0), ball, (0,))
    assert g[ball.index((0,))] == g.max()
    assert g[ball.index(())] == pytest.approx(g[ball.index((0, 1))])


def test_grad_pair_sum_limit_and_direct_sum():
    f = resolvent_field(2, 4.0)
    assert grad_pair_sum(2, 4.0, 0, f) == pytest.approx(grad_pair_sum_radial(f), abs=1e-9)
    ball = build_ball(2, 14)
    e0, e1 = ball.edges[:, 0], ball.edges[:, 1]
    gx = field_on_ball(f, ball, ())
    gw = field_on_ball(f, ball, (0,))
    direct = 2 * np.sum((gx[e0] - gx[e1]) * (gw[e0] - gw[e1]))
    assert direct == pytest.approx(grad_pair_sum(2, 4.0, 1, f), abs=1e-6)


def test_grad_pair_sum_approaches_limit_from_below():
    for k in (0, 1, 2):
        limit = 2 * green_closed_form(2, k)
        vals = [grad_pair_sum(2, t, k) for t in (4.0, 25.0, 100.0, 400.0)]
        assert all(v < limit for v in vals)
        assert np.all(np.diff(vals) > 0)
    assert grad_pair_sum(2, 1e6, 0) == pytest.approx(4 / 3, abs=5e-3)


def test_k_field_monotone_and_bounded():
    vals = [k_field_l2(2, 4.0, u) for u in (0, 1, 2, 5, 10)]
    assert np.all(np.diff(vals) < 0)
    assert vals[-1] <= k_field_bound(2, 4.0, 10.0)
    assert k_field_bound(2, 4.0, 10.0) == pytest.approx(
        math.exp(-20 * (math.sqrt(2) - 1) ** 2) / (0.5 + (math.sqrt(2) - 1) ** 2) ** 2)


def test_k_field_double_integral():
    t = 4.0
    lam = 1 / math.sqrt(t)
    curve = _KernelCurve(2, 0, 120.0)
    val, _ = integrate.dblquad(lambda s2, s1: math.exp(-lam * (s1 + s2)) * curve(s1 + s2),
                               0, 60, 0, 60, epsabs=1e-10, epsrel=1e-10)
    assert abs(val - k_field_l2(2, t, 0.0)) < 1e-7


def test_finite_time_covariance():
    # Var(xi_t)/t increases toward sigma^2
    vals = [finite_time_covariance(2, 0.5, t, 0) / t for t in (10.0, 50.0, 200.0)]
    assert np.all(np.diff(vals) > 0) and vals[-1] < 1 / 3
    assert finite_time_covariance(2, 0.5, 5.0, 0) / 5 == pytest.approx(0.24189, abs=1e-5)
    # short-time expansion: Var ~ 2p(1-p) t^2 / 2
    assert finite_time_covariance(2, 0.5, 1e-3, 0) == pytest.approx(0.25e-6, rel=1e-2)


def test_closed_ball_variance_converges_in_radius():
    exact = finite_time_covariance(2, 0.5, 20.0, 0)
    errs = [abs(closed_ball_variance(2, 0.5, 20.0, R) - exact) for R in (4, 7, 10)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] / exact < 1e-2


def test_quadrature_error_type():
    assert issubclass(QuadratureError, RuntimeError)
