import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from treessep.potential import grad_pair_sum, resolvent_field
from treessep.ratefn import ScalingSchedule
from treessep.rng import replica_sequence
from treessep.ssep import (
    Configuration,
    ConfigurationError,
    LinearFunctional,
    all_occupied,
    all_states,
    apply_generator,
    dirichlet_form,
    expectation_exact,
    generator_matrix,
    martingale_diag,
    martingale_parts,
    phi_diag,
    product_weights,
    replica,
    resolvent_fields,
    resolvent_identity_residual,
    run,
    sample_initial,
    tilted_run,
)
from treessep.treegeo import ResourceError, build_ball, star

SCHED = ScalingSchedule(0.75)


@pytest.fixture(scope="module")
def ball6():
    return build_ball(2, 6)


def test_sample_initial_is_reproducible(ball6):
    a = sample_initial(ball6, 0.5, 11)
    b = sample_initial(ball6, 0.5, 11)
    c = sample_initial(ball6, 0.5, 12)
    assert a == b and a != c
    assert a.count == int(a.occ.sum())
    with pytest.raises(ValueError):
        sample_initial(ball6, 1.0, 0)


def test_sample_initial_density():
    ball = build_ball(2, 15)  # 98_305 vertices
    eta = sample_initial(ball, 0.3, 5)
    n = ball.n_vertices
    assert abs(eta.occ.mean() - 0.3) <= 3 * math.sqrt(0.21 / n)


def test_configuration_rejects_bad_bits(ball6):
    with pytest.raises(ValueError):
        Configuration(ball6, np.full(ball6.n_vertices, 2))
    with pytest.raises(ValueError):
        Configuration(ball6, np.zeros(3))


@given(st.integers(0, 2**32 - 1), st.floats(0.0, 3.0))
def test_run_conserves_particles_and_replays(seed, t):
    ball = build_ball(2, 4)
    eta = sample_initial(ball, 0.5, seed)
    traj, led = run(eta, t, [0, 1], seed)
    assert traj.final.count == eta.count
    assert traj.replay() == traj.final
    assert np.all(np.diff(traj.times) > 0)
    assert traj.n_events == 0 or (traj.times[0] >= 0 and traj.times[-1] <= t)
    assert np.all((led.X >= 0) & (led.X <= t + 1e-12))
    assert np.allclose(led.xi, led.X - 0.5 * t)
    assert led.log_weight == 0.0


def test_run_is_deterministic(ball6):
    eta = sample_initial(ball6, 0.5, 1)
    a = run(eta, 2.0, [0], 77)
    b = run(eta, 2.0, [0], 77)
    assert np.array_equal(a[0].times, b[0].times) and np.array_equal(a[0].edges, b[0].edges)
    assert np.array_equal(a[1].X, b[1].X)


def test_radius_zero_has_no_dynamics():
    ball = build_ball(2, 0)
    eta = Configuration(ball, [1], 0.5)
    traj, led = run(eta, 3.0, [0], 1)
    assert traj.n_events == 0 and led.X[0] == 3.0


def test_stationary_mean_is_zero(ball6):
    xi = []
    for r in range(2000):
        eta, dyn = replica(ball6, 0.5, replica_sequence(3, r))
        xi.append(run(eta, 1.0, [0], dyn, record=False)[1].xi[0])
    xi = np.array(xi)
    assert abs(xi.mean()) <= 3 * xi.std(ddof=1) / math.sqrt(len(xi))


def test_zero_tilt_matches_plain_run(ball6):
    eta = sample_initial(ball6, 0.5, 4)
    traj, led = tilted_run(eta, 2.0, [0], [0.0], SCHED, 9)
    assert led.log_weight == 0.0
    assert traj.final.count == eta.count and traj.replay() == traj.final


def test_tilt_overflow_guard(ball6):
    eta = sample_initial(ball6, 0.5, 4)
    with pytest.raises(ConfigurationError):
        tilted_run(eta, 1.0, [0], [1e4], SCHED, 1)


def test_tilted_estimator_is_unbiased():
    ball = build_ball(2, 8)
    t, n = 10.0, 2000
    fields = resolvent_fields(ball, [0], t)
    direct, weighted, base = [], [], []
    for r in range(n):
        eta, dyn = replica(ball, 0.5, replica_sequence(21, r))
        direct.append(run(eta, t, [0], dyn, record=False)[1].xi[0] >= 0)
        eta, dyn = replica(ball, 0.5, replica_sequence(22, r))
        led = tilted_run(eta, t, [0], [1.0], SCHED, dyn, fields=fields, record=False)[1]
        w = math.exp(-led.log_weight)
        base.append(w)
        weighted.append(w * (led.xi[0] >= 0))
    direct, weighted, base = map(np.array, (direct, weighted, base))
    se = math.hypot(direct.std(ddof=1), weighted.std(ddof=1)) / math.sqrt(n)
    assert abs(direct.mean() - weighted.mean()) <= 3 * se
    assert abs(direct.mean() - 0.5) <= 3 * direct.std(ddof=1) / math.sqrt(n)
    assert abs(base.mean() - 1) <= 3 * base.std(ddof=1) / math.sqrt(n)


def test_tilt_moves_the_mean_upward():
    ball = build_ball(2, 8)
    t = 10.0
    fields = resolvent_fields(ball, [0], t)
    xi = [tilted_run(*replica(ball, 0.5, replica_sequence(5, r))[:1], t, [0], [2.0], SCHED,
                     replica(ball, 0.5, replica_sequence(5, r))[1], fields=fields, record=False)[1].xi[0]
          for r in range(300)]
    assert np.mean(xi) > 3 * np.std(xi) / math.sqrt(300)


def test_apply_generator_examples():
    ball = star(2)
    rng = np.random.default_rng(0)
    for _ in range(10):
        eta = sample_initial(ball, 0.5, rng)
        assert apply_generator(lambda c: 3.0, eta) == 0.0
        x = 0
        expected = sum(eta.occ[y] - eta.occ[x] for y in ball.neighbor_indices(x))
        assert apply_generator(lambda c: float(c.occ[x]), eta) == expected
        coef = np.zeros(ball.n_vertices)
        coef[x] = 1.0
        assert apply_generator(LinearFunctional(coef), eta) == expected


def test_resolvent_identity_residual_shrinks_with_radius():
    field = resolvent_field(2, 4.0)
    rng = np.random.default_rng(1)
    worst = []
    for R in (6, 9, 12):
        ball = build_ball(2, R)
        g = resolvent_fields(ball, [0], 4.0, field)[0]
        worst.append(max(abs(resolvent_identity_residual(sample_initial(ball, 0.5, rng), g, 0, 4.0, 0.5))
                         for _ in range(20)))
    assert worst[0] > worst[1] > worst[2]


def test_dirichlet_form_examples():
    ball = star(2)
    assert dirichlet_form(lambda c: 1.0, ball, 0.5) == 0.0
    assert dirichlet_form(lambda c: float(c.occ[0]), ball, 0.5) == pytest.approx(0.75, abs=1e-14)
    est, se = dirichlet_form(lambda c: float(c.occ[0]), ball, 0.5, mode="mc", n_samples=4000, seed=2)
    assert abs(est - 0.75) <= 4 * se
    with pytest.raises(ResourceError):
        dirichlet_form(lambda c: 0.0, build_ball(2, 3), 0.5)


@pytest.mark.parametrize("d,p", [(2, 0.5), (3, 0.3)])
def test_reversibility_on_star(d, p):
    ball = star(d)
    L = generator_matrix(ball)
    w = product_weights(all_states(ball), p)
    flow = w[:, None] * L.toarray()
    assert np.abs(flow - flow.T).max() <= 1e-12
    rng = np.random.default_rng(d)
    f, g = rng.standard_normal((2, L.shape[0]))
    assert abs(w @ (f * (L @ g)) - w @ (g * (L @ f))) <= 1e-12


def test_exact_expectation_of_conserved_count():
    ball = build_ball(2, 2)
    eta = sample_initial(ball, 0.5, 3)
    assert expectation_exact(lambda c: float(c.count), eta, 0.9) == pytest.approx(eta.count, abs=1e-10)


def test_martingale_diagnostics(ball6):
    t = 2.0
    g = resolvent_fields(ball6, [0], t)[0]
    eta = sample_initial(ball6, 0.5, 8)
    traj, led = run(eta, t, [0], 8)
    times, M = martingale_diag(traj, 0, t, 0.5, g)
    assert M[0] == 0.0 and times[-1] == t
    Mt, G0, Gt, intG = martingale_parts(traj, 0, t, 0.5, g)
    assert abs(Mt + G0 - Gt + intG / math.sqrt(t) - led.xi[0]) <= 1e-9


def test_martingale_has_zero_mean():
    ball = build_ball(2, 5)
    t = 1.0
    g = resolvent_fields(ball, [0], t)[0]
    Ms = []
    for r in range(10_000):
        eta, dyn = replica(ball, 0.5, replica_sequence(31, r))
        traj, _ = run(eta, t, [0], dyn)
        Ms.append(martingale_parts(traj, 0, t, 0.5, g)[0])
    Ms = np.array(Ms)
    assert abs(Ms.mean()) <= 3 * Ms.std(ddof=1) / math.sqrt(len(Ms))


def test_phi_frozen_configuration():
    ball = build_ball(2, 12)
    t = 4.0
    field = resolvent_field(2, t)
    gx, gw = resolvent_fields(ball, [0, 1], t, field)
    traj, _ = run(all_occupied(ball, 0.5), t, [], 1)
    assert traj.n_events == 0
    phi = phi_diag(traj, 0, 1, t, 0.5, gx, gw)
    assert phi == pytest.approx(-0.5 * grad_pair_sum(2, t, 1, field), abs=1e-5)


def test_phi_mean_and_decay():
    ball = build_ball(2, 9)
    rms = {}
    for t in (10.0, 100.0):
        g = resolvent_fields(ball, [0], t)[0]
        vals = []
        for r in range(40):
            eta, dyn = replica(ball, 0.5, replica_sequence(41, r))
            traj, _ = run(eta, t, [], dyn)
            vals.append(phi_diag(traj, 0, 0, t, 0.5, g, g))
        vals = np.array(vals)
        assert abs(vals.mean()) <= 3 * vals.std(ddof=1) / math.sqrt(len(vals)) + 1e-12
        rms[t] = math.sqrt(np.mean(vals**2))
    assert rms[100.0] < rms[10.0]
