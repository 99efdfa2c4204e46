"""Exact-oracle checks behind ``treessep selftest``."""

from __future__ import annotations

import numpy as np

from .heatkernel import beta_mgf, beta_mgf_uniformized, heat_bound, radial_distribution
from .potential import field_on_ball, green_closed_form, green_integral, resolvent_field
from .ssep import all_states, generator_matrix, product_weights
from .treegeo import build_ball, star


def check_duality(replicas: int):
    from .dual import verify_duality

    cases = verify_duality(replicas=replicas)
    worst = max(abs(c.method_values["duality"] - c.method_values["exact"]) for c in cases)
    return all(c.passed for c in cases), f"{len(cases)} cases, oracle error {worst:.1e}"


def detailed_balance_error(d: int, p: float) -> float:
    """max |nu(a) L(a, b) - nu(b) L(b, a)| on the star graph."""
    ball = star(d)
    L = generator_matrix(ball).toarray()
    w = product_weights(all_states(ball), p)
    flow = w[:, None] * L
    return float(np.abs(flow - flow.T).max())


def adjointness_error(d: int, p: float, seed: int = 0) -> float:
    """|<f, L g>_nu - <L f, g>_nu| for random f, g on the star graph."""
    ball = star(d)
    L = generator_matrix(ball)
    w = product_weights(all_states(ball), p)
    rng = np.random.default_rng(seed)
    f, g = rng.standard_normal((2, L.shape[0]))
    return float(abs(w @ (f * (L @ g)) - w @ ((L @ f) * g)))


def resolvent_vertex_residual(d: int, t: float, R: int) -> float:
    """max over vertices strictly inside the ball of |Omega g - (g/sqrt t - delta_x)|."""
    ball = build_ball(d, R)
    g = field_on_ball(resolvent_field(d, t), ball, ())
    A = ball.adjacency_matrix()
    lap = A @ g - ball.degree() * g
    rhs = g / np.sqrt(t)
    rhs[0] -= 1.0
    inner = ball.depth < R
    return float(np.abs(lap - rhs)[inner].max())


def run_selftest(quick: bool = True):
    results = []

    ok, detail = check_duality(2000 if quick else 10_000)
    results.append(("duality", ok, detail))

    db = max(detailed_balance_error(d, p) for d in (2, 3) for p in (0.3, 0.5))
    adj = max(adjointness_error(d, p) for d in (2, 3) for p in (0.3, 0.5))
    results.append(("detailed-balance", db <= 1e-12 and adj <= 1e-12, f"balance {db:.1e}, adjoint {adj:.1e}"))

    rad = max(float(np.abs(resolvent_field(d, t).residual()).max()) for d in (2, 3) for t in (1.0, 4.0, 100.0))
    vert = resolvent_vertex_residual(2, 4.0, 8)
    results.append(("resolvent-identity", rad <= 1e-10 and vert <= 1e-10, f"radial {rad:.1e}, interior {vert:.1e}"))

    gerr = max(abs(green_integral(d, k) - green_closed_form(d, k)) for d in (2, 3, 4) for k in range(7))
    results.append(("green-closed-form", gerr <= 1e-8, f"max error {gerr:.1e}"))

    excess = 0.0
    for d in (2, 3, 4):
        for t in (0.5, 2.0, 10.0):
            per = radial_distribution(d, t).per_vertex()
            excess = max(excess, max(per[k] - heat_bound(d, t, k) for k in range(min(len(per), 12))))
    results.append(("heat-bound", excess <= 1e-10, f"max excess {excess:.1e}"))

    merr = max(abs(beta_mgf(d, t, th) - beta_mgf_uniformized(d, t, th))
               for d in (2, 3) for t in (0.5, 2.0) for th in (0.2, 1.0))
    results.append(("beta-mgf", merr <= 1e-8, f"max error {merr:.1e}"))
    return results
