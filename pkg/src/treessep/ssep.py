"""Symmetric simple exclusion on a closed ball of the tree.

The dynamics use the stirring representation: every edge carries a rate-1
clock and swaps the occupancies of its endpoints when it rings.  The ball is
closed (no exterior edges), so the Bernoulli product measure stays exactly
invariant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .potential import ResolventField, field_on_ball, resolvent_field
from .ratefn import ScalingSchedule
from .rng import dynamics_seed, split
from .treegeo import Ball, ResourceError

MAX_EXACT_STATES = 2**16
MAX_TILT_EXPONENT = 20.0


class ConfigurationError(ValueError):
    """Simulation parameters that cannot be run safely."""


@dataclass(frozen=True)
class Configuration:
    ball: Ball = field(repr=False)
    occ: np.ndarray
    p: float | None = None

    def __post_init__(self):
        occ = np.array(self.occ, dtype=np.int8, copy=True)
        if occ.shape != (self.ball.n_vertices,):
            raise ValueError(f"occupancy has shape {occ.shape}, ball has {self.ball.n_vertices} vertices")
        if np.any((occ != 0) & (occ != 1)):
            raise ValueError("occupancies must be 0 or 1")
        occ.setflags(write=False)
        object.__setattr__(self, "occ", occ)
        object.__setattr__(self, "count", int(occ.sum()))

    def swapped(self, a: int, b: int) -> Configuration:
        occ = self.occ.copy()
        occ[a], occ[b] = occ[b], occ[a]
        return Configuration(self.ball, occ, self.p)

    def __eq__(self, other):
        return (
            isinstance(other, Configuration)
            and other.ball is self.ball
            and np.array_equal(other.occ, self.occ)
        )

    __hash__ = None


def sample_initial(ball: Ball, p: float, seed) -> Configuration:
    """Independent Bernoulli(p) occupancies from a seeded stream."""
    if not 0 < p < 1:
        raise ValueError(f"density p must lie in (0, 1), got {p}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    occ = (rng.random(ball.n_vertices) < p).astype(np.int8)
    return Configuration(ball, occ, p)


def all_occupied(ball: Ball, p: float | None = None) -> Configuration:
    return Configuration(ball, np.ones(ball.n_vertices, dtype=np.int8), p)


@dataclass(frozen=True)
class Trajectory:
    initial: Configuration
    times: np.ndarray
    edges: np.ndarray
    final: Configuration
    horizon: float

    @property
    def n_events(self) -> int:
        return len(self.times)

    def replay(self) -> Configuration:
        occ = self.initial.occ.copy()
        _kernels.replay(occ, self.initial.ball.edges[:, 0], self.initial.ball.edges[:, 1], self.edges)
        return Configuration(self.initial.ball, occ, self.initial.p)


@dataclass(frozen=True)
class OccupationLedger:
    targets: tuple[int, ...]
    X: np.ndarray
    xi: np.ndarray
    log_weight: float
    p: float
    t: float
    n_swaps: int = 0

    @property
    def Lambda(self) -> np.ndarray:
        return self.xi


def _resolve_targets(ball: Ball, targets) -> tuple[int, ...]:
    out = []
    for v in targets:
        out.append(int(v) if isinstance(v, (int, np.integer)) else ball.index(v))
    if len(set(out)) != len(out):
        raise ValueError("targets must be distinct")
    for i in out:
        if not 0 <= i < ball.n_vertices:
            raise ValueError(f"target index {i} outside the ball")
    return tuple(out)


def _slots(ball: Ball, targets: tuple[int, ...]) -> np.ndarray:
    slot = np.full(ball.n_vertices, -1, dtype=np.int64)
    for s, i in enumerate(targets):
        slot[i] = s
    return slot


def _capacity(n_edges: int, t: float) -> int:
    mean = n_edges * t
    return int(mean + 10 * np.sqrt(mean) + 64)


def _resolve_p(config: Configuration, p):
    p = config.p if p is None else p
    if p is None:
        raise ValueError("density p is needed to centre occupation times")
    return float(p)


def run(
    config: Configuration,
    t: float,
    targets: Sequence,
    seed,
    p: float | None = None,
    record: bool = True,
    max_events: int = 2_000_000_000,
) -> tuple[Trajectory | None, OccupationLedger]:
    """Exact continuous-time stirring dynamics up to time t."""
    if t < 0:
        raise ValueError("t must be >= 0")
    p = _resolve_p(config, p)
    ball = config.ball
    idx = _resolve_targets(ball, targets)
    occ = config.occ.copy()
    cap = _capacity(ball.n_edges, t) if record else 0
    X, n_swaps, _, times, evs = _kernels.run_plain(
        occ, ball.edges[:, 0], ball.edges[:, 1], float(t), _slots(ball, idx), len(idx),
        dynamics_seed(seed), record, cap, max_events,
    )
    final = Configuration(ball, occ, config.p)
    ledger = OccupationLedger(idx, X, X - p * t, 0.0, p, float(t), n_swaps)
    traj = Trajectory(config, times, evs, final, float(t)) if record else None
    return traj, ledger


def resolvent_fields(ball: Ball, centers, t: float, field: ResolventField | None = None) -> np.ndarray:
    """Per-vertex g_t^{x_j} on the ball, one row per centre."""
    if field is None:
        field = resolvent_field(ball.d, t)
    return np.array([field_on_ball(field, ball, ball.vertices[c] if isinstance(c, (int, np.integer)) else c)
                     for c in centers])


def tilt_potential(fields: np.ndarray, c, a_over_t: float) -> np.ndarray:
    """Per-vertex h(y) = (a_t/t) sum_j c_j g_t^{x_j}(y)."""
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if c.shape != (fields.shape[0],):
        raise ValueError(f"tilt has shape {c.shape}, expected ({fields.shape[0]},)")
    return a_over_t * (c @ fields)


def tilted_run(
    config: Configuration,
    t: float,
    targets: Sequence,
    c,
    schedule: ScalingSchedule,
    seed,
    fields: np.ndarray | None = None,
    p: float | None = None,
    record: bool = True,
    max_events: int = 2_000_000_000,
) -> tuple[Trajectory | None, OccupationLedger]:
    """Stirring with rates tilted by the exponential martingale.

    Edge (y, z) swaps at rate exp(h(z) - h(y)) when y is occupied and z empty
    (and the reverse), h = (a_t/t) sum_j c_j g_t^{x_j}.  The ledger's
    ``log_weight`` is log Xi_t, so exp(-log_weight) reweights to the
    untilted law.
    """
    if t <= 0:
        raise ValueError("tilted dynamics need t > 0")
    p = _resolve_p(config, p)
    ball = config.ball
    idx = _resolve_targets(ball, targets)
    if fields is None:
        fields = resolvent_fields(ball, idx, t)
    h = tilt_potential(fields, c, schedule(t) / t)
    e0, e1 = ball.edges[:, 0], ball.edges[:, 1]
    kappa = h[e0] - h[e1]
    if len(kappa) and np.abs(kappa).max() > MAX_TILT_EXPONENT:
        raise ConfigurationError(
            f"tilt exponent {np.abs(kappa).max():.1f} exceeds {MAX_TILT_EXPONENT}; reduce |c| a_t/t"
        )
    occ = config.occ.copy()
    cap = _capacity(ball.n_edges, t) if record else 0
    X, comp, n_swaps, _, times, evs = _kernels.run_tilted(
        occ, e0, e1, kappa, ball.inc_ptr, ball.inc_edges, float(t), _slots(ball, idx), len(idx),
        dynamics_seed(seed), record, cap, max_events,
    )
    F0 = float(h @ (config.occ - p))
    F1 = float(h @ (occ - p))
    log_weight = F1 - F0 - comp
    final = Configuration(ball, occ, config.p)
    ledger = OccupationLedger(idx, X, X - p * t, log_weight, p, float(t), n_swaps)
    traj = Trajectory(config, times, evs, final, float(t)) if record else None
    return traj, ledger


def replica(ball: Ball, p: float, seed_seq) -> tuple[Configuration, int]:
    """Initial configuration and dynamics seed for one replica."""
    rng, dyn = split(seed_seq)
    return sample_initial(ball, p, rng), dyn


# ---------------------------------------------------------------------------
# Generator, Dirichlet form and exact state-space operations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearFunctional:
    """f(eta) = coef . eta + offset; the generator acts on it edge by edge."""

    coef: np.ndarray
    offset: float = 0.0

    def __call__(self, occ) -> float:
        occ = occ.occ if isinstance(occ, Configuration) else occ
        return float(self.coef @ occ + self.offset)


def centered_field(values: np.ndarray, p: float) -> LinearFunctional:
    """G(eta) = sum_y (eta(y) - p) g(y) for per-vertex g."""
    return LinearFunctional(np.asarray(values, dtype=float), -p * float(np.sum(values)))


def _occ_of(eta) -> np.ndarray:
    return eta.occ if isinstance(eta, Configuration) else np.asarray(eta)


def apply_generator(f: Callable, eta: Configuration) -> float:
    """(L f)(eta) = sum over edges of f(eta^{x,y}) - f(eta)."""
    ball = eta.ball
    e0, e1 = ball.edges[:, 0], ball.edges[:, 1]
    occ = eta.occ
    if isinstance(f, LinearFunctional):
        return float(np.sum((occ[e1] - occ[e0]).astype(float) * (f.coef[e0] - f.coef[e1])))
    base = f(eta)
    total = 0.0
    work = occ.copy()
    for a, b in zip(e0, e1):
        if work[a] == work[b]:
            continue
        work[a], work[b] = work[b], work[a]
        total += f(Configuration(ball, work, eta.p)) - base
        work[a], work[b] = work[b], work[a]
    return float(total)


def resolvent_identity_residual(eta: Configuration, g: np.ndarray, x: int, t: float, p: float) -> float:
    """(L G)(eta) - (G(eta)/sqrt t - (eta(x) - p)) for G built from per-vertex g."""
    G = centered_field(g, p)
    return apply_generator(G, eta) - (G(eta) / np.sqrt(t) - (eta.occ[x] - p))


def _check_exact(ball: Ball, cap: int = MAX_EXACT_STATES):
    if 2**ball.n_vertices > cap:
        raise ResourceError(f"2^{ball.n_vertices} states exceed the exact-enumeration cap {cap}")


def all_states(ball: Ball, cap: int = MAX_EXACT_STATES) -> np.ndarray:
    """Every configuration as rows; row s has bit i of s in column i."""
    _check_exact(ball, cap)
    n = ball.n_vertices
    s = np.arange(2**n)
    return ((s[:, None] >> np.arange(n)) & 1).astype(np.int8)


def product_weights(states: np.ndarray, p: float) -> np.ndarray:
    k = states.sum(axis=1)
    n = states.shape[1]
    return p**k * (1 - p) ** (n - k)


def generator_matrix(ball: Ball, cap: int = MAX_EXACT_STATES):
    """Sparse generator of the closed-ball exclusion process on all 2^n states."""
    from scipy.sparse import coo_matrix

    _check_exact(ball, cap)
    n = ball.n_vertices
    s = np.arange(2**n)
    rows, cols = [], []
    for a, b in ball.edges:
        differ = ((s >> a) & 1) != ((s >> b) & 1)
        src = s[differ]
        rows.append(src)
        cols.append(src ^ (1 << a) ^ (1 << b))
    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=int)
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=int)
    L = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(2**n, 2**n)).tocsr()
    out_rate = np.asarray(L.sum(axis=1)).ravel()
    from scipy.sparse import diags

    return (L - diags(out_rate)).tocsr()


def state_index(occ) -> int:
    occ = _occ_of(occ)
    return int(np.sum(occ.astype(np.int64) << np.arange(len(occ))))


def _tabulate(f, ball: Ball, states: np.ndarray) -> np.ndarray:
    if isinstance(f, np.ndarray):
        if f.shape != (len(states),):
            raise ValueError("tabulated function has the wrong length")
        return f.astype(float)
    return np.array([f(Configuration(ball, s)) for s in states], dtype=float)


def dirichlet_form(
    f,
    ball: Ball,
    p: float,
    mode: str = "exact",
    n_samples: int = 10_000,
    seed=0,
    cap: int = MAX_EXACT_STATES,
):
    """(1/4) E_nu sum over ordered neighbours (f(eta^{x,y}) - f(eta))^2.

    ``mode="exact"`` enumerates every state and returns a float; ``mode="mc"``
    samples eta from the product measure and returns (estimate, standard error).
    ``f`` is a callable on configurations, or in exact mode a table over states.
    """
    if not 0 < p < 1:
        raise ValueError(f"density p must lie in (0, 1), got {p}")
    e0, e1 = ball.edges[:, 0], ball.edges[:, 1]
    if mode == "exact":
        states = all_states(ball, cap)
        vals = _tabulate(f, ball, states)
        w = product_weights(states, p)
        s = np.arange(len(states))
        total = 0.0
        for a, b in zip(e0, e1):
            differ = ((s >> a) & 1) != ((s >> b) & 1)
            partner = np.where(differ, s ^ (1 << a) ^ (1 << b), s)
            diff = vals[partner] - vals
            total += np.sum(w * diff**2)
        # each unordered edge appears twice among ordered pairs
        return 0.5 * total
    if mode == "mc":
        rng = np.random.default_rng(seed)
        samples = np.empty(n_samples)
        for i in range(n_samples):
            eta = sample_initial(ball, p, rng)
            base = f(eta)
            acc = 0.0
            for a, b in zip(e0, e1):
                if eta.occ[a] != eta.occ[b]:
                    acc += (f(eta.swapped(a, b)) - base) ** 2
            samples[i] = 0.5 * acc
        return float(samples.mean()), float(samples.std(ddof=1) / np.sqrt(n_samples))
    raise ValueError(f"unknown mode {mode!r}")


def expectation_exact(f, eta: Configuration, t: float, cap: int = MAX_EXACT_STATES) -> float:
    """E_eta f(eta_t) by exponentiating the full generator."""
    from scipy.linalg import expm
    from scipy.sparse.linalg import expm_multiply

    ball = eta.ball
    states = all_states(ball, cap)
    vals = _tabulate(f, ball, states)
    L = generator_matrix(ball, cap)
    if len(states) <= 4096:
        col = expm(L.toarray() * t) @ vals
    else:
        col = expm_multiply(L * t, vals)
    return float(col[state_index(eta)])


# ---------------------------------------------------------------------------
# Trajectory diagnostics
# ---------------------------------------------------------------------------


def _edge_flips(traj: Trajectory) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Edge endpoints and the occupancy of endpoint 0 before each recorded swap."""
    ball = traj.initial.ball
    e0, e1 = ball.edges[:, 0], ball.edges[:, 1]
    occ = traj.initial.occ.copy()
    before = _kernels.replay(occ, e0, e1, traj.edges)
    return e0[traj.edges], e1[traj.edges], before


def martingale_diag(traj: Trajectory, x: int, t: float, p: float, g: np.ndarray | None = None):
    """Path of M_s = G(eta_s) - G(eta_0) - int_0^s [G(eta_u)/sqrt t - (eta_u(x) - p)] du.

    Returns (times, M) at 0, every recorded swap, and the horizon.
    """
    ball = traj.initial.ball
    if g is None:
        g = resolvent_fields(ball, [x], t)[0]
    a, b, before = _edge_flips(traj)
    # a swap moves the particle from the occupied endpoint to the empty one
    sign = np.where(before == 1, 1.0, -1.0)
    dG = sign * (g[b] - g[a])
    occ0 = traj.initial.occ
    G0 = float(g @ (occ0 - p))
    G_path = G0 + np.concatenate([[0.0], np.cumsum(dG)])
    dx = np.zeros(len(a))
    dx[a == x] = np.where(before[a == x] == 1, -1.0, 1.0)
    dx[b == x] = np.where(before[b == x] == 1, 1.0, -1.0)
    eta_x = occ0[x] + np.concatenate([[0.0], np.cumsum(dx)])
    times = np.concatenate([[0.0], traj.times, [traj.horizon]])
    integrand = G_path / np.sqrt(t) - (eta_x - p)
    seg = np.diff(times) * integrand
    integral = np.concatenate([[0.0], np.cumsum(seg)])
    G_full = np.concatenate([G_path, [G_path[-1]]])
    M = G_full - G0 - integral
    return times, M


def martingale_parts(traj: Trajectory, x: int, t: float, p: float, g: np.ndarray | None = None):
    """Terminal (M_t, G(eta_0), G(eta_t), int_0^t G(eta_u) du)."""
    ball = traj.initial.ball
    if g is None:
        g = resolvent_fields(ball, [x], t)[0]
    times, M = martingale_diag(traj, x, t, p, g)
    a, b, before = _edge_flips(traj)
    sign = np.where(before == 1, 1.0, -1.0)
    G_path = float(g @ (traj.initial.occ - p)) + np.concatenate([[0.0], np.cumsum(sign * (g[b] - g[a]))])
    intG = float(np.sum(np.diff(times) * G_path))
    return float(M[-1]), float(G_path[0]), float(G_path[-1]), intG


def phi_diag(traj: Trajectory, x: int, w: int, t: float, p: float,
             gx: np.ndarray | None = None, gw: np.ndarray | None = None) -> float:
    """(1/t) int_0^t sum_y sum_{z~y} [(eta(z)-eta(y))^2 - 2p(1-p)] dg^x dg^w du."""
    ball = traj.initial.ball
    if gx is None or gw is None:
        fx, fw = resolvent_fields(ball, [x, w], t)
        gx = fx if gx is None else gx
        gw = fw if gw is None else gw
    e0, e1 = ball.edges[:, 0], ball.edges[:, 1]
    # ordered pairs count every edge twice
    weight = 2.0 * (gx[e0] - gx[e1]) * (gw[e0] - gw[e1])
    occ = traj.initial.occ.copy()
    total = _kernels.phi_integral(
        occ, e0, e1, ball.inc_ptr, ball.inc_edges, weight, 2 * p * (1 - p),
        traj.times, traj.edges, float(traj.horizon),
    )
    return float(total / t)
