"""Duality oracles: one-point expectations through the single walk, two-point
expectations through the exclusion pair walk, and three-way consistency checks.

Kernels come in two flavours.  ``closed=True`` uses the walk on the closed
ball graph, which is the exact dual of the closed-ball exclusion process that
the simulator runs.  ``closed=False`` uses the walk on the infinite tree with
mass leaving the ball counted as leak.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse, stats

from .heatkernel import TruncationError, ball_kernel_row, poisson_cutoff, radial_distribution
from .ssep import Configuration, expectation_exact, run, sample_initial
from .treegeo import Ball, build_ball
from .rng import replica_sequence, split

DUAL_TOL = 1e-10


@dataclass(frozen=True)
class PairState:
    y: int
    w: int

    def __post_init__(self):
        if self.y == self.w:
            raise ValueError("pair walkers never share a vertex")

    def swapped(self) -> PairState:
        return PairState(self.w, self.y)


@dataclass(frozen=True)
class PairKernelRow:
    source: PairState
    t: float
    probs: dict
    leak: float

    def total(self) -> float:
        return float(sum(self.probs.values()))


# ---------------------------------------------------------------------------
# one point
# ---------------------------------------------------------------------------


def one_point_kernel(ball: Ball, x: int, t: float, closed: bool = True, tol: float = DUAL_TOL):
    """(row of p_t(x, .) over the ball, leak)."""
    if closed:
        return np.clip(ball_kernel_row(ball, t, x), 0.0, None), 0.0
    if x != 0:
        # off-centre rows: distances from x within the ball
        dist = ball.distances_from(ball.vertices[x])
    else:
        dist = ball.depth
    rk = radial_distribution(ball.d, t, tol=min(tol, 1e-12))
    per_vertex = rk.per_vertex()
    row = np.where(dist <= rk.K_max, per_vertex[np.minimum(dist, rk.K_max)], 0.0)
    leak = max(0.0, 1.0 - row.sum()) + rk.leak
    return row, float(leak)


def one_point_expectation(eta: Configuration, x: int, t: float, closed: bool = True,
                          tol: float = DUAL_TOL, with_leak: bool = False):
    """sum_z p_t(x, z) eta(z); equals E_eta eta_t(x)."""
    if t == 0:
        val, leak = float(eta.occ[x]), 0.0
    else:
        row, leak = one_point_kernel(eta.ball, x, t, closed, tol)
        if leak > tol and not with_leak:
            raise TruncationError(f"one-point kernel leaks {leak:.2e} outside the ball (tol {tol:.1e})")
        val = float(row @ eta.occ)
    return (val, leak) if with_leak else val


# ---------------------------------------------------------------------------
# pair walk
# ---------------------------------------------------------------------------


def pair_rate_matrix(ball: Ball, closed: bool = True):
    """Sparse rates Q on ordered pairs (index y*n + w); one extra cemetery state
    collects walkers stepping out of an open ball."""
    n = ball.n_vertices
    nbrs = [ball.neighbor_indices(i) for i in range(n)]
    ext = (ball.d + 1) - ball.degree()
    cemetery = n * n
    rows, cols, vals = [], [], []
    for y in range(n):
        ny = nbrs[y]
        for w in range(n):
            if w == y:
                continue
            s = y * n + w
            adjacent = w in ny
            for y2 in ny:
                if y2 != w:
                    rows.append(s); cols.append(y2 * n + w); vals.append(1.0)
            for w2 in nbrs[w]:
                if w2 != y:
                    rows.append(s); cols.append(y * n + w2); vals.append(1.0)
            if adjacent:
                rows.append(s); cols.append(w * n + y); vals.append(1.0)
            if not closed:
                out = ext[y] + ext[w]
                if out:
                    rows.append(s); cols.append(cemetery); vals.append(float(out))
    size = n * n + 1
    Q = sparse.coo_matrix((vals, (rows, cols)), shape=(size, size)).tocsr()
    Q = Q - sparse.diags(np.asarray(Q.sum(axis=1)).ravel())
    return Q.tocsr()


def pair_kernel(source: PairState, t: float, ball: Ball, closed: bool = True,
                tol: float = DUAL_TOL, max_states: int = 250_000) -> PairKernelRow:
    """Row q_t(source, .) by uniformization with constant 2(d+1)."""
    n = ball.n_vertices
    if n * n > max_states:
        raise ValueError(f"pair space {n * n} exceeds cap {max_states}")
    Q = pair_rate_matrix(ball, closed)
    lam = 2.0 * (ball.d + 1)
    P = (sparse.identity(Q.shape[0], format="csr") + Q / lam).T.tocsr()
    v = np.zeros(Q.shape[0])
    v[source.y * n + source.w] = 1.0
    n_steps = poisson_cutoff(lam * t, tol / 2)
    weights = stats.poisson.pmf(np.arange(n_steps + 1), lam * t)
    acc = weights[0] * v
    for k in range(1, n_steps + 1):
        v = P @ v
        acc += weights[k] * v
    tail = float(stats.poisson.sf(n_steps, lam * t))
    exits = float(acc[-1])
    probs = {}
    for idx in np.flatnonzero(acc[:-1] > 0):
        probs[PairState(int(idx // n), int(idx % n))] = float(acc[idx])
    return PairKernelRow(source=source, t=float(t), probs=probs, leak=tail + exits)


def _h2_table(h2) -> np.ndarray:
    if callable(h2):
        return np.array([[h2(a, b) for b in (0, 1)] for a in (0, 1)], dtype=float)
    table = np.asarray(h2, dtype=float)
    if table.shape != (2, 2):
        raise ValueError("h2 must be callable or a 2x2 table")
    return table


def two_point_expectation(eta: Configuration, x: int, y: int, t: float, h2,
                          closed: bool = True, tol: float = DUAL_TOL, row: PairKernelRow | None = None):
    """sum over pairs of q_t((x, y), (z, w)) h2(eta(z), eta(w))."""
    table = _h2_table(h2)
    if x == y:
        raise ValueError("two-point duality needs x != y")
    if t == 0:
        return float(table[eta.occ[x], eta.occ[y]])
    if row is None:
        row = pair_kernel(PairState(x, y), t, eta.ball, closed, tol)
    if row.leak > tol and closed:
        raise TruncationError(f"pair kernel leak {row.leak:.2e} above tol {tol:.1e}")
    occ = eta.occ
    return float(sum(q * table[occ[s.y], occ[s.w]] for s, q in row.probs.items()))


# ---------------------------------------------------------------------------
# three-way verification
# ---------------------------------------------------------------------------


@dataclass
class DualityCase:
    test: str
    method_values: dict
    tolerances: dict
    passed: bool
    standard_error: float | None = None

    def as_dict(self) -> dict:
        return {
            "test": self.test,
            "method_values": self.method_values,
            "tolerances": self.tolerances,
            "standard_error": self.standard_error,
            "pass": bool(self.passed),
        }


def _mc_final_values(eta: Configuration, t: float, fn, replicas: int, seed: int) -> np.ndarray:
    out = np.empty(replicas)
    for r in range(replicas):
        _, dyn = split(replica_sequence(seed, r))
        traj, _ = run(eta, t, [], dyn, p=0.5, record=True)
        out[r] = fn(traj.final.occ)
    return out


def verify_duality(d: int = 2, R: int = 2, t: float = 0.5, replicas: int = 10_000, seed: int = 12345,
                   oracle_tol: float = 1e-8, n_se: float = 3.0, x: int = 0, y: int | None = None,
                   eta_seed: int = 7) -> list[DualityCase]:
    """Simulator vs duality oracle vs exact generator exponential on a small closed ball."""
    ball = build_ball(d, R)
    y = int(ball.neighbor_indices(x)[0]) if y is None else y
    rng = np.random.default_rng(eta_seed)
    # a fixed, non-trivial starting configuration
    while True:
        eta = sample_initial(ball, 0.5, rng)
        if 0 < eta.count < ball.n_vertices and eta.occ[x] != eta.occ[y]:
            break
    cases = []
    tols = {"oracle_vs_exact": oracle_tol, "mc_vs_exact_se": n_se}

    def case(name, oracle, exact_fn, mc_fn):
        exact = expectation_exact(exact_fn, eta, t)
        samples = _mc_final_values(eta, t, mc_fn, replicas, seed) if replicas else np.array([exact])
        mc = float(samples.mean())
        se = float(samples.std(ddof=1) / np.sqrt(len(samples))) if len(samples) > 1 else 0.0
        ok_oracle = abs(oracle - exact) <= oracle_tol
        ok_mc = abs(mc - exact) <= n_se * se if se > 0 else abs(mc - exact) <= oracle_tol
        cases.append(DualityCase(name, {"monte_carlo": mc, "duality": oracle, "exact": exact},
                                 tols, ok_oracle and ok_mc, se))

    case("one-point",
         one_point_expectation(eta, x, t),
         lambda c: float(c.occ[x]),
         lambda occ: float(occ[x]))
    prod = np.array([[0.0, 0.0], [0.0, 1.0]])
    case("two-point",
         two_point_expectation(eta, x, y, t, prod),
         lambda c: float(c.occ[x] * c.occ[y]),
         lambda occ: float(occ[x] * occ[y]))
    const = np.full((2, 2), 2.5)
    case("two-point-constant",
         two_point_expectation(eta, x, y, t, const),
         lambda c: 2.5,
         lambda occ: 2.5)
    return cases
