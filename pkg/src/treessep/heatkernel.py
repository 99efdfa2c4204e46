"""Transition probabilities of the rate-1-per-edge random walk on the tree.

Everything is reduced to the distance chain D(V_t, x): from 0 it moves to 1 at
rate d+1, from k >= 1 it moves out at rate d and in at rate 1.  Probabilities
are obtained by uniformization, so the Poisson truncation error is known
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import stats

from .treegeo import Ball, sphere_size

DEFAULT_TOL = 1e-12
# mass beyond k + CURVE_MARGIN returns to distance k with probability < d^-CURVE_MARGIN
CURVE_MARGIN = 80


class TruncationError(RuntimeError):
    """The requested accuracy cannot be certified with the given truncation."""


@dataclass(frozen=True)
class RadialChain:
    """Distance-from-start chain on states 0..K_max.

    ``boundary="absorbing"`` parks mass reaching K_max (leak accounting on the
    infinite tree).  ``boundary="reflecting"`` is the exact chain for a walker
    started at the centre of a closed radius-K_max ball, whose boundary
    vertices only have their parent as neighbour.
    """

    d: int
    K_max: int
    boundary: str = "absorbing"

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("d must be >= 2")
        if self.K_max < 1:
            raise ValueError("K_max must be >= 1")
        if self.boundary not in ("absorbing", "reflecting"):
            raise ValueError(f"unknown boundary {self.boundary!r}")

    @property
    def uniform_rate(self) -> float:
        return float(self.d + 1)

    def generator(self) -> np.ndarray:
        d, K = self.d, self.K_max
        Q = np.zeros((K + 1, K + 1))
        Q[0, 1] = d + 1
        for k in range(1, K):
            Q[k, k + 1] = d
            Q[k, k - 1] = 1
        if self.boundary == "reflecting":
            Q[K, K - 1] = 1
        np.fill_diagonal(Q, -Q.sum(axis=1))
        return Q


@lru_cache(maxsize=32)
def _power_table(d: int, K_max: int, boundary: str, n_steps: int) -> np.ndarray:
    """Rows v_n = e_0 P^n of the uniformized distance chain, n = 0..n_steps."""
    lam = d + 1.0
    up, down = d / lam, 1.0 / lam
    K = K_max
    table = np.zeros((n_steps + 1, K + 1))
    v = np.zeros(K + 1)
    v[0] = 1.0
    table[0] = v
    for n in range(1, n_steps + 1):
        w = np.zeros_like(v)
        w[1] += v[0]  # origin always steps out
        w[2:K] += up * v[1:K - 1]
        w[0:K - 1] += down * v[1:K]
        if boundary == "absorbing":
            w[K] += up * v[K - 1] + v[K]
        else:
            w[K] += up * v[K - 1] + up * v[K]
            w[K - 1] += down * v[K]
        v = w
        table[n] = v
    table.setflags(write=False)
    return table


def poisson_cutoff(mean: float, tol: float) -> int:
    """Smallest N with P(Poisson(mean) > N) <= tol."""
    if mean == 0:
        return 0
    n = int(stats.poisson.isf(tol, mean))
    while stats.poisson.sf(n, mean) > tol:
        n += 1
    while n > 0 and stats.poisson.sf(n - 1, mean) <= tol:
        n -= 1
    return n


def _round_up(n: int, block: int = 128) -> int:
    return block * ((n + block) // block)


@dataclass(frozen=True)
class RadialKernel:
    """Law of the distance from the start at time t.

    ``dist[k]`` is a lower bound for P(D = k) whose total deficit is at most
    ``leak`` (Poisson tail plus mass parked at an absorbing K_max).
    """

    d: int
    t: float
    dist: np.ndarray
    leak: float
    poisson_tail: float
    spatial_leak: float

    @property
    def K_max(self) -> int:
        return len(self.dist) - 1

    def per_vertex(self) -> np.ndarray:
        sizes = np.array([sphere_size(self.d, k) for k in range(len(self.dist))], dtype=float)
        return self.dist / sizes


def radial_distribution(
    d: int,
    t: float,
    K_max: int | None = None,
    tol: float = DEFAULT_TOL,
    boundary: str = "absorbing",
) -> RadialKernel:
    if t < 0:
        raise ValueError("t must be >= 0")
    if tol <= 0:
        raise ValueError("tol must be > 0")
    mean = (d + 1.0) * t
    n_steps = poisson_cutoff(mean, tol / 2)
    if K_max is None:
        if boundary != "absorbing":
            raise ValueError("a reflecting chain needs an explicit radius")
        # n_steps jumps cannot reach distance n_steps + 1
        K_max = n_steps + 1
    table = _power_table(d, K_max, boundary, _round_up(n_steps))[: n_steps + 1]
    weights = stats.poisson.pmf(np.arange(n_steps + 1), mean)
    dist = weights @ table
    tail = float(stats.poisson.sf(n_steps, mean))
    spatial = 0.0
    if boundary == "absorbing":
        spatial = float(dist[K_max])
        dist = dist.copy()
        dist[K_max] = 0.0
    leak = tail + spatial
    if leak > tol:
        raise TruncationError(
            f"K_max={K_max} leaks {leak:.3e} > tol={tol:.1e} at d={d}, t={t}"
        )
    return RadialKernel(d=d, t=float(t), dist=dist, leak=leak, poisson_tail=tail, spatial_leak=spatial)


def heat_kernel(d: int, t: float, k: int, tol: float = DEFAULT_TOL) -> float:
    """p_t(x, y) for D(x, y) = k, with absolute error at most tol."""
    if k < 0:
        raise ValueError("k must be >= 0")
    rk = radial_distribution(d, t, tol=tol)
    if k > rk.K_max:
        return 0.0
    return float(rk.dist[k] / sphere_size(d, k))


def heat_kernel_curve(d: int, ts, k: int, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Vectorised heat_kernel over an array of times (shared power table)."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    if np.any(ts < 0):
        raise ValueError("times must be >= 0")
    lam = d + 1.0
    n_steps = poisson_cutoff(lam * float(ts.max()), tol / 2)
    K = min(_round_up(n_steps) + 1, k + CURVE_MARGIN)
    table = _power_table(d, K, "absorbing", _round_up(n_steps))
    col = table[: n_steps + 1, k] if k < table.shape[1] else np.zeros(n_steps + 1)
    n = np.arange(n_steps + 1)
    out = np.empty(len(ts))
    for i, t in enumerate(ts):
        out[i] = stats.poisson.pmf(n, lam * t) @ col
    return out / sphere_size(d, k)


def heat_bound(d: int, t: float, k: int) -> float:
    """Upper bound d^(-k/2) exp(-t (sqrt(d) - 1)^2) on p_t(x, y)."""
    if t < 0 or k < 0:
        raise ValueError("t and k must be >= 0")
    return float(np.sqrt(d) ** (-k) * np.exp(-t * (np.sqrt(d) - 1.0) ** 2))


def spectral_gap(d: int) -> float:
    """Exponential decay rate (sqrt(d) - 1)^2 appearing in heat_bound."""
    return float((np.sqrt(d) - 1.0) ** 2)


def beta_mgf(d: int, t: float, theta: float) -> float:
    """E exp(-theta * beta(V_t)) where beta moves +1 at rate d, -1 at rate 1."""
    return float(np.exp(t * (d * (np.exp(-theta) - 1.0) + (np.exp(theta) - 1.0))))


def beta_mgf_uniformized(d: int, t: float, theta: float, tol: float = 1e-14) -> float:
    """Same quantity from the propagated law of the beta chain on a lattice.

    The number of uniformized steps is cut at N with the tilted Poisson tail
    below tol relative to the answer.
    """
    lam = d + 1.0
    tilt = (d * np.exp(-theta) + np.exp(theta)) / lam
    # E[m^n; n > N] = exp(lam t (m-1)) P(Poisson(lam t m) > N)
    n_steps = poisson_cutoff(lam * t * tilt, tol)
    up, down = d / lam, 1.0 / lam
    size = 2 * n_steps + 1
    v = np.zeros(size)
    v[n_steps] = 1.0
    values = np.arange(-n_steps, n_steps + 1)
    factor = np.exp(-theta * values)
    weights = stats.poisson.pmf(np.arange(n_steps + 1), lam * t)
    total = weights[0] * (v @ factor)
    for n in range(1, n_steps + 1):
        w = np.zeros_like(v)
        w[1:] += up * v[:-1]
        w[:-1] += down * v[1:]
        v = w
        total += weights[n] * (v @ factor)
    return float(total)


def ball_laplacian(ball: Ball):
    """Generator of the rate-1-per-edge walk on the closed ball (sparse)."""
    from scipy.sparse import diags

    A = ball.adjacency_matrix()
    return (A - diags(np.asarray(A.sum(axis=1)).ravel())).tocsr()


def ball_kernel_row(ball: Ball, t: float, source: int) -> np.ndarray:
    """Row p^ball_t(source, .) of the closed-ball walk, by matrix exponential."""
    from scipy.sparse.linalg import expm_multiply

    e = np.zeros(ball.n_vertices)
    e[source] = 1.0
    if t == 0:
        return e
    L = ball_laplacian(ball)
    # L is symmetric, so the row equals the column
    return expm_multiply(L * t, e)


def ball_kernel(ball: Ball, t: float) -> np.ndarray:
    """Dense closed-ball transition matrix; small balls only."""
    from scipy.linalg import expm

    if ball.n_vertices > 4096:
        raise ValueError("dense ball kernel limited to 4096 vertices")
    return expm(ball_laplacian(ball).toarray() * t)
