"""Time-integrated kernels: Green integrals, resolvent fields and the covariance matrix."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg, stats

from .heatkernel import (
    CURVE_MARGIN,
    DEFAULT_TOL,
    TruncationError,
    _power_table,
    _round_up,
    poisson_cutoff,
    spectral_gap,
)
from .treegeo import VertexId, as_vertex, distance, sphere_size


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested accuracy."""


class _KernelCurve:
    """Fast scalar evaluation of s -> p_s(x, y), D(x, y) = k, for s in [0, s_max]."""

    def __init__(self, d: int, k: int, s_max: float, tol: float = DEFAULT_TOL):
        self.d, self.k = d, k
        self.lam = d + 1.0
        self.n_steps = poisson_cutoff(self.lam * s_max, tol / 2)
        K = min(_round_up(self.n_steps) + 1, k + CURVE_MARGIN)
        table = _power_table(d, K, "absorbing", _round_up(self.n_steps))
        self.col = np.array(table[: self.n_steps + 1, k]) / sphere_size(d, k)
        self._n = np.arange(self.n_steps + 1)
        # every path of n steps reaching distance k needs n >= k
        self.n_min = k

    def __call__(self, s: float) -> float:
        if s == 0:
            return 1.0 if self.k == 0 else 0.0
        mean = self.lam * s
        lo = max(self.n_min, int(mean - 12 * np.sqrt(mean) - 30))
        hi = min(self.n_steps, int(mean + 12 * np.sqrt(mean) + 40))
        if lo > hi:
            return 0.0
        n = self._n[lo: hi + 1]
        return float(stats.poisson.pmf(n, mean) @ self.col[lo: hi + 1])


def _quad(f, a, b, epsabs):
    """scipy.integrate.quad that raises instead of warning on nonconvergence."""
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(f, a, b, epsabs=epsabs, epsrel=1e-13, limit=400)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"quadrature on [{a}, {b}] failed: {exc}") from exc
    if err > 10 * epsabs:
        raise QuadratureError(f"quadrature on [{a}, {b}] reached error {err:.3e} > {epsabs:.1e}")
    return val, err


def _laplace_moment(d, k, rate, power, shift=0.0, tail_tol=1e-14):
    """int_0^inf s^power e^{-rate s} p_{s+shift}(x, y) ds, D(x, y) = k.

    The tail beyond T is bounded with p_s <= d^{-k/2} e^{-gap s}.  Returns the
    value together with the certified error (quadrature estimate + tail).
    """
    gap = spectral_gap(d)
    a = rate + gap
    pref = np.sqrt(d) ** (-k) * np.exp(-gap * shift)

    def tail(T):
        if power == 0:
            return pref * np.exp(-a * T) / a
        return pref * np.exp(-a * T) * (T / a + 1 / a**2)

    T = 10.0
    while tail(T) > tail_tol:
        T *= 1.25
    curve = _KernelCurve(d, k, T + shift)

    def f(s):
        return s**power * np.exp(-rate * s) * curve(s + shift)

    breaks = [0.0] + [b for b in (1.0, 4.0, 12.0, 30.0, 70.0) if b < T] + [T]
    total, err = 0.0, 0.0
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        v, e = _quad(f, lo, hi, epsabs=tail_tol)
        total += v
        err += e
    return total, err + tail(T)


# ---------------------------------------------------------------------------
# Green integrals and the covariance matrix
# ---------------------------------------------------------------------------


def green_closed_form(d: int, k: int) -> float:
    """d^(1-k) / (d^2 - 1); validated against green_integral in the tests."""
    return d ** (1 - k) / (d * d - 1.0)


def green_integral(d: int, k: int, with_error: bool = False):
    """int_0^inf p_s(x, y) ds for D(x, y) = k, by quadrature."""
    if d < 2 or k < 0:
        raise ValueError("need d >= 2 and k >= 0")
    val, err = _laplace_moment(d, k, rate=0.0, power=0)
    return (val, err) if with_error else val


@dataclass(frozen=True)
class GreenTable:
    d: int
    values: np.ndarray
    method: str

    def ratios(self) -> np.ndarray:
        return self.values[1:] / self.values[:-1]


def green_table(d: int, K: int, method: str = "quadrature") -> GreenTable:
    if method == "quadrature":
        vals = np.array([green_integral(d, k) for k in range(K + 1)])
    elif method == "closed-form":
        vals = np.array([green_closed_form(d, k) for k in range(K + 1)])
    else:
        raise ValueError(f"unknown method {method!r}")
    return GreenTable(d=d, values=vals, method=method)


def _check_density(p: float):
    if not 0 < p < 1:
        raise ValueError(f"density p must lie in (0, 1), got {p}")


def sigma_sq(d: int, p: float) -> float:
    _check_density(p)
    return 2 * p * (1 - p) * green_integral(d, 0)


@dataclass(frozen=True)
class GammaMatrix:
    points: tuple[VertexId, ...]
    entries: np.ndarray
    p: float
    d: int

    @property
    def m(self) -> int:
        return len(self.points)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.entries).min())


def gamma_matrix(d: int, p: float, points, method: str = "quadrature") -> GammaMatrix:
    _check_density(p)
    pts = tuple(as_vertex(v, d) for v in points)
    if not pts:
        raise ValueError("need at least one point")
    if len(set(pts)) != len(pts):
        raise ValueError("duplicate points make the covariance matrix singular")
    dist = np.array([[distance(a, b) for b in pts] for a in pts])
    table = green_table(d, int(dist.max()), method=method).values
    entries = 2 * p * (1 - p) * table[dist]
    return GammaMatrix(points=pts, entries=entries, p=p, d=d)


def finite_time_covariance(d: int, p: float, t: float, k: int = 0) -> float:
    """Cov(xi_t^x, xi_t^y) = 2p(1-p) int_0^t (t - s) p_s(x, y) ds for D(x, y) = k."""
    _check_density(p)
    curve = _KernelCurve(d, k, t)
    breaks = [b for b in (0.0, 1.0, 4.0, 12.0, 30.0, 70.0, 150.0) if b < t] + [t]
    total = 0.0
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        total += _quad(lambda s: (t - s) * curve(s), lo, hi, epsabs=1e-13 * max(t, 1.0))[0]
    return 2 * p * (1 - p) * total


def closed_ball_variance(d: int, p: float, t: float, R: int) -> float:
    """Var(xi_t) at the centre of a closed radius-R ball (exact radial chain)."""
    from .heatkernel import radial_distribution

    _check_density(p)

    def f(s):
        return (t - s) * radial_distribution(d, s, K_max=R, boundary="reflecting", tol=1e-13).dist[0]

    breaks = [b for b in (0.0, 1.0, 4.0, 12.0, 30.0, 70.0, 150.0) if b < t] + [t]
    total = sum(_quad(f, lo, hi, epsabs=1e-11)[0] for lo, hi in zip(breaks[:-1], breaks[1:]))
    return 2 * p * (1 - p) * total


# ---------------------------------------------------------------------------
# Resolvent fields
# ---------------------------------------------------------------------------


def decay_ratio(d: int, lam: float) -> float:
    """Per-vertex geometric decay r of the resolvent: d r^2 - (d+1+lam) r + 1 = 0."""
    b = d + 1.0 + lam
    return float((b - np.sqrt(b * b - 4 * d)) / (2 * d))


def sphere_sizes(d: int, K: int) -> np.ndarray:
    """Sphere sizes N_0..N_K as floats (inf once they overflow)."""
    with np.errstate(over="ignore"):
        k = np.arange(K + 1, dtype=float)
        sizes = (d + 1.0) * np.power(float(d), k - 1)
    sizes[0] = 1.0
    return sizes


@dataclass(frozen=True)
class ResolventField:
    """g_t^x(y) = int_0^inf e^{-s/sqrt t} p_s(x, y) ds as a function of D(x, y).

    ``mass[k]`` is the total over the sphere of radius k; ``values[k]`` is the
    per-vertex value (it underflows to 0 far out, the mass does not).
    """

    d: int
    t: float
    mass: np.ndarray
    center: VertexId = VertexId(())

    @property
    def lam(self) -> float:
        return 1.0 / np.sqrt(self.t)

    @property
    def K_max(self) -> int:
        return len(self.mass) - 1

    @property
    def values(self) -> np.ndarray:
        with np.errstate(under="ignore"):
            return self.mass / sphere_sizes(self.d, self.K_max)

    def total(self) -> float:
        return float(self.mass.sum())

    def at(self, k):
        """Per-vertex values at distances k (array-like); zero beyond K_max."""
        k = np.asarray(k)
        vals = self.values
        out = np.zeros(k.shape)
        ok = k <= self.K_max
        out[ok] = vals[k[ok]]
        return out

    def residual(self) -> np.ndarray:
        """Residual of (lam - Omega_1) g = delta_0, row k scaled by the sphere size N_k."""
        m = np.append(self.mass, 0.0)
        d, lam = self.d, self.lam
        res = np.empty(len(self.mass))
        res[0] = (lam + d + 1) * m[0] - m[1] - 1.0
        if len(res) > 1:
            res[1] = (lam + d + 1) * m[1] - (d + 1) * m[0] - m[2]
        k = np.arange(2, len(self.mass))
        res[2:] = (lam + d + 1) * m[k] - d * m[k - 1] - m[k + 1]
        return res


def _default_resolvent_kmax(d: int, t: float, tol: float) -> int:
    r = decay_ratio(d, 1.0 / np.sqrt(t))
    # sphere mass decays like (d r)^k
    return int(np.ceil(np.log(tol) / np.log(d * r))) + 10


def resolvent_field(d: int, t: float, K_max: int | None = None, tol: float = 1e-10) -> ResolventField:
    """Solve (lam - Omega_1) g = delta_x radially with g(K_max + 1) = 0.

    The unknowns are the sphere masses N_k g_k, which keeps the tridiagonal
    system well scaled at large radii.
    """
    if t <= 0:
        raise ValueError("t must be > 0")
    if K_max is None:
        K_max = _default_resolvent_kmax(d, t, tol)
    lam = 1.0 / np.sqrt(t)
    n = K_max + 1
    ab = np.zeros((3, n))
    ab[1, :] = lam + d + 1
    ab[0, 1:] = -1.0          # coefficient of m_{k+1}
    ab[2, :-1] = -float(d)    # coefficient of m_{k-1}
    if n > 1:
        ab[2, 0] = -(d + 1.0)  # row 1 sees m_0 with weight d+1
    rhs = np.zeros(n)
    rhs[0] = 1.0
    mass = linalg.solve_banded((1, 1), ab, rhs)
    field = ResolventField(d=d, t=float(t), mass=mass)
    boundary_mass = mass[-1] / np.sqrt(t)
    if boundary_mass > tol:
        raise TruncationError(
            f"resolvent boundary mass {boundary_mass:.2e} > tol {tol:.1e}; increase K_max (={K_max})"
        )
    if np.any(mass < 0):
        raise TruncationError("resolvent solve produced negative values")
    return field


def resolvent_quadrature(d: int, t: float, k: int) -> float:
    """Oracle for resolvent_field: direct Laplace-transform quadrature."""
    return _laplace_moment(d, k, rate=1.0 / np.sqrt(t), power=0)[0]


def field_on_ball(field: ResolventField, ball, center) -> np.ndarray:
    """Per-vertex values g_t^center(y) for every y in the ball."""
    return field.at(ball.distances_from(center))


# ---------------------------------------------------------------------------
# Gradient pair sum and the K-field L2 norm
# ---------------------------------------------------------------------------


def self_overlap(d: int, t: float, k: int = 0) -> float:
    """sum_y g_t^x(y) g_t^w(y) = int_0^inf r e^{-r/sqrt t} p_r(x, w) dr, D(x, w) = k."""
    return _laplace_moment(d, k, rate=1.0 / np.sqrt(t), power=1)[0]


def grad_pair_sum(d: int, t: float, k_xw: int, field: ResolventField | None = None) -> float:
    """sum_y sum_{z~y} (g^x(y) - g^x(z)) (g^w(y) - g^w(z)) for D(x, w) = k_xw.

    Summation by parts gives 2 g^x(w) - (2/sqrt t) sum_y g^x(y) g^w(y); the
    overlap term is a Laplace moment of p_r(x, w).
    """
    if t <= 0:
        raise ValueError("t must be > 0")
    if field is None:
        field = resolvent_field(d, t)
    return float(2 * field.at(k_xw) - 2 / np.sqrt(t) * self_overlap(d, t, k_xw))


def grad_pair_sum_radial(field: ResolventField) -> float:
    """Direct edge sum for x = w: 2 sum_k N_{k+1} (g_k - g_{k+1})^2."""
    d, m = field.d, np.append(field.mass, 0.0)
    sizes = sphere_sizes(d, field.K_max + 1)
    # N_{k+1} (g_k - g_{k+1})^2 = (m_k sqrt(N_{k+1}) / N_k - m_{k+1} / sqrt(N_{k+1}))^2
    with np.errstate(under="ignore", invalid="ignore"):
        root = np.sqrt(sizes[1:])
        terms = (m[:-1] * root / sizes[:-1] - m[1:] / root) ** 2
    return float(2 * np.nansum(terms))


def k_field_l2(d: int, t: float, u: float) -> float:
    """E|K_t^x(u)|^2 / (p(1-p)) = int_0^inf r e^{-r/sqrt t} p_{r+2u}(x, x) dr."""
    if t <= 0 or u < 0:
        raise ValueError("need t > 0 and u >= 0")
    return _laplace_moment(d, 0, rate=1.0 / np.sqrt(t), power=1, shift=2 * u)[0]


def k_field_bound(d: int, t: float, u: float) -> float:
    """Heat-bound majorant e^{-2u gap} / (1/sqrt t + gap)^2 of k_field_l2."""
    gap = spectral_gap(d)
    return float(np.exp(-2 * u * gap) / (1 / np.sqrt(t) + gap) ** 2)
