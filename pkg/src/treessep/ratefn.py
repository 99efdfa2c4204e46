"""Quadratic moderate-deviation rate function and the tilt that targets a mean."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .potential import GammaMatrix

RANGE_TOL = 1e-8


class InfeasibleTargetError(ValueError):
    """The target vector is not in the range of the covariance matrix."""


@dataclass(frozen=True)
class ScalingSchedule:
    """a_t = t**alpha with 1/2 < alpha < 1, so a_t/t -> 0 and sqrt(t)/a_t -> 0."""

    alpha: float = 0.75

    def __post_init__(self):
        if not 0.5 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (1/2, 1), got {self.alpha}")

    def __call__(self, t: float) -> float:
        return float(t) ** self.alpha

    def speed(self, t: float) -> float:
        """a_t^2 / t, the large-deviation speed."""
        return self(t) ** 2 / t


@dataclass(frozen=True)
class RateQuery:
    u: np.ndarray
    gamma: np.ndarray
    result: float
    tilt: np.ndarray | None


def _as_matrix(gamma) -> np.ndarray:
    g = gamma.entries if isinstance(gamma, GammaMatrix) else np.asarray(gamma, dtype=float)
    g = np.atleast_2d(g)
    if g.shape[0] != g.shape[1]:
        raise ValueError(f"covariance matrix must be square, got {g.shape}")
    return g


def _solve(u: np.ndarray, g: np.ndarray):
    if u.shape != (g.shape[0],):
        raise ValueError(f"u has shape {u.shape}, expected ({g.shape[0]},)")
    phi = np.linalg.pinv(g, rcond=1e-13) @ u
    resid = np.linalg.norm(g @ phi - u)
    return phi, resid


def rate_function(u, gamma) -> RateQuery:
    """sup_c { c.u - c^T Gamma c / 2 }, +inf off the range of Gamma."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    g = _as_matrix(gamma)
    phi, resid = _solve(u, g)
    if resid > RANGE_TOL * max(np.linalg.norm(u), 1e-300) and np.linalg.norm(u) > 0:
        return RateQuery(u=u, gamma=g, result=float("inf"), tilt=None)
    return RateQuery(u=u, gamma=g, result=float(0.5 * phi @ g @ phi), tilt=phi)


def rate_1d(u: float, sigma2: float) -> float:
    if sigma2 <= 0:
        raise ValueError(f"sigma^2 must be positive, got {sigma2}")
    return float(u) ** 2 / (2 * sigma2)


def tilt_for_target(u, gamma) -> np.ndarray:
    """Minimal-norm phi with Gamma phi = u."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    g = _as_matrix(gamma)
    phi, resid = _solve(u, g)
    if resid > RANGE_TOL * max(np.linalg.norm(u), 1e-300) and np.linalg.norm(u) > 0:
        raise InfeasibleTargetError(f"target {u} is outside the range of Gamma (residual {resid:.2e})")
    return phi


def half_space_rate(b, level: float, gamma) -> tuple[float, np.ndarray]:
    """inf of the rate over {u : b.u >= level} and its minimiser, for level > 0.

    The minimiser is u* = level Gamma b / (b^T Gamma b) with value
    level^2 / (2 b^T Gamma b).
    """
    b = np.atleast_1d(np.asarray(b, dtype=float))
    g = _as_matrix(gamma)
    q = float(b @ g @ b)
    if level <= 0:
        return 0.0, np.zeros_like(b)
    if q <= 0:
        return float("inf"), np.full_like(b, np.nan)
    return level**2 / (2 * q), level * (g @ b) / q
