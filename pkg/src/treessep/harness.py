"""Monte Carlo orchestration: experiment configs, replica fan-out and estimators.

Every replica r draws its streams from SeedSequence([seed, r]), so results do
not depend on the number of workers or on scheduling order.  Reductions run
over arrays stacked in replica order.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import stats

from .potential import (
    closed_ball_variance,
    finite_time_covariance,
    gamma_matrix,
    resolvent_field,
    sigma_sq,
)
from .ratefn import ScalingSchedule, half_space_rate, rate_1d, tilt_for_target
from .rng import replica_sequence
from .ssep import replica, resolvent_fields, run, tilted_run
from .treegeo import Ball, ResourceError, VertexId, as_vertex, ball_size, build_ball, distance

TOLERANCE_PROFILES = {
    # exploratory budgets
    "ci": {
        "ci_level": 0.95,
        "n_se": 3.0,
        "radius_tol": 5e-3,
        "radius_check_fraction": 0.2,
        "radius_check_step": 2,
        "gamma_rel_tol": 0.25,
        "tilt_rel_tol": 0.15,
        "tail_rel_tol": 0.30,
        "half_space_rel_tol": 0.35,
        "ess_min": 50.0,
        "skew_tol": 0.1,
        "kurtosis_tol": 0.2,
    },
    "strict": {
        "ci_level": 0.99,
        "n_se": 3.0,
        "radius_tol": 1e-3,
        "radius_check_fraction": 0.5,
        "radius_check_step": 2,
        "gamma_rel_tol": 0.25,
        "tilt_rel_tol": 0.15,
        "tail_rel_tol": 0.30,
        "half_space_rel_tol": 0.35,
        "ess_min": 200.0,
        "skew_tol": 0.1,
        "kurtosis_tol": 0.2,
    },
}

MAX_AUTO_VERTICES = 200_000


class ValidationError(ValueError):
    """An experiment configuration that cannot be run."""


# ---------------------------------------------------------------------------
# vertex words as text
# ---------------------------------------------------------------------------


def word_str(v) -> str:
    """'/' for the origin, '/0/1' for the word (0, 1)."""
    return "/" + "/".join(str(a) for a in as_vertex(v).word)


def parse_word(text) -> VertexId:
    if isinstance(text, VertexId):
        return text
    if isinstance(text, str):
        parts = [s for s in text.strip().split("/") if s != ""]
        try:
            return VertexId(tuple(int(s) for s in parts))
        except ValueError as exc:
            raise ValidationError(f"malformed vertex word {text!r}") from exc
    return as_vertex(text)


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    d: int = 2
    p: float = 0.5
    targets: tuple = (VertexId(()),)
    t: float = 10.0
    replicas: int = 1000
    seed: int = 0
    alpha: float = 0.75
    tilt: tuple | None = None
    u: tuple | None = None
    radius: int | str = "auto"
    radius_check: bool = True
    out: str | None = None
    events_out: str | None = None
    tolerance_profile: str = "ci"
    bootstrap: int = 0

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        try:
            set_("d", int(self.d))
            set_("p", float(self.p))
            set_("t", float(self.t))
            set_("replicas", int(self.replicas))
            set_("seed", int(self.seed))
            set_("alpha", float(self.alpha))
            set_("bootstrap", int(self.bootstrap))
            targets = self.targets
            if isinstance(targets, (str, VertexId)):
                targets = [targets]
            set_("targets", tuple(parse_word(v) for v in targets))
            if self.tilt is not None:
                set_("tilt", tuple(float(c) for c in np.atleast_1d(self.tilt)))
            if self.u is not None:
                set_("u", tuple(float(c) for c in np.atleast_1d(self.u)))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(str(exc)) from exc
        self.validate()

    def validate(self):
        if self.d < 2:
            raise ValidationError(f"d must be >= 2, got {self.d}")
        if not 0 < self.p < 1:
            raise ValidationError(f"p must lie in (0, 1), got {self.p}")
        if not 0.5 < self.alpha < 1:
            raise ValidationError(f"alpha must lie in (1/2, 1), got {self.alpha}")
        if self.replicas < 2:
            raise ValidationError("need at least 2 replicas to estimate a variance")
        if not self.t > 0:
            raise ValidationError(f"t must be > 0, got {self.t}")
        if not self.targets:
            raise ValidationError("need at least one target")
        if len(set(self.targets)) != len(self.targets):
            raise ValidationError("targets must be distinct")
        for v in self.targets:
            try:
                v.validate(self.d)
            except ValueError as exc:
                raise ValidationError(str(exc)) from exc
        m = len(self.targets)
        for name in ("tilt", "u"):
            val = getattr(self, name)
            if val is not None and len(val) != m:
                raise ValidationError(f"{name} has {len(val)} entries for {m} targets")
        if self.radius != "auto" and (not isinstance(self.radius, int) or self.radius < 1):
            raise ValidationError(f"radius must be 'auto' or a positive integer, got {self.radius!r}")
        if self.tolerance_profile not in TOLERANCE_PROFILES:
            raise ValidationError(f"unknown tolerance profile {self.tolerance_profile!r}")
        if self.bootstrap < 0:
            raise ValidationError("bootstrap must be >= 0")

    @property
    def tolerances(self) -> dict:
        return TOLERANCE_PROFILES[self.tolerance_profile]

    @property
    def schedule(self) -> ScalingSchedule:
        return ScalingSchedule(self.alpha)

    @classmethod
    def from_mapping(cls, data: dict) -> ExperimentConfig:
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        if isinstance(data.get("radius"), str) and data["radius"] != "auto":
            try:
                data["radius"] = int(data["radius"])
            except ValueError as exc:
                raise ValidationError(f"bad radius {data['radius']!r}") from exc
        return cls(**data)

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> ExperimentConfig:
        return cls.from_mapping({**load_config_file(path), **(overrides or {})})

    def with_overrides(self, **kw) -> ExperimentConfig:
        return replace(self, **kw)

    def as_dict(self) -> dict:
        out = asdict(self)
        out["targets"] = [word_str(v) for v in self.targets]
        for k in ("tilt", "u"):
            if out[k] is not None:
                out[k] = list(out[k])
        return out


def load_config_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(text)
        else:
            import tomli

            data = tomli.loads(text)
    except Exception as exc:  # noqa: BLE001 - any parser error is a config error
        raise ValidationError(f"malformed config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError("config must be a key-value mapping")
    return data


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass
class EstimateReport:
    name: str
    estimate: float
    se: float
    n: int
    ci_level: float = 0.95
    target: float | None = None
    passed: bool | None = None

    @property
    def z(self) -> float:
        return float(stats.norm.ppf(0.5 + self.ci_level / 2))

    @property
    def ci(self) -> tuple[float, float]:
        return self.estimate - self.z * self.se, self.estimate + self.z * self.se

    def as_dict(self) -> dict:
        lo, hi = self.ci
        return {
            "name": self.name,
            "estimate": self.estimate,
            "se": self.se,
            "n": self.n,
            "ci_level": self.ci_level,
            "ci": [lo, hi],
            "target": self.target,
            "pass": self.passed,
        }


@dataclass
class ExperimentResult:
    kind: str
    config: ExperimentConfig
    reports: dict[str, EstimateReport] = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    def add(self, report: EstimateReport):
        self.reports[report.name] = report

    @property
    def passed(self) -> bool:
        return all(r.passed is not False for r in self.reports.values())

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "config": self.config.as_dict(),
            "reports": [r.as_dict() for r in self.reports.values()],
            "info": self.info,
            "pass": self.passed,
        }


def within_se(est: float, se: float, target: float, n_se: float) -> bool:
    return bool(abs(est - target) <= n_se * se)


def within_rel(est: float, target: float, rel: float) -> bool:
    return bool(abs(est - target) <= rel * abs(target))


def mean_report(name, x, ci_level, target=None, passed=None) -> EstimateReport:
    x = np.asarray(x, dtype=float)
    return EstimateReport(name, float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x))), len(x),
                          ci_level, target, passed)


def cov_estimate(x, y) -> tuple[float, float]:
    """Sample covariance and its SE from the centred products."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    z = (x - x.mean()) * (y - y.mean())
    return float(z.sum() / (n - 1)), float(z.std(ddof=1) / math.sqrt(n))


# ---------------------------------------------------------------------------
# radius policy and replica fan-out
# ---------------------------------------------------------------------------


def radius_policy(d: int, p: float, t: float, tol: float, max_vertices: int = MAX_AUTO_VERTICES) -> int:
    """Smallest R whose closed-ball centre variance is within ``tol`` (relative)
    of the infinite-tree value at time t."""
    exact = finite_time_covariance(d, p, t, 0)
    R = 2
    while True:
        if ball_size(d, R) > max_vertices:
            raise ResourceError(
                f"no radius with at most {max_vertices} vertices reaches relative error {tol:.1e} at t={t}"
            )
        if abs(closed_ball_variance(d, p, t, R) - exact) <= tol * exact:
            return R
        R += 1


def truncation_error(d: int, p: float, t: float, R: int) -> float:
    exact = finite_time_covariance(d, p, t, 0)
    return float(abs(closed_ball_variance(d, p, t, R) - exact) / exact)


def resolve_radius(cfg: ExperimentConfig) -> int:
    depth = max(v.depth for v in cfg.targets)
    if cfg.radius == "auto":
        R = radius_policy(cfg.d, cfg.p, cfg.t, cfg.tolerances["radius_tol"]) + depth
    else:
        R = int(cfg.radius)
    if R < depth:
        raise ValidationError(f"radius {R} does not contain every target")
    return R


def n_workers() -> int:
    env = os.environ.get("TREESSEP_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise ValidationError(f"TREESSEP_THREADS must be an integer, got {env!r}") from exc
        return max(1, n)
    return max(1, os.cpu_count() or 1)


def map_replicas(fn: Callable[[int], np.ndarray], n: int, workers: int | None = None) -> np.ndarray:
    """Stack fn(r) for r = 0..n-1 in replica order."""
    workers = n_workers() if workers is None else workers
    if workers <= 1 or n < 2:
        rows = [fn(r) for r in range(n)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(fn, range(n)))
    return np.array(rows)


def _target_indices(ball: Ball, cfg: ExperimentConfig) -> list[int]:
    return [ball.index(v) for v in cfg.targets]


def sample_xi(cfg: ExperimentConfig, ball: Ball, n: int | None = None, seed: int | None = None) -> np.ndarray:
    """(n, m) array of centred occupation times under the stationary start."""
    idx = _target_indices(ball, cfg)
    n = cfg.replicas if n is None else n
    seed = cfg.seed if seed is None else seed

    def one(r):
        eta, dyn = replica(ball, cfg.p, replica_sequence(seed, r))
        return run(eta, cfg.t, idx, dyn, record=False)[1].xi

    return map_replicas(one, n)


def sample_tilted(cfg: ExperimentConfig, ball: Ball, c, n: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """(xi rows, log Xi) under the tilted dynamics."""
    idx = _target_indices(ball, cfg)
    n = cfg.replicas if n is None else n
    fields_ = resolvent_fields(ball, idx, cfg.t, resolvent_field(cfg.d, cfg.t))
    schedule = cfg.schedule

    def one(r):
        eta, dyn = replica(ball, cfg.p, replica_sequence(cfg.seed, r))
        led = tilted_run(eta, cfg.t, idx, c, schedule, dyn, fields=fields_, record=False)[1]
        return np.append(led.xi, led.log_weight)

    out = map_replicas(one, n)
    return out[:, :-1], out[:, -1]


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def _pair_distance(cfg, i, j) -> int:
    return distance(cfg.targets[i], cfg.targets[j])


def _radius_check(cfg: ExperimentConfig, R: int, var_t: np.ndarray, var_se: np.ndarray,
                  result: ExperimentResult):
    tol = cfg.tolerances
    R2 = R + tol["radius_check_step"]
    n2 = max(2, int(round(tol["radius_check_fraction"] * cfg.replicas)))
    ball2 = build_ball(cfg.d, R2)
    xi2 = sample_xi(cfg, ball2, n=n2, seed=cfg.seed + 1_000_003)
    z = stats.norm.ppf(0.5 + tol["ci_level"] / 2)
    for j, v in enumerate(cfg.targets):
        v2, se2 = cov_estimate(xi2[:, j], xi2[:, j])
        diff = v2 / cfg.t - var_t[j]
        se = math.hypot(se2 / cfg.t, var_se[j])
        result.add(EstimateReport(f"radius_check[{word_str(v)}]", float(diff), float(se), n2,
                                  tol["ci_level"], 0.0, bool(abs(diff) <= z * se)))
    result.info["radius_check"] = {"R": R, "R_check": R2, "replicas_check": n2}


def estimate_moments(cfg: ExperimentConfig, radius_check: bool | None = None) -> ExperimentResult:
    """Mean, Var/t and Cov/t of the occupation-time vector."""
    tol = cfg.tolerances
    R = resolve_radius(cfg)
    ball = build_ball(cfg.d, R)
    xi = sample_xi(cfg, ball)
    res = ExperimentResult("moments", cfg)
    res.info.update(radius=R, n_vertices=ball.n_vertices,
                    truncation_rel_error=truncation_error(cfg.d, cfg.p, cfg.t, R - max(v.depth for v in cfg.targets)))
    gam = gamma_matrix(cfg.d, cfg.p, cfg.targets, method="closed-form")
    m = len(cfg.targets)
    lvl, n_se = tol["ci_level"], tol["n_se"]
    var_t, var_se = np.zeros(m), np.zeros(m)
    for j, v in enumerate(cfg.targets):
        res.add(mean_report(f"mean[{word_str(v)}]", xi[:, j], lvl, 0.0,
                            within_se(xi[:, j].mean(), xi[:, j].std(ddof=1) / math.sqrt(len(xi)), 0.0, n_se)))
    for i in range(m):
        for j in range(i, m):
            c, se = cov_estimate(xi[:, i], xi[:, j])
            c, se = c / cfg.t, se / cfg.t
            if i == j:
                var_t[i], var_se[i] = c, se
            k = _pair_distance(cfg, i, j)
            label = f"cov[{word_str(cfg.targets[i])},{word_str(cfg.targets[j])}]"
            oracle = finite_time_covariance(cfg.d, cfg.p, cfg.t, k) / cfg.t
            res.add(EstimateReport(f"{label}/finite_t", c, se, len(xi), lvl, oracle,
                                   within_se(c, se, oracle, n_se)))
            g = float(gam.entries[i, j])
            res.add(EstimateReport(f"{label}/gamma", c, se, len(xi), lvl, g,
                                   within_rel(c, g, tol["gamma_rel_tol"])))
    do_check = cfg.radius_check if radius_check is None else radius_check
    if do_check:
        _radius_check(cfg, R, var_t, var_se, res)
    return res


def _tail_setup(cfg: ExperimentConfig):
    if cfg.u is None:
        raise ValidationError("tail estimation needs u")
    u = np.asarray(cfg.u, dtype=float)
    gam = gamma_matrix(cfg.d, cfg.p, cfg.targets, method="closed-form")
    if len(u) == 1:
        if u[0] < 0:
            raise ValidationError("u must be >= 0")
        s2 = sigma_sq(cfg.d, cfg.p)
        phi = u / s2
        b = np.ones(1)
        level = float(u[0])
        target = rate_1d(float(u[0]), s2)
    else:
        if not np.any(u):
            raise ValidationError("the half-space event needs a nonzero u")
        try:
            phi = tilt_for_target(u, gam)
        except ValueError as exc:
            raise ValidationError(str(exc)) from exc
        b = phi
        level = float(phi @ u)
        target = half_space_rate(b, level, gam)[0]
    c = np.asarray(cfg.tilt, dtype=float) if cfg.tilt is not None else phi
    return u, gam, phi, b, level, target, c


def _bootstrap_rate_se(w: np.ndarray, speed: float, n_boot: int, seed: int) -> float:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB007]))
    n = len(w)
    rates = []
    for _ in range(n_boot):
        pb = w[rng.integers(0, n, n)].mean()
        if pb > 0:
            rates.append(-math.log(pb) / speed)
    return float(np.std(rates, ddof=1)) if len(rates) > 1 else float("inf")


def estimate_tail(cfg: ExperimentConfig, radius_check: bool | None = None) -> ExperimentResult:
    """Importance-sampled P(b . xi_t / a_t >= level) and the empirical rate."""
    tol = cfg.tolerances
    u, gam, phi, b, level, target, c = _tail_setup(cfg)
    R = resolve_radius(cfg)
    ball = build_ball(cfg.d, R)
    a_t = cfg.schedule(cfg.t)
    speed = cfg.schedule.speed(cfg.t)
    if np.any(c):
        xi, logw = sample_tilted(cfg, ball, c)
    else:
        xi, logw = sample_xi(cfg, ball), np.zeros(cfg.replicas)
    lam = xi / a_t
    hit = (lam @ b) >= level
    base = np.exp(-logw)
    w = np.where(hit, base, 0.0)
    n = len(w)
    prob = float(w.mean())
    prob_se = float(w.std(ddof=1) / math.sqrt(n))
    ess = float(w.sum() ** 2 / np.sum(w**2)) if np.any(w > 0) else 0.0
    lvl = tol["ci_level"]
    res = ExperimentResult("tail", cfg)
    res.add(EstimateReport("probability", prob, prob_se, n, lvl))
    rel = tol["tail_rel_tol"] if len(u) == 1 else tol["half_space_rel_tol"]
    if prob > 0:
        rate = -math.log(prob) / speed
        rate_se = prob_se / (prob * speed)
        if cfg.bootstrap:
            rate_se = _bootstrap_rate_se(w, speed, cfg.bootstrap, cfg.seed)
    else:
        rate, rate_se = float("inf"), float("inf")
    if target <= 0:
        passed = None
    elif len(u) == 1:
        passed = within_rel(rate, target, rel)
    else:
        # half-space events: the empirical rate must not fall below the infimum by more than rel
        passed = bool(rate >= (1 - rel) * target)
    res.add(EstimateReport("rate", float(rate), float(rate_se), n, lvl, float(target), passed))
    gc = gam.entries @ c
    for j, v in enumerate(cfg.targets):
        ok = within_rel(lam[:, j].mean(), gc[j], tol["tilt_rel_tol"]) if gc[j] != 0 else None
        res.add(mean_report(f"tilted_mean[{word_str(v)}]", lam[:, j], lvl, float(gc[j]), ok))
    unreliable = ess < tol["ess_min"]
    res.info.update(
        radius=R, a_t=a_t, speed=speed, tilt=[float(x) for x in c], phi=[float(x) for x in phi],
        event={"normal": [float(x) for x in b], "level": level}, ess=ess, hits=int(hit.sum()),
        unreliable=bool(unreliable), weight_mean=float(base.mean()), rate_ci="bootstrap" if cfg.bootstrap else "delta",
    )
    do_check = cfg.radius_check if radius_check is None else radius_check
    if do_check:
        # truncation shows up first in the untilted fluctuations
        xi1 = xi if not np.any(c) else sample_xi(cfg, ball, n=max(2, int(round(tol["radius_check_fraction"] * cfg.replicas))))
        var_t = np.array([cov_estimate(xi1[:, j], xi1[:, j])[0] for j in range(len(cfg.targets))]) / cfg.t
        var_se = np.array([cov_estimate(xi1[:, j], xi1[:, j])[1] for j in range(len(cfg.targets))]) / cfg.t
        _radius_check(cfg, R, var_t, var_se, res)
    return res


def clt_diagnostic(cfg: ExperimentConfig) -> ExperimentResult:
    """Normality battery on the replica sample of xi_t / sqrt t."""
    if cfg.replicas < 1000:
        raise ValidationError("the CLT diagnostic needs at least 1000 replicas")
    tol = cfg.tolerances
    R = resolve_radius(cfg)
    ball = build_ball(cfg.d, R)
    xi = sample_xi(cfg, ball) / math.sqrt(cfg.t)
    n = len(xi)
    lvl = tol["ci_level"]
    res = ExperimentResult("clt", cfg)
    res.info["radius"] = R
    skew_se = math.sqrt(6.0 * n * (n - 1) / ((n - 2) * (n + 1) * (n + 3)))
    kurt_se = 2 * skew_se * math.sqrt((n * n - 1) / ((n - 3) * (n + 5)))
    for j, v in enumerate(cfg.targets):
        z = xi[:, j]
        s = z.std(ddof=1)
        zs = (z - z.mean()) / s
        key = word_str(v)
        sk = float(stats.skew(zs, bias=False))
        ku = float(stats.kurtosis(zs, fisher=True, bias=False))
        res.add(EstimateReport(f"skewness[{key}]", sk, skew_se, n, lvl, 0.0, abs(sk) <= tol["skew_tol"]))
        res.add(EstimateReport(f"excess_kurtosis[{key}]", ku, kurt_se, n, lvl, 0.0, abs(ku) <= tol["kurtosis_tol"]))
        med = float(np.median(z))
        med_se = s * math.sqrt(math.pi / 2) / math.sqrt(n)
        sym = None if cfg.p != 0.5 else within_se(med, med_se, 0.0, tol["n_se"])
        res.add(EstimateReport(f"median[{key}]", med, med_se, n, lvl, 0.0 if cfg.p == 0.5 else None, sym))
        res.info[f"normaltest_pvalue[{key}]"] = float(stats.normaltest(zs).pvalue)
    return res
