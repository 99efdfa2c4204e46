"""Command-line entry point: ``treessep <subcommand> [--config FILE] [flags]``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import harness
from .harness import ExperimentConfig, ValidationError, load_config_file, parse_word, word_str
from .heatkernel import TruncationError, heat_bound, radial_distribution
from .potential import (
    gamma_matrix,
    grad_pair_sum,
    green_closed_form,
    resolvent_field,
    sigma_sq,
)
from .ratefn import rate_function
from .rng import replica_sequence
from .ssep import replica, resolvent_fields, run, tilted_run
from .treegeo import ResourceError, build_ball

EXIT_OK, EXIT_INVALID, EXIT_SELFTEST = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


@contextmanager
def _sink(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _emit(text: str, path=None):
    with _sink(path) as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# experiment configs from file + flags
# ---------------------------------------------------------------------------

_CONFIG_FLAGS = {
    "d": int, "p": float, "t": float, "replicas": int, "seed": int, "alpha": float,
    "tolerance_profile": str, "bootstrap": int, "out": str, "events_out": str,
}


def _add_config_flags(sp):
    sp.add_argument("--config", help="JSON or TOML file whose keys are ExperimentConfig fields")
    for name, typ in _CONFIG_FLAGS.items():
        sp.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)
    sp.add_argument("--targets", nargs="+", default=None, help="vertex words such as / /0 /0/1")
    sp.add_argument("--tilt", nargs="+", type=float, default=None)
    sp.add_argument("--u", nargs="+", type=float, default=None)
    sp.add_argument("--radius", default=None, help="'auto' or an integer")
    sp.add_argument("--no-radius-check", dest="radius_check", action="store_false", default=None)


def _config_from_args(args) -> ExperimentConfig:
    data = load_config_file(args.config) if args.config else {}
    for name in list(_CONFIG_FLAGS) + ["targets", "tilt", "u", "radius_check"]:
        val = getattr(args, name, None)
        if val is not None:
            data[name] = val
    if args.radius is not None:
        data["radius"] = args.radius
    return ExperimentConfig.from_mapping(data)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = _config_from_args(args)
    R = harness.resolve_radius(cfg)
    ball = build_ball(cfg.d, R)
    idx = [ball.index(v) for v in cfg.targets]
    tilted = cfg.tilt is not None and any(cfg.tilt)
    fields_ = resolvent_fields(ball, idx, cfg.t, resolvent_field(cfg.d, cfg.t)) if tilted else None
    rows = []
    events = io.StringIO() if cfg.events_out else None
    words = [word_str(v) for v in ball.vertices] if events is not None else None
    for r in range(cfg.replicas):
        eta, dyn = replica(ball, cfg.p, replica_sequence(cfg.seed, r))
        record = events is not None
        if tilted:
            traj, led = tilted_run(eta, cfg.t, idx, cfg.tilt, cfg.schedule, dyn, fields=fields_, record=record)
        else:
            traj, led = run(eta, cfg.t, idx, dyn, record=record)
        for j, v in enumerate(cfg.targets):
            rows.append([r, word_str(v), float(led.X[j]), float(led.xi[j]), float(led.log_weight)])
        if record:
            e = ball.edges[traj.edges]
            for time, edge, (a, b) in zip(traj.times, traj.edges, e):
                events.write(json.dumps({"replica": r, "time": float(time), "edge": int(edge),
                                         "v1": words[a], "v2": words[b]}, sort_keys=True) + "\n")
    _emit(_csv_text(["replica", "target", "X", "xi", "logXi"], rows), cfg.out)
    if events is not None:
        _emit(events.getvalue(), cfg.events_out)
    return EXIT_OK


def cmd_kernel_table(args) -> int:
    rk = radial_distribution(args.d, args.t, tol=args.tol)
    per = rk.per_vertex()
    rows = []
    for k in range(args.kmax + 1):
        pk = float(per[k]) if k <= rk.K_max else 0.0
        rows.append([args.d, float(args.t), k, pk, heat_bound(args.d, args.t, k), float(rk.leak)])
    _emit(_csv_text(["d", "t", "k", "p", "bound", "leak"], rows), args.out)
    return EXIT_OK


def cmd_potential_table(args) -> int:
    field = resolvent_field(args.d, args.t)
    rows = []
    for k in range(args.kmax + 1):
        green = green_closed_form(args.d, k)
        rows.append([args.d, float(args.t), k, float(field.at(k)), green,
                     grad_pair_sum(args.d, args.t, k, field), 2 * green])
    _emit(_csv_text(["d", "t", "k", "g", "green", "grad_pair_sum", "limit"], rows), args.out)
    return EXIT_OK


def cmd_rate(args) -> int:
    if not 0 < args.p < 1:
        raise ValidationError(f"p must lie in (0, 1), got {args.p}")
    points = [parse_word(w) for w in args.points] if args.points else None
    u = np.asarray(args.u, dtype=float)
    if points is None:
        if len(u) != 1:
            raise ValidationError("vector u needs --points of the same length")
        points = [parse_word("/")]
    if len(points) != len(u):
        raise ValidationError(f"{len(u)} values of u for {len(points)} points")
    gam = gamma_matrix(args.d, args.p, points, method="closed-form")
    q = rate_function(u, gam)
    out = {
        "I": q.result,
        "phi": None if q.tilt is None else [float(x) for x in q.tilt],
        "sigma2": sigma_sq(args.d, args.p),
    }
    if len(u) > 1:
        out["gamma"] = gam.entries.tolist()
    _emit(_dump_json(out), args.out)
    return EXIT_OK


def cmd_verify_duality(args) -> int:
    from .dual import verify_duality

    cases = verify_duality(d=args.d, R=args.radius, t=args.t, replicas=args.replicas, seed=args.seed)
    report = {"cases": [c.as_dict() for c in cases], "pass": all(c.passed for c in cases)}
    _emit(_dump_json(report), args.out)
    return EXIT_OK


def _experiment(fn):
    def cmd(args) -> int:
        cfg = _config_from_args(args)
        res = fn(cfg)
        _emit(_dump_json(res.as_dict()), cfg.out)
        return EXIT_OK

    return cmd


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    results = run_selftest(quick=not args.full)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_SELFTEST


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="treessep", description="Exclusion process on regular trees: simulation and oracles.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("simulate", help="run replicas; write a ledger CSV and optional NDJSON events")
    _add_config_flags(sp)
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("kernel-table", help="heat kernel by distance with the decay bound")
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--t", type=float, required=True)
    sp.add_argument("--kmax", type=int, required=True)
    sp.add_argument("--tol", type=float, default=1e-12)
    sp.add_argument("--out", default=None)
    sp.set_defaults(fn=cmd_kernel_table)

    sp = sub.add_parser("potential-table", help="resolvent field, Green function and gradient pair sums")
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--t", type=float, required=True)
    sp.add_argument("--kmax", type=int, required=True)
    sp.add_argument("--out", default=None)
    sp.set_defaults(fn=cmd_potential_table)

    sp = sub.add_parser("rate", help="quadratic rate function and optimal tilt")
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--u", type=float, nargs="+", required=True)
    sp.add_argument("--points", nargs="+", default=None)
    sp.add_argument("--out", default=None)
    sp.set_defaults(fn=cmd_rate)

    sp = sub.add_parser("verify-duality", help="simulator vs duality vs exact exponential")
    sp.add_argument("--d", type=int, default=2)
    sp.add_argument("--radius", type=int, default=2)
    sp.add_argument("--t", type=float, default=0.5)
    sp.add_argument("--replicas", type=int, default=10_000)
    sp.add_argument("--seed", type=int, default=12345)
    sp.add_argument("--out", default=None)
    sp.set_defaults(fn=cmd_verify_duality)

    for name, fn, text in (
        ("moments", harness.estimate_moments, "mean, variance and covariance of occupation times"),
        ("tail", harness.estimate_tail, "importance-sampled tail probability and rate"),
        ("clt", harness.clt_diagnostic, "normality diagnostics of occupation times"),
    ):
        sp = sub.add_parser(name, help=text)
        _add_config_flags(sp)
        sp.set_defaults(fn=_experiment(fn))

    sp = sub.add_parser("selftest", help="exact-oracle checks; exit 2 on failure")
    sp.add_argument("--full", action="store_true", help="use 10^4 duality replicas")
    sp.set_defaults(fn=cmd_selftest)
    return ap


def run_cli(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.fn(args)
    except (ValidationError, TruncationError, ResourceError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main():  # pragma: no cover - console entry
    sys.exit(run_cli())


if __name__ == "__main__":  # pragma: no cover
    main()
