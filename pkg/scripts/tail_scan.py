"""Importance-sampled tail rate against t, next to the Gaussian rate built
from the exact finite-t variance.

    python3 scripts/tail_scan.py --ts 25 50 100 --replicas 600 --u 0.5
"""

import argparse
import csv
import math
import sys

from scipy import stats

from treessep.harness import ExperimentConfig, estimate_tail
from treessep.potential import finite_time_covariance


def gaussian_rate(d, p, t, alpha, u):
    a_t = t**alpha
    var = finite_time_covariance(d, p, t, 0)
    return -math.log(stats.norm.sf(u * a_t / math.sqrt(var))) * t / a_t**2


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--ts", type=float, nargs="+", default=[25.0, 50.0, 100.0])
    ap.add_argument("--u", type=float, default=0.5)
    ap.add_argument("--d", type=int, default=2)
    ap.add_argument("--p", type=float, default=0.5)
    ap.add_argument("--alpha", type=float, default=0.75)
    ap.add_argument("--replicas", type=int, default=600)
    ap.add_argument("--radius", default="auto")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["t", "rate", "se", "target", "gaussian_finite_t", "ess", "tilted_mean", "gamma_c"])
    for t in args.ts:
        radius = args.radius if args.radius == "auto" else int(args.radius)
        cfg = ExperimentConfig(d=args.d, p=args.p, t=t, alpha=args.alpha, u=[args.u], replicas=args.replicas,
                               seed=args.seed, radius=radius, radius_check=False)
        res = estimate_tail(cfg)
        rate, mean = res.reports["rate"], res.reports["tilted_mean[/]"]
        w.writerow([t, rate.estimate, rate.se, rate.target, gaussian_rate(args.d, args.p, t, args.alpha, args.u),
                    res.info["ess"], mean.estimate, mean.target])
        sys.stdout.flush()


if __name__ == "__main__":
    main()
