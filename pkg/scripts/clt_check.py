"""Skewness, excess kurtosis and normality p-value of xi_t / sqrt t.

    python3 scripts/clt_check.py --t 100 --replicas 10000
"""

import argparse
import json

from treessep.harness import ExperimentConfig, clt_diagnostic


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--t", type=float, default=100.0)
    ap.add_argument("--replicas", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    res = clt_diagnostic(ExperimentConfig(t=args.t, replicas=args.replicas, seed=args.seed))
    print(json.dumps(res.as_dict(), indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
