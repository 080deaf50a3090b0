#!/usr/bin/env python3
"""Deployment-path latency: student forward pass vs keeping the particle
filter at test time, across particle budgets.  The student column is flat
in N by construction; the ratio column is the speedup from distillation."""

import argparse

from srcloc.config import default_config
from srcloc.episodes import bench_latency


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", default="50,100,200,500,1000,2000")
    ap.add_argument("--steps", type=int, default=300)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = default_config(seed=args.seed)
    n_values = [int(tok) for tok in args.n.split(",") if tok.strip()]
    stu = bench_latency(cfg, "student", n_values, args.steps, seed=args.seed)
    pf = bench_latency(cfg, "pf_at_test", n_values, args.steps, seed=args.seed)

    print(f"{'n':>6} {'student_us':>12} {'pf_us':>12} {'ratio':>8}")
    for a, b in zip(stu, pf):
        print(f"{a['n']:>6d} {a['median_us']:>12.2f} {b['median_us']:>12.2f} "
              f"{b['median_us'] / a['median_us']:>8.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
