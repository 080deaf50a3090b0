#!/usr/bin/env python3
"""Filter sensitivity grid: success rate and certificate time as a function
of particle budget and resampling threshold, using the greedy agent so the
trend reflects the filter rather than RL variance."""

import argparse

from srcloc import cli


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/sweep")
    ap.add_argument("--episodes", type=int, default=50)
    ap.add_argument("--n", default="50,100,200,500")
    ap.add_argument("--tau", default="0.3,0.5,0.7")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    return cli.main(["sweep", "--out", args.out, "--agent", "greedy",
                     "--episodes", str(args.episodes), "--n", args.n,
                     "--tau", args.tau, "--seed", str(args.seed)])


if __name__ == "__main__":
    raise SystemExit(main())
