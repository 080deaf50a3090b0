#!/usr/bin/env python3
"""Side-by-side metrics for the baseline agents and (optionally) trained
checkpoints, all on the same episode stream.

Without --ckpt only the training-free agents run.  Prints one row per
agent; success rate and time-to-certificate are the headline columns.
"""

import argparse

from srcloc import trainer
from srcloc.config import default_config, load_config
from srcloc.episodes import compute_metrics


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="config JSON (defaults if omitted)")
    ap.add_argument("--ckpt", help="checkpoint directory; adds pf + policy rows")
    ap.add_argument("--episodes", type=int, default=100)
    ap.add_argument("--zeta", type=float, default=None,
                    help="override the stopping threshold")
    args = ap.parse_args()

    cfg = load_config(args.config) if args.config else default_config()
    if args.zeta is not None:
        import dataclasses
        cfg = dataclasses.replace(cfg, zeta=args.zeta)

    agents = ["random", "greedy"]
    if args.ckpt:
        agents += ["pf", "policy"]
    cols = trainer.METRIC_COLUMNS
    print(f"{'agent':<8} " + " ".join(f"{c:>12}" for c in cols))
    for agent in agents:
        if agent in ("pf", "policy"):
            records, m = trainer.eval_run(cfg, args.ckpt, None, agent=agent,
                                          episodes=args.episodes)
        else:
            records = trainer.evaluate(cfg, agent, episodes=args.episodes)
            m = compute_metrics(records)
        print(f"{agent:<8} " + " ".join(f"{m[c]:>12.4g}" for c in cols))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
