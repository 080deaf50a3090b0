#!/usr/bin/env python3
"""Train the belief-conditioned policy with the tuned optimization recipe.

Config defaults keep the PPO constants at their textbook values.  At this
reward scale those constants leave the success rate on the random-walk
floor, so this experiment raises the minibatch reuse to 10 epochs per
rollout, which is the knob that actually makes training move (README has
the comparison).  The stopping threshold is also opened up to 0.5 so that
certificates fire inside the step budget.

Writes a config echo plus checkpoints and logs under --out, then runs a
quick policy-vs-random comparison.
"""

import argparse
import os

from srcloc import cli
from srcloc.config import default_config
from srcloc.policy import PPOConfig
from srcloc.serialize import dumps


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--steps", type=int, default=80000)
    ap.add_argument("--zeta", type=float, default=0.5)
    ap.add_argument("--out", default="runs/policy")
    ap.add_argument("--eval-episodes", type=int, default=100)
    args = ap.parse_args()

    cfg = default_config(seed=args.seed, total_steps=args.steps,
                         zeta=args.zeta, ppo=PPOConfig(epochs=10))
    os.makedirs(args.out, exist_ok=True)
    cfg_path = os.path.join(args.out, "train_config.json")
    with open(cfg_path, "w", encoding="utf-8") as f:
        f.write(dumps(cfg.to_dict()) + "\n")

    rc = cli.main(["train", "--config", cfg_path, "--out", args.out])
    if rc != 0:
        return rc
    for agent in ("pf", "random"):
        rc = cli.main(["eval", "--config", cfg_path, "--ckpt", args.out,
                       "--agent", agent, "--episodes", str(args.eval_episodes),
                       "--out", os.path.join(args.out, f"eval_{agent}")])
        if rc != 0:
            return rc
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
