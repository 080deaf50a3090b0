"""Command-line front end.

Subcommands
-----------
train   closed-loop training run; writes checkpoints, logs, and metrics
eval    evaluation episodes against saved checkpoints or a baseline agent
bench   per-step latency table for the deployment-critical path
sweep   (particle budget, resample threshold) sensitivity grid
replay  re-run a recorded episode and verify byte-for-byte reproduction

Config files are JSON with RunConfig field names.  Seed precedence:
SEED environment variable > --seed flag > config file.  Exit codes:
0 success, 1 replay mismatch, 2 config or usage error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys

from . import trainer
from .config import ConfigError, RunConfig, default_config, load_config, validate
from .episodes import bench_latency
from .nets import NumericError
from .serialize import dumps, read_jsonl, write_csv

log = logging.getLogger("srcloc")


# ---------------------------------------------------------------------------
# shared helpers

def _build_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else default_config()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = int(args.seed)
    env_seed = os.environ.get("SEED")
    if env_seed is not None:
        try:
            overrides["seed"] = int(env_seed)
        except ValueError:
            raise ConfigError("SEED", f"must be an integer, got {env_seed!r}")
    if getattr(args, "total_steps", None) is not None:
        overrides["total_steps"] = int(args.total_steps)
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
        validate(cfg)
    return cfg


def _echo_config(cfg: RunConfig, out_dir=None):
    """Log the effective settings; persist them next to the outputs so any
    run can be re-parsed and replayed from its own directory."""
    log.info("config: dim=%d seed=%d n_particles=%d tau_ess=%g zeta=%g "
             "horizon=%d episodes=%d total_steps=%d reward_mode=%s",
             cfg.dim, cfg.seed, cfg.n_particles, cfg.tau_ess, cfg.zeta,
             cfg.horizon, cfg.episodes, cfg.total_steps, cfg.reward_mode)
    if out_dir is None:
        return None
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "config.json")
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps(cfg.to_dict()) + "\n")
    return path


class _TraceWriter:
    """Writes every k-th particle snapshot to a JSONL file.

    The counter is global across episodes, so a training trace samples the
    whole run rather than the head of each episode.
    """

    def __init__(self, path, every: int):
        if every < 1:
            raise ConfigError("trace", "snapshot interval must be >= 1")
        self.every = every
        self.count = 0
        self.path = path
        self._f = open(path, "w", encoding="utf-8")

    def __call__(self, t: int, ps) -> None:
        take = self.count % self.every == 0
        self.count += 1
        if not take:
            return
        row = {
            "snapshot": self.count - 1,
            "step": int(ps.step),
            "thetas": ps.thetas.tolist(),
            "weights": ps.weights.tolist(),
        }
        self._f.write(dumps(row) + "\n")

    def close(self):
        self._f.close()


def _parse_int_list(text: str, field: str):
    try:
        vals = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(field, f"expected comma-separated integers, got {text!r}")
    if not vals:
        raise ConfigError(field, "empty list")
    return vals


def _parse_float_list(text: str, field: str):
    try:
        vals = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(field, f"expected comma-separated numbers, got {text!r}")
    if not vals:
        raise ConfigError(field, "empty list")
    return vals


# ---------------------------------------------------------------------------
# subcommands

def _cmd_train(args) -> int:
    cfg = _build_config(args)
    _echo_config(cfg, args.out)
    tracer = None
    if args.trace is not None:
        tracer = _TraceWriter(os.path.join(args.out, "trace.jsonl"), args.trace)

    def progress(row):
        log.info("update: env_steps=%(env_steps)d episodes=%(episodes)d "
                 "sr=%(sr_recent).2f te=%(te_recent).1f "
                 "reward=%(reward_recent).3f entropy=%(entropy).3f", row)

    try:
        _, records, _ = trainer.train(cfg, args.out, trace_hook=tracer,
                                      progress_cb=progress)
    finally:
        if tracer is not None:
            tracer.close()
    log.info("train: %d episodes done; outputs in %s", len(records), args.out)
    return 0


def _cmd_eval(args) -> int:
    cfg = _build_config(args)
    if args.agent in ("policy", "pf") and not args.ckpt:
        raise ConfigError("ckpt", f"checkpoint directory required for agent {args.agent!r}")
    _echo_config(cfg, args.out)
    records, metrics = trainer.eval_run(cfg, args.ckpt, args.out,
                                        agent=args.agent,
                                        episodes=args.episodes,
                                        workers=args.workers)
    line = " ".join(f"{k}={metrics[k]:.6g}" for k in trainer.METRIC_COLUMNS)
    print(f"eval[{args.agent}] episodes={len(records)} {line}")
    return 0


def _cmd_bench(args) -> int:
    cfg = _build_config(args)
    student = actor = None
    if args.ckpt:
        student, actor, _ = trainer.load_checkpoints(args.ckpt)
    rows = bench_latency(cfg, args.mode, _parse_int_list(args.n, "n"),
                         args.steps, student=student, actor=actor,
                         seed=cfg.seed)
    if args.out:
        write_csv(args.out, ["mode", "n", "median_us"], rows)
    print(f"{'mode':>12} {'n':>8} {'median_us':>12}")
    for r in rows:
        print(f"{r['mode']:>12} {r['n']:>8d} {r['median_us']:>12.2f}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _build_config(args)
    _echo_config(cfg, args.out)
    rows, _ = trainer.sweep_run(cfg, args.out, agent=args.agent,
                                episodes=args.episodes,
                                n_values=_parse_int_list(args.n, "n"),
                                tau_values=_parse_float_list(args.tau, "tau"))
    for r in rows:
        print(f"n={r['n_particles']:<5d} tau={r['tau_ess']:<4g} "
              f"sr={r['sr']:.3f} te={r['te']:.2f} sle={r['sle_mean']:.2f}")
    return 0


def _write_series(path, record):
    """Flatten one episode record into a tidy per-step CSV (trajectory,
    readings, rewards, spreads); downstream plotting never needs JSON."""
    steps = record["steps"]
    pose_axes = "xyz"[:len(steps["pose"][0])] if steps["pose"] else "xy"
    act_axes = "xyz"[:len(steps["action"][0])] if steps["action"] else "xy"
    opt = [k for k in ("spread_teacher", "spread_student") if k in steps]
    cols = (["step"] + [f"pose_{a}" for a in pose_axes] + ["z"]
            + [f"action_{a}" for a in act_axes]
            + ["reward_raw", "reward", "ess"] + opt)
    n = max(len(v) for v in steps.values())
    rows = []
    for t in range(n):
        row = {"step": t}
        pose = steps["pose"][t] if t < len(steps["pose"]) else None
        for j, a in enumerate(pose_axes):
            row[f"pose_{a}"] = pose[j] if pose is not None else ""
        act = steps["action"][t] if t < len(steps["action"]) else None
        for j, a in enumerate(act_axes):
            row[f"action_{a}"] = act[j] if act is not None else ""
        for name in ["z", "reward_raw", "reward", "ess"] + opt:
            seq = steps[name]
            row[name] = seq[t] if t < len(seq) else ""
        rows.append(row)
    write_csv(path, cols, rows)


def _cmd_replay(args) -> int:
    cfg = _build_config(args)
    records = read_jsonl(args.record)
    if not records:
        raise ConfigError("record", f"no records in {args.record}")
    if not 0 <= args.index < len(records):
        raise ConfigError("index", f"out of range [0, {len(records)})")
    rec = records[args.index]
    tracer = None
    if args.trace is not None:
        tracer = _TraceWriter(args.trace_out, args.trace)
    try:
        fresh, ok = trainer.replay_record(cfg, rec, ckpt_dir=args.ckpt,
                                          trace_hook=tracer)
    finally:
        if tracer is not None:
            tracer.close()
    if fresh is None:
        print("replay: checkpoint fingerprint differs from the record",
              file=sys.stderr)
        return 1
    if args.series:
        _write_series(args.series, fresh)
    if ok:
        print(f"replay: episode {rec['episode_index']} ({rec['mode']}) "
              "reproduced exactly")
        return 0
    print("replay: regenerated episode differs from the stored record",
          file=sys.stderr)
    return 1


# ---------------------------------------------------------------------------
# parser

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="srcloc",
                                description="inverse source localization runs")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="cmd", required=True)

    t = sub.add_parser("train", help="run the training loop")
    t.add_argument("--config", help="JSON config file (built-in defaults if omitted)")
    t.add_argument("--seed", type=int, help="override config seed (SEED env wins)")
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--steps", dest="total_steps", type=int,
                   help="override the environment-step budget")
    t.add_argument("--trace", type=int, metavar="K",
                   help="dump every K-th particle snapshot to trace.jsonl")
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("eval", help="evaluate checkpoints or a baseline")
    e.add_argument("--config", help="JSON config file")
    e.add_argument("--seed", type=int, help="override config seed (SEED env wins)")
    e.add_argument("--ckpt", help="checkpoint directory (student.ckpt, policy.ckpt)")
    e.add_argument("--out", help="output directory for episodes.jsonl + metrics.csv")
    e.add_argument("--agent", default="policy",
                   choices=["policy", "pf", "random", "greedy"])
    e.add_argument("--episodes", type=int, help="episode count (config default otherwise)")
    e.add_argument("--workers", type=int, default=1)
    e.set_defaults(func=_cmd_eval)

    b = sub.add_parser("bench", help="latency table for the deployment path")
    b.add_argument("--config", help="JSON config file")
    b.add_argument("--seed", type=int)
    b.add_argument("--mode", required=True, choices=["student", "pf_at_test"])
    b.add_argument("--n", default="50,100,200,500,1000,2000",
                   help="comma-separated particle budgets")
    b.add_argument("--steps", type=int, default=200,
                   help="timed steps per budget (0 gives an empty table)")
    b.add_argument("--ckpt", help="optional checkpoint directory")
    b.add_argument("--out", help="write the table to this CSV path")
    b.set_defaults(func=_cmd_bench)

    s = sub.add_parser("sweep", help="filter sensitivity grid")
    s.add_argument("--config", help="JSON config file")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", help="output directory")
    s.add_argument("--agent", default="greedy", choices=["greedy", "random"])
    s.add_argument("--episodes", type=int, help="episodes per grid cell")
    s.add_argument("--n", default="50,100,200,500")
    s.add_argument("--tau", default="0.3,0.5,0.7")
    s.set_defaults(func=_cmd_sweep)

    r = sub.add_parser("replay", help="re-run a recorded episode and compare")
    r.add_argument("--record", required=True, help="episodes.jsonl from a previous run")
    r.add_argument("--index", type=int, default=0, help="record index in the file")
    r.add_argument("--config",
                   help="config the record was generated with (config.json echo)")
    r.add_argument("--ckpt", help="checkpoint directory for deployment records")
    r.add_argument("--series", metavar="CSV",
                   help="write the regenerated episode as a per-step CSV")
    r.add_argument("--trace", type=int, metavar="K",
                   help="dump every K-th particle snapshot while re-running")
    r.add_argument("--trace-out", default="trace.jsonl",
                   help="snapshot JSONL path (with --trace)")
    r.set_defaults(func=_cmd_replay)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
