"""Training loop, evaluation runners, sensitivity sweep, and replay.

All runs are pure functions of (config, seed): network init, each episode,
and PPO minibatch shuffling draw from disjoint child streams of the root
seed, so re-running any command reproduces its outputs byte for byte.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .config import RunConfig
from .episodes import (PolicyBundle, bench_latency, compute_metrics, make_bundle,
                       run_baseline_episode, run_deployment_episode,
                       run_pf_test_episode, run_training_episode)
from .policy import load_policy, ppo_update, save_policy
from .rewards import RewardClipper
from .serialize import (dumps, rng_for, sha256_of_file, write_csv, write_jsonl)
from .student import load_student, save_student

log = logging.getLogger(__name__)

METRIC_COLUMNS = ["sr", "te", "sle_mean", "sle_std", "fpe_rmse",
                  "fpe_mae", "uq_nll"]


def _metrics_row(label: str, cfg: RunConfig, metrics: dict, episodes: int) -> dict:
    row = {
        "label": label,
        "dim": cfg.dim,
        "seed": cfg.seed,
        "n_particles": cfg.n_particles,
        "tau_ess": cfg.tau_ess,
        "zeta": cfg.zeta,
        "episodes": episodes,
    }
    row.update({k: metrics[k] for k in METRIC_COLUMNS})
    return row


def write_metrics_csv(path, rows):
    cols = ["label", "dim", "seed", "n_particles", "tau_ess", "zeta",
            "episodes"] + METRIC_COLUMNS
    write_csv(path, cols, rows)


# ---------------------------------------------------------------------------
# training

def train(cfg: RunConfig, out_dir=None, *, stop_after_episode: int = None,
          trace_hook=None, progress_cb=None):
    """Run the PPO + distillation loop for cfg.total_steps environment steps.

    Returns (bundle, records, update_rows).  When out_dir is given, writes
    episodes.jsonl, metrics.csv, train_log.csv, student.ckpt, policy.ckpt.
    stop_after_episode truncates the run right after that episode index
    (used by replay to reproduce a single training record).
    """
    bundle = make_bundle(cfg, rng_for(cfg.seed, 0))
    clipper = RewardClipper(cfg.clip_window, cfg.clip_q)
    shuffle_rng = rng_for(cfg.seed, 2)
    records = []
    update_rows = []
    buffered = []
    buffered_len = 0
    env_steps = 0
    episode = 0
    recent = []

    while env_steps < cfg.total_steps:
        progress = env_steps / cfg.total_steps
        rng = rng_for(cfg.seed, 1, episode)
        record, rollout = run_training_episode(
            cfg, bundle, rng, episode_index=episode, seed=cfg.seed,
            clipper=clipper, progress=progress, collect_rollout=True,
            trace_hook=trace_hook)
        records.append(record)
        recent.append(record)
        env_steps += record["stop_step"]
        if rollout is not None:
            buffered.append(rollout)
            buffered_len += len(rollout)
        if buffered_len >= cfg.ppo.rollout_steps:
            stats = ppo_update(bundle.actor, bundle.critic, buffered, cfg.ppo,
                               shuffle_rng, bundle.actor_opt, bundle.critic_opt)
            m = compute_metrics(recent)
            update_rows.append({
                "env_steps": env_steps,
                "episodes": episode + 1,
                "policy_loss": stats["policy_loss"],
                "value_loss": stats["value_loss"],
                "entropy": stats["entropy"],
                "clip_frac": stats["clip_frac"],
                "sr_recent": m["sr"],
                "te_recent": m["te"],
                "reward_recent": float(np.mean(
                    [np.sum(r.rewards) for r in buffered])),
            })
            if progress_cb is not None:
                progress_cb(update_rows[-1])
            buffered = []
            buffered_len = 0
            recent = []
        if stop_after_episode is not None and episode >= stop_after_episode:
            break
        episode += 1

    bundle.student.frozen_stats = True
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        save_student(bundle.student, os.path.join(out_dir, "student.ckpt"))
        save_policy(bundle.actor, bundle.critic,
                    os.path.join(out_dir, "policy.ckpt"))
        write_jsonl(os.path.join(out_dir, "episodes.jsonl"), records)
        tail = records[-min(100, len(records)):]
        write_metrics_csv(os.path.join(out_dir, "metrics.csv"),
                          [_metrics_row("train", cfg, compute_metrics(tail),
                                        len(tail))])
        log_cols = ["env_steps", "episodes", "policy_loss", "value_loss",
                    "entropy", "clip_frac", "sr_recent", "te_recent",
                    "reward_recent"]
        write_csv(os.path.join(out_dir, "train_log.csv"), log_cols,
                  update_rows)
    return bundle, records, update_rows


# ---------------------------------------------------------------------------
# evaluation

def _checkpoint_meta(ckpt_dir):
    meta = {}
    for name in ("student.ckpt", "policy.ckpt"):
        p = os.path.join(ckpt_dir, name)
        if os.path.exists(p):
            meta[name.split(".")[0]] = sha256_of_file(p)
    return meta


def load_checkpoints(ckpt_dir):
    student = None
    sp = os.path.join(ckpt_dir, "student.ckpt")
    if os.path.exists(sp):
        student = load_student(sp)
    actor, critic = load_policy(os.path.join(ckpt_dir, "policy.ckpt"))
    return student, actor, critic


def evaluate(cfg: RunConfig, agent: str, *, student=None, actor=None,
             episodes: int = None, workers: int = 1, ckpt_sha: dict = None):
    """Run `episodes` independent evaluation episodes with the given agent.

    agent: policy (student-driven deployment; honors pf_at_test), pf
    (filter kept at test), random, greedy.  Episodes are keyed by index, so
    thread count cannot change the output.
    """
    n_eps = cfg.episodes if episodes is None else episodes

    def one(k: int) -> dict:
        rng = rng_for(cfg.seed, 1, k)
        if agent == "policy":
            if cfg.pf_at_test:
                rec = run_pf_test_episode(cfg, actor, rng, episode_index=k,
                                          seed=cfg.seed)
            else:
                rec = run_deployment_episode(cfg, student, actor, rng,
                                             episode_index=k, seed=cfg.seed)
        elif agent == "pf":
            rec = run_pf_test_episode(cfg, actor, rng, episode_index=k,
                                      seed=cfg.seed)
        elif agent in ("random", "greedy"):
            rec = run_baseline_episode(cfg, agent, rng, episode_index=k,
                                       seed=cfg.seed)
        else:
            raise ValueError(f"unknown agent: {agent!r}")
        if ckpt_sha:
            rec["checkpoint_sha"] = dict(ckpt_sha)
        return rec

    if workers <= 1:
        records = [one(k) for k in range(n_eps)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            records = list(ex.map(one, range(n_eps)))
    return records


def eval_run(cfg: RunConfig, ckpt_dir, out_dir=None, *, agent: str = "policy",
             episodes: int = None, workers: int = 1):
    """Evaluate checkpoints (or a baseline agent) and write the outputs."""
    student = actor = None
    ckpt_sha = {}
    if agent in ("policy", "pf"):
        student, actor, _ = load_checkpoints(ckpt_dir)
        ckpt_sha = _checkpoint_meta(ckpt_dir)
        if agent == "policy" and not cfg.pf_at_test and student is None:
            raise FileNotFoundError("student.ckpt required for student-driven eval")
    records = evaluate(cfg, agent, student=student, actor=actor,
                       episodes=episodes, workers=workers, ckpt_sha=ckpt_sha)
    metrics = compute_metrics(records)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_jsonl(os.path.join(out_dir, "episodes.jsonl"), records)
        write_metrics_csv(os.path.join(out_dir, "metrics.csv"),
                          [_metrics_row(f"eval/{agent}", cfg, metrics,
                                        len(records))])
    return records, metrics


# ---------------------------------------------------------------------------
# sensitivity sweep

SWEEP_N = (50, 100, 200, 500)
SWEEP_TAU = (0.3, 0.5, 0.7)


def sweep_run(cfg: RunConfig, out_dir=None, *, agent: str = "greedy",
              episodes: int = None, n_values=SWEEP_N, tau_values=SWEEP_TAU):
    """Grid over (particle budget, resampling threshold) with a fixed agent.

    Uses the training-free agents so the trend reflects the filter, not RL
    variance.  Returns (rows, all_records); each row is one grid cell.
    """
    import dataclasses
    rows = []
    all_records = []
    for n in n_values:
        for tau in tau_values:
            cell = dataclasses.replace(cfg, n_particles=int(n),
                                       tau_ess=float(tau))
            records = evaluate(cell, agent, episodes=episodes)
            for r in records:
                r["sweep"] = {"n_particles": int(n), "tau_ess": float(tau)}
            metrics = compute_metrics(records)
            rows.append(_metrics_row(f"sweep/{agent}", cell, metrics,
                                     len(records)))
            all_records.extend(records)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_jsonl(os.path.join(out_dir, "episodes.jsonl"), all_records)
        write_metrics_csv(os.path.join(out_dir, "metrics.csv"), rows)
    return rows, all_records


# ---------------------------------------------------------------------------
# replay

def replay_record(cfg: RunConfig, record: dict, ckpt_dir=None, trace_hook=None):
    """Re-run the episode a record came from; returns (fresh_record, matches).

    Baseline and evaluation records re-run directly from their episode
    stream.  Training records re-run the training loop prefix, since network
    state at episode k depends on every episode before it.  `trace_hook` is
    forwarded to runs that keep particles in the loop (deploy has none).
    """
    mode = record["mode"]
    k = record["episode_index"]
    expected = dict(record)
    if "sweep" in record:
        import dataclasses
        cfg = dataclasses.replace(cfg, n_particles=record["sweep"]["n_particles"],
                                  tau_ess=record["sweep"]["tau_ess"])
    if mode == "train":
        _, records, _ = train(cfg, out_dir=None, stop_after_episode=k,
                              trace_hook=trace_hook)
        if k >= len(records):
            raise ValueError(f"training run never reached episode {k}")
        fresh = records[k]
    elif mode in ("random", "greedy"):
        fresh = run_baseline_episode(cfg, mode, rng_for(cfg.seed, 1, k),
                                     episode_index=k, seed=cfg.seed,
                                     trace_hook=trace_hook)
    elif mode in ("deploy", "deploy_pf"):
        if ckpt_dir is None:
            raise ValueError("replay of a deployment record needs --checkpoints")
        student, actor, _ = load_checkpoints(ckpt_dir)
        sha = _checkpoint_meta(ckpt_dir)
        stored = record.get("checkpoint_sha")
        if stored and stored != sha:
            return None, False
        rng = rng_for(cfg.seed, 1, k)
        if mode == "deploy":
            fresh = run_deployment_episode(cfg, student, actor, rng,
                                           episode_index=k, seed=cfg.seed)
        else:
            fresh = run_pf_test_episode(cfg, actor, rng, episode_index=k,
                                        seed=cfg.seed, trace_hook=trace_hook)
        if stored:
            fresh["checkpoint_sha"] = dict(stored)
    else:
        raise ValueError(f"cannot replay mode {mode!r}")
    expected.pop("sweep", None)
    return fresh, dumps(fresh) == dumps(expected)
