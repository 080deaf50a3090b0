"""Episode loops: teacher-supervised training, particle-free deployment,
baseline agents, metrics, and the latency benchmark.

Per-step order in the teacher loop is fixed: observe, reweight + reward,
optional resample / rejuvenation, student update, features, stop check,
action.  Rewards are re-aligned for the policy so the reward attached to a
transition is the information gain its observation produced; the very first
observation precedes any action and never enters a rollout.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .fields import HalfSpace3DField, Plume2DField
from .nets import Adam
from .pf import (DegenerateUpdateError, ParticleSet, PriorBox, forbid_particles,
                 init_particles, mh_rejuvenate, pf_step_fast, systematic_resample)
from .policy import (Critic, GaussianActor, Rollout, assemble_state, feature_dim,
                     features_from_gaussian, features_from_moments)
from .rewards import (RewardClipper, dense_reward_active, gaussian_kl_diag,
                      kl_weights, terminal_reward)
from .sensor import SensorParams, likelihood_from_intensity, sample_observation
from .serialize import rng_for
from .stopping import should_stop
from .student import GaussianBelief, ObsWindow, StudentNet, train_step

log = logging.getLogger(__name__)

VAR_FLOOR = 1e-12  # for Gaussian fits to near-degenerate particle clouds


def make_field(cfg: RunConfig):
    return Plume2DField() if cfg.dim == 2 else HalfSpace3DField()


def make_prior(cfg: RunConfig) -> PriorBox:
    lows, highs = cfg.prior_bounds()
    return PriorBox(np.asarray(lows, dtype=float), np.asarray(highs, dtype=float),
                    names=tuple(cfg.param_names))


def sample_scenario(cfg: RunConfig, rng: np.random.Generator):
    """Draw (theta_true, start_pose): theta from the prior table, pose uniform
    in the start box."""
    prior = make_prior(cfg)
    theta = prior.sample(1, rng)[0]
    box = np.asarray(cfg.start_box, dtype=float)
    pose = rng.uniform(box[:, 0], box[:, 1])
    return theta, pose


# ---------------------------------------------------------------------------
# networks bundle

@dataclass
class PolicyBundle:
    actor: GaussianActor
    critic: Critic
    student: StudentNet
    actor_opt: Adam
    critic_opt: Adam
    student_opt: Adam


def input_scaling(cfg: RunConfig):
    """Fixed affine scaling for psi, derived from config bounds only.

    Order matches assemble_state: [z, pose, mu_L, (sigma_L, spread)].
    """
    shift = [0.0]
    scale = [5.0]  # typical observation magnitude; readings are heavy-tailed
    dom = np.asarray(cfg.domain, dtype=float)
    for lo, hi in dom:
        shift.append(0.5 * (lo + hi))
        scale.append(0.5 * (hi - lo))
    lows, highs = cfg.prior_bounds()
    loc_lo = np.asarray(lows)[list(cfg.loc_idx)]
    loc_hi = np.asarray(highs)[list(cfg.loc_idx)]
    for lo, hi in zip(loc_lo, loc_hi):
        shift.append(0.5 * (lo + hi))
        scale.append(0.5 * (hi - lo))
    if not cfg.no_spread_feature:
        unif_sd = (loc_hi - loc_lo) / math.sqrt(12.0)
        for sd in unif_sd:
            shift.append(0.0)
            scale.append(sd)
        shift.append(0.0)
        scale.append(float(np.linalg.norm(unif_sd)))
    return np.asarray(shift), np.asarray(scale)


def make_bundle(cfg: RunConfig, rng: np.random.Generator) -> PolicyBundle:
    pose_dim = cfg.dim
    window_dim = cfg.student_window * (1 + pose_dim)
    lows, highs = (np.asarray(v, dtype=float) for v in cfg.prior_bounds())
    prior_mu = 0.5 * (lows + highs)
    prior_log_var = np.log((highs - lows) ** 2 / 12.0)
    student = StudentNet(window_dim, cfg.theta_dim, rng, hidden=cfg.student_hidden,
                         window=cfg.student_window, pose_dim=pose_dim,
                         head_bias_mu=prior_mu, head_bias_log_var=prior_log_var)
    fdim = feature_dim(cfg.dim, include_spread=not cfg.no_spread_feature)
    obs_dim = 1 + pose_dim + fdim
    actor = GaussianActor(obs_dim, pose_dim, rng, l_step=cfg.l_step)
    critic = Critic(obs_dim, rng)
    shift, scale = input_scaling(cfg)
    actor.set_input_scaling(shift, scale)
    critic.set_input_scaling(shift, scale)
    return PolicyBundle(
        actor=actor, critic=critic, student=student,
        actor_opt=Adam(actor.params(), lr=cfg.ppo.lr),
        critic_opt=Adam(critic.trunk.params, lr=cfg.ppo.lr),
        student_opt=Adam(student.mlp.params, lr=cfg.student_lr),
    )


# ---------------------------------------------------------------------------
# shared record plumbing

def _flags_dict(cfg: RunConfig) -> dict:
    return {
        "reward_mode": cfg.reward_mode,
        "stop_source": cfg.stop_source,
        "reward_from_student": cfg.reward_from_student,
        "pf_at_test": cfg.pf_at_test,
        "student_only": cfg.student_only,
        "no_spread_feature": cfg.no_spread_feature,
        "no_spread_stop": cfg.no_spread_stop,
        "no_mh": cfg.no_mh,
    }


def _terminal_metrics(cfg: RunConfig, theta_true, theta_hat, belief: GaussianBelief):
    loc = list(cfg.loc_idx)
    err = np.asarray(theta_hat) - np.asarray(theta_true)
    sle = float(np.linalg.norm(err[loc]))
    fpe_rmse = float(math.sqrt(np.mean(err * err)))
    fpe_mae = float(np.mean(np.abs(err)))
    uq = float(belief.nll(theta_true))
    return {"sle": sle, "fpe_rmse": fpe_rmse, "fpe_mae": fpe_mae, "uq_nll": uq}


def _belief_from_moments(mu, cov) -> GaussianBelief:
    var = np.maximum(np.diag(cov), VAR_FLOOR)
    return GaussianBelief(mu=np.asarray(mu, dtype=float).copy(),
                          log_var=np.log(var))


def _new_record(cfg: RunConfig, mode: str, episode_index: int, seed: int,
                theta_true, start_pose) -> dict:
    return {
        "schema": "episode/v1",
        "mode": mode,
        "episode_index": int(episode_index),
        "seed": int(seed),
        "dim": cfg.dim,
        "flags": _flags_dict(cfg),
        "theta_true": np.asarray(theta_true, dtype=float).tolist(),
        "start_pose": np.asarray(start_pose, dtype=float).tolist(),
    }


class _StepLog:
    """Per-step record arrays; student columns appear only when one exists."""

    def __init__(self, with_student: bool):
        self.pose = []
        self.z = []
        self.action = []
        self.reward_raw = []
        self.reward = []
        self.spread_teacher = []
        self.spread_student = [] if with_student else None
        self.ess = []

    def as_dict(self) -> dict:
        out = {
            "pose": [p.tolist() for p in self.pose],
            "z": [float(v) for v in self.z],
            "action": [a.tolist() for a in self.action],
            "reward_raw": [float(v) for v in self.reward_raw],
            "reward": [float(v) for v in self.reward],
            "ess": [float(v) for v in self.ess],
        }
        if self.spread_teacher:
            out["spread_teacher"] = [float(v) for v in self.spread_teacher]
        if self.spread_student is not None:
            out["spread_student"] = [float(v) for v in self.spread_student]
        return out


def _uniform_moments(thetas: np.ndarray):
    mu = thetas.mean(axis=0)
    d = thetas - mu
    cov = (d.T @ d) / thetas.shape[0]
    return mu, 0.5 * (cov + cov.T)


def _weighted_moments_arr(thetas: np.ndarray, w: np.ndarray):
    mu = w @ thetas
    d = thetas - mu
    cov = np.einsum("i,ij,ik->jk", w, d, d)
    return mu, 0.5 * (cov + cov.T)


def _loc_spread(cov, loc) -> float:
    return math.sqrt(max(float(np.trace(cov[np.ix_(loc, loc)])), 0.0))


# ---------------------------------------------------------------------------
# teacher-in-the-loop episodes (training, random / greedy baselines, PF at test)

def _run_with_teacher(cfg: RunConfig, rng: np.random.Generator, *, mode: str,
                      bundle: PolicyBundle = None, actor: GaussianActor = None,
                      act: str = "policy", explore: bool = True,
                      student_updates: bool = True, clipper: RewardClipper = None,
                      progress: float = 0.0, collect_rollout: bool = False,
                      episode_index: int = 0, seed: int = 0,
                      scenario=None, trace_hook=None):
    """One particle-filter episode; the agent is a policy, a random walker, or
    the greedy planner.  Returns (record, rollout or None)."""
    field = make_field(cfg)
    prior = make_prior(cfg)
    sp = cfg.sensor
    loc = list(cfg.loc_idx)
    pose_dim = cfg.dim
    dom = np.asarray(cfg.domain, dtype=float)
    if scenario is None:
        theta_true, pose = sample_scenario(cfg, rng)
    else:
        theta_true, pose = scenario
        pose = np.asarray(pose, dtype=float).copy()

    if actor is None and bundle is not None:
        actor = bundle.actor
    student = bundle.student if (bundle is not None and student_updates) else None
    critic = bundle.critic if bundle is not None else None
    if act == "policy" and actor is None:
        raise ValueError("policy episodes need an actor")

    ps = init_particles(prior, cfg.n_particles, rng)
    thetas = ps.thetas
    weights = ps.weights
    window = ObsWindow(cfg.student_window, pose_dim)
    hist_z = np.empty(cfg.horizon)
    hist_p = np.empty((cfg.horizon, pose_dim))
    steps = _StepLog(with_student=student is not None)
    rollout = Rollout() if collect_rollout else None
    pending = None  # (psi, u, logp, value) of the transition awaiting its reward
    if clipper is None:
        clipper = RewardClipper(cfg.clip_window, cfg.clip_q)
    dense_on = dense_reward_active(cfg.reward_mode)
    prev_belief = None
    belief = None
    stop_step = cfg.horizon
    stop_cause = "horizon"
    degenerate_resets = 0
    mh_triggers = 0
    mh_accept_sum = 0.0
    terminal_bonus = 0.0

    for t in range(1, cfg.horizon + 1):
        h_true = float(field.intensity_batch(pose, theta_true[None, :])[0])
        z = sample_observation(h_true, sp, rng)
        window.push(z, pose)
        x = window.vector()
        hist_z[t - 1] = z
        hist_p[t - 1] = pose

        try:
            w_new, ess_val, mu_full, cov_full = pf_step_fast(
                thetas, weights, z, pose, field, sp)
            r_raw = kl_weights(w_new, weights)
        except DegenerateUpdateError:
            degenerate_resets += 1
            log.debug("degenerate update at step %d; weights reset to uniform", t)
            w_new = np.full(cfg.n_particles, 1.0 / cfg.n_particles)
            mu_full, cov_full = _uniform_moments(thetas)
            ess_val = float(cfg.n_particles)
            r_raw = 0.0
        weights = w_new

        if ess_val < cfg.tau_ess * cfg.n_particles:
            ps = ParticleSet(thetas=thetas, weights=weights, step=t)
            ps = systematic_resample(ps, rng)
            if not cfg.no_mh and cfg.mh_moves > 0:
                ps, rate = mh_rejuvenate(
                    ps, (hist_z[:t], hist_p[:t]), prior, field, sp, rng,
                    h_t=cfg.mh_step, n_moves=cfg.mh_moves,
                    full_cov=cfg.mh_full_cov)
                mh_triggers += 1
                mh_accept_sum += rate
            thetas = ps.thetas
            weights = ps.weights
            mu_full, cov_full = _weighted_moments_arr(thetas, weights)

        if student is not None:
            student.observe_input(x)
            train_step(student, [(x, thetas, weights)], bundle.student_opt,
                       lr=cfg.student_lr)
            belief = student.forward(x)

        if cfg.reward_from_student:
            if belief is None or prev_belief is None:
                r_raw = 0.0
            else:
                r_raw = gaussian_kl_diag(belief.mu, belief.var,
                                         prev_belief.mu, prev_belief.var)
        prev_belief = belief

        spread_teacher = _loc_spread(cov_full, loc)
        steps.pose.append(pose.copy())
        steps.z.append(z)
        steps.ess.append(ess_val)
        steps.spread_teacher.append(spread_teacher)
        if student is not None:
            steps.spread_student.append(
                float(np.sqrt(np.sum(belief.var[loc]))))

        r_dense = clipper.clip(r_raw) if dense_on else 0.0
        steps.reward_raw.append(r_raw)
        steps.reward.append(r_dense)

        if trace_hook is not None:
            trace_hook(t, ParticleSet(thetas=thetas, weights=weights, step=t))

        stop_spread = spread_teacher
        if cfg.stop_source == "student" and student is not None:
            stop_spread = steps.spread_student[-1]
        fired = (not cfg.no_spread_stop) and should_stop(stop_spread, cfg.zeta)

        if fired:
            terminal_bonus = terminal_reward(cfg.reward_mode, True, progress)
        if pending is not None and rollout is not None:
            psi_p, u_p, logp_p, value_p = pending
            rollout.push(psi_p, u_p, logp_p,
                         r_dense + (terminal_bonus if fired else 0.0),
                         value_p, fired)
        if fired:
            stop_step = t
            stop_cause = "certificate"
            pending = None
            break

        # agent acts; the resulting displacement is clamped to the domain
        if act == "policy":
            feats = features_from_moments(mu_full[loc], cov_full[np.ix_(loc, loc)],
                                          include_spread=not cfg.no_spread_feature)
            psi = assemble_state(z, pose, feats)
            if explore:
                a, u, logp = actor.sample(psi, rng)
                if rollout is not None:
                    value, _ = critic.value(psi)
                    pending = (psi, u, logp, float(value))
            else:
                a = actor.mean_action(psi)
                if rollout is not None:
                    pending = None
        elif act == "random":
            a = rng.uniform(-cfg.l_step, cfg.l_step, size=pose_dim)
        elif act == "greedy":
            ps_view = ParticleSet(thetas=thetas, weights=weights, step=t)
            a = greedy_planner_step(ps_view, pose, cfg, rng)
        else:
            raise ValueError(f"unknown agent kind: {act!r}")
        steps.action.append(np.asarray(a, dtype=float))
        pose = np.clip(pose + a, dom[:, 0], dom[:, 1])

    if rollout is not None:
        if pending is not None:
            # horizon truncation: the final sampled action has no observed
            # outcome; bootstrap from its state value instead
            rollout.bootstrap_value = pending[3]
        if len(rollout) == 0:
            rollout = None

    # teacher-in-the-loop episodes report the teacher estimate; the student
    # belief (when present) is logged alongside for diagnostics
    fit = _belief_from_moments(mu_full, cov_full)
    record = _new_record(cfg, mode, episode_index, seed, theta_true,
                         steps.pose[0] if steps.pose else pose)
    record.update({
        "stop_step": int(stop_step),
        "stop_cause": stop_cause,
        "theta_hat": np.asarray(mu_full, dtype=float).tolist(),
        "belief_mu": fit.mu.tolist(),
        "belief_log_var": fit.log_var.tolist(),
        "metrics": _terminal_metrics(cfg, theta_true, mu_full, fit),
        "degenerate_resets": int(degenerate_resets),
        "mh": {"triggers": int(mh_triggers),
               "mean_acceptance": float(mh_accept_sum / mh_triggers) if mh_triggers else 0.0},
        "terminal_bonus": float(terminal_bonus),
        "steps": steps.as_dict(),
    })
    if student is not None and belief is not None:
        record["student_belief_mu"] = belief.mu.tolist()
        record["student_belief_log_var"] = belief.log_var.tolist()
    return record, rollout


def _run_student_only(cfg: RunConfig, bundle: PolicyBundle,
                      rng: np.random.Generator, *, explore: bool = True,
                      clipper: RewardClipper = None, progress: float = 0.0,
                      collect_rollout: bool = False, episode_index: int = 0,
                      seed: int = 0, scenario=None):
    """Training variant with no particle filter anywhere: the student fits the
    ground-truth parameter vector directly and sources rewards and stopping."""
    field = make_field(cfg)
    sp = cfg.sensor
    loc = list(cfg.loc_idx)
    pose_dim = cfg.dim
    dom = np.asarray(cfg.domain, dtype=float)
    if scenario is None:
        theta_true, pose = sample_scenario(cfg, rng)
    else:
        theta_true, pose = scenario
        pose = np.asarray(pose, dtype=float).copy()
    student = bundle.student
    actor = bundle.actor
    critic = bundle.critic
    window = ObsWindow(cfg.student_window, pose_dim)
    steps = _StepLog(with_student=True)
    steps.spread_teacher = None  # no teacher in this variant
    rollout = Rollout() if collect_rollout else None
    pending = None
    if clipper is None:
        clipper = RewardClipper(cfg.clip_window, cfg.clip_q)
    dense_on = dense_reward_active(cfg.reward_mode)
    target = (theta_true[None, :], np.ones(1))
    prev_belief = None
    stop_step = cfg.horizon
    stop_cause = "horizon"
    terminal_bonus = 0.0

    for t in range(1, cfg.horizon + 1):
        h_true = float(field.intensity_batch(pose, theta_true[None, :])[0])
        z = sample_observation(h_true, sp, rng)
        window.push(z, pose)
        x = window.vector()
        student.observe_input(x)
        train_step(student, [(x, target[0], target[1])], bundle.student_opt,
                   lr=cfg.student_lr)
        belief = student.forward(x)
        if prev_belief is None:
            r_raw = 0.0
        else:
            r_raw = gaussian_kl_diag(belief.mu, belief.var,
                                     prev_belief.mu, prev_belief.var)
        prev_belief = belief
        spread = float(np.sqrt(np.sum(belief.var[loc])))
        steps.pose.append(pose.copy())
        steps.z.append(z)
        steps.ess.append(0.0)
        steps.spread_student.append(spread)
        r_dense = clipper.clip(r_raw) if dense_on else 0.0
        steps.reward_raw.append(r_raw)
        steps.reward.append(r_dense)

        fired = (not cfg.no_spread_stop) and should_stop(spread, cfg.zeta)
        if fired:
            terminal_bonus = terminal_reward(cfg.reward_mode, True, progress)
        if pending is not None and rollout is not None:
            psi_p, u_p, logp_p, value_p = pending
            rollout.push(psi_p, u_p, logp_p,
                         r_dense + (terminal_bonus if fired else 0.0),
                         value_p, fired)
        if fired:
            stop_step = t
            stop_cause = "certificate"
            pending = None
            break

        feats = features_from_gaussian(belief, loc_idx=loc,
                                       include_spread=not cfg.no_spread_feature)
        psi = assemble_state(z, pose, feats)
        if explore:
            a, u, logp = actor.sample(psi, rng)
            if rollout is not None:
                value, _ = critic.value(psi)
                pending = (psi, u, logp, float(value))
        else:
            a = actor.mean_action(psi)
        steps.action.append(np.asarray(a, dtype=float))
        pose = np.clip(pose + a, dom[:, 0], dom[:, 1])

    if rollout is not None:
        if pending is not None:
            rollout.bootstrap_value = pending[3]
        if len(rollout) == 0:
            rollout = None

    record = _new_record(cfg, "train", episode_index, seed, theta_true,
                         steps.pose[0] if steps.pose else pose)
    record.update({
        "stop_step": int(stop_step),
        "stop_cause": stop_cause,
        "theta_hat": belief.mu.tolist(),
        "belief_mu": belief.mu.tolist(),
        "belief_log_var": belief.log_var.tolist(),
        "metrics": _terminal_metrics(cfg, theta_true, belief.mu, belief),
        "degenerate_resets": 0,
        "mh": {"triggers": 0, "mean_acceptance": 0.0},
        "terminal_bonus": float(terminal_bonus),
        "steps": steps.as_dict(),
    })
    return record, rollout


def run_training_episode(cfg: RunConfig, bundle: PolicyBundle,
                         rng: np.random.Generator, *, episode_index: int = 0,
                         seed: int = 0, clipper: RewardClipper = None,
                         progress: float = 0.0, explore: bool = True,
                         collect_rollout: bool = True, scenario=None,
                         trace_hook=None):
    """One training episode; returns (record, rollout or None)."""
    if cfg.student_only:
        return _run_student_only(cfg, bundle, rng, explore=explore,
                                 clipper=clipper, progress=progress,
                                 collect_rollout=collect_rollout,
                                 episode_index=episode_index, seed=seed,
                                 scenario=scenario)
    return _run_with_teacher(cfg, rng, mode="train", bundle=bundle,
                             act="policy", explore=explore,
                             student_updates=not cfg.pf_at_test,
                             clipper=clipper, progress=progress,
                             collect_rollout=collect_rollout,
                             episode_index=episode_index, seed=seed,
                             scenario=scenario, trace_hook=trace_hook)


def run_baseline_episode(cfg: RunConfig, kind: str, rng: np.random.Generator, *,
                         episode_index: int = 0, seed: int = 0, scenario=None,
                         trace_hook=None):
    """Random-walk or greedy-planner baseline with the filter in the loop."""
    if kind not in ("random", "greedy"):
        raise ValueError(f"unknown baseline: {kind!r}")
    record, _ = _run_with_teacher(cfg, rng, mode=kind, act=kind,
                                  student_updates=False,
                                  episode_index=episode_index, seed=seed,
                                  scenario=scenario, trace_hook=trace_hook)
    return record


def run_pf_test_episode(cfg: RunConfig, actor: GaussianActor,
                        rng: np.random.Generator, *, episode_index: int = 0,
                        seed: int = 0, scenario=None, trace_hook=None):
    """Deployment with the filter kept at test time (no student anywhere);
    deterministic mean actions."""
    record, _ = _run_with_teacher(cfg, rng, mode="deploy_pf", actor=actor,
                                  act="policy", explore=False,
                                  student_updates=False,
                                  episode_index=episode_index, seed=seed,
                                  scenario=scenario, trace_hook=trace_hook)
    return record


def run_deployment_episode(cfg: RunConfig, student: StudentNet,
                           actor: GaussianActor, rng: np.random.Generator, *,
                           episode_index: int = 0, seed: int = 0,
                           scenario=None):
    """Particle-free deployment: student belief, mean actions, student stop.

    No ParticleSet may be constructed on this path (runtime-asserted); the
    student statistics must be frozen.
    """
    if not student.frozen_stats:
        raise ValueError("deployment requires frozen student statistics")
    field = make_field(cfg)
    sp = cfg.sensor
    loc = list(cfg.loc_idx)
    pose_dim = cfg.dim
    dom = np.asarray(cfg.domain, dtype=float)
    if scenario is None:
        theta_true, pose = sample_scenario(cfg, rng)
    else:
        theta_true, pose = scenario
        pose = np.asarray(pose, dtype=float).copy()
    window = ObsWindow(cfg.student_window, pose_dim)
    steps = _StepLog(with_student=True)
    steps.spread_teacher = None
    stop_step = cfg.horizon
    stop_cause = "horizon"
    belief = None

    with forbid_particles():
        for t in range(1, cfg.horizon + 1):
            h_true = float(field.intensity_batch(pose, theta_true[None, :])[0])
            z = sample_observation(h_true, sp, rng)
            window.push(z, pose)
            x = window.vector()
            belief = student.forward(x)
            spread = float(np.sqrt(np.sum(belief.var[loc])))
            steps.pose.append(pose.copy())
            steps.z.append(z)
            steps.ess.append(0.0)
            steps.spread_student.append(spread)
            steps.reward_raw.append(0.0)
            steps.reward.append(0.0)
            if (not cfg.no_spread_stop) and should_stop(spread, cfg.zeta):
                stop_step = t
                stop_cause = "certificate"
                break
            feats = features_from_gaussian(belief, loc_idx=loc,
                                           include_spread=not cfg.no_spread_feature)
            psi = assemble_state(z, pose, feats)
            a = actor.mean_action(psi)
            steps.action.append(np.asarray(a, dtype=float))
            pose = np.clip(pose + a, dom[:, 0], dom[:, 1])

    record = _new_record(cfg, "deploy", episode_index, seed, theta_true,
                         steps.pose[0] if steps.pose else pose)
    record.update({
        "stop_step": int(stop_step),
        "stop_cause": stop_cause,
        "theta_hat": belief.mu.tolist(),
        "belief_mu": belief.mu.tolist(),
        "belief_log_var": belief.log_var.tolist(),
        "metrics": _terminal_metrics(cfg, theta_true, belief.mu, belief),
        "degenerate_resets": 0,
        "mh": {"triggers": 0, "mean_acceptance": 0.0},
        "terminal_bonus": 0.0,
        "steps": steps.as_dict(),
    })
    return record


# ---------------------------------------------------------------------------
# greedy information-gain planner (baseline)

def _compass_dirs(dim: int, l_step: float) -> np.ndarray:
    s = 1.0 / math.sqrt(2.0)
    base = [(1, 0), (s, s), (0, 1), (-s, s), (-1, 0), (-s, -s), (0, -1), (s, -s)]
    if dim == 2:
        dirs = [(dx, dy) for dx, dy in base]
    else:
        dirs = [(dx, dy, 0.0) for dx, dy in base] + [(0.0, 0.0, 1.0), (0.0, 0.0, -1.0)]
    return l_step * np.asarray(dirs, dtype=float)


def greedy_planner_step(ps: ParticleSet, pose, cfg: RunConfig,
                        rng: np.random.Generator, n_samples: int = 16) -> np.ndarray:
    """Pick the compass displacement with the largest Monte Carlo estimate of
    expected one-step information gain; ties break to the lowest index."""
    field = make_field(cfg)
    sp = cfg.sensor
    dom = np.asarray(cfg.domain, dtype=float)
    dirs = _compass_dirs(cfg.dim, cfg.l_step)
    w = ps.weights
    n = ps.n
    log_w = np.log(w + 1e-12)
    scores = np.empty(dirs.shape[0])
    for c, d in enumerate(dirs):
        cand = np.clip(np.asarray(pose, dtype=float) + d, dom[:, 0], dom[:, 1])
        h = field.intensity_batch(cand, ps.thetas)
        idx = rng.choice(n, size=n_samples, p=w)
        gate = rng.uniform(size=n_samples) < sp.p_d
        noise = rng.standard_normal(n_samples)
        z = np.where(gate, h[idx] + sp.sigma_meas * noise, sp.sigma_bg * noise)
        lik = likelihood_from_intensity(z[:, None], h[None, :], sp)
        wt = w[None, :] * lik
        sums = wt.sum(axis=1)
        total = 0.0
        for s_i in range(n_samples):
            if sums[s_i] > 0.0:
                wn = wt[s_i] / sums[s_i]
                m = wn > 0.0
                total += float(np.sum(wn[m] * (np.log(wn[m]) - log_w[m])))
        scores[c] = total / n_samples
    return dirs[int(np.argmax(scores))]


# ---------------------------------------------------------------------------
# metrics

def compute_metrics(records, cfg: RunConfig = None) -> dict:
    """Aggregate episode records: success rate (certificate fired), mean stop
    step, location error, full-parameter errors, and ground-truth NLL."""
    if len(records) == 0:
        raise ValueError("need at least one record")
    sr = float(np.mean([r["stop_cause"] == "certificate" for r in records]))
    te = float(np.mean([r["stop_step"] for r in records]))
    sle = np.asarray([r["metrics"]["sle"] for r in records], dtype=float)
    fpe_rmse = float(np.mean([r["metrics"]["fpe_rmse"] for r in records]))
    fpe_mae = float(np.mean([r["metrics"]["fpe_mae"] for r in records]))
    uq = float(np.mean([r["metrics"]["uq_nll"] for r in records]))
    return {
        "sr": sr,
        "te": te,
        "sle_mean": float(sle.mean()),
        "sle_std": float(sle.std()),
        "fpe_rmse": fpe_rmse,
        "fpe_mae": fpe_mae,
        "uq_nll": uq,
    }


# ---------------------------------------------------------------------------
# latency benchmark

def bench_latency(cfg: RunConfig, mode: str, n_values, steps: int,
                  student: StudentNet = None, actor: GaussianActor = None,
                  seed: int = None) -> list:
    """Median per-step wall time of the deployment-critical block.

    mode "student": window refresh + student forward + features + stop check
    + mean action (particle count unused).  mode "pf_at_test": fused filter
    update + features + stop check + mean action.  Returns a list of
    {mode, n, median_us} rows; steps <= 0 gives an empty table.
    """
    if mode not in ("student", "pf_at_test"):
        raise ValueError(f"unknown bench mode: {mode!r}")
    rows = []
    if steps <= 0:
        return rows
    from . import kernels
    kernels.warmup()
    root = cfg.seed if seed is None else seed
    field = make_field(cfg)
    sp = cfg.sensor
    loc = list(cfg.loc_idx)
    dom = np.asarray(cfg.domain, dtype=float)
    for n in n_values:
        rng = rng_for(root, 3, int(n), 0 if mode == "student" else 1)
        theta_true, pose = sample_scenario(cfg, rng)
        if actor is None or (mode == "student" and student is None):
            brng = rng_for(root, 3, int(n), 7)
            bundle = make_bundle(cfg, brng)
            use_actor = bundle.actor if actor is None else actor
            use_student = bundle.student if student is None else student
        else:
            use_actor, use_student = actor, student
        use_student.frozen_stats = True
        window = ObsWindow(cfg.student_window, cfg.dim)
        prior = make_prior(cfg)
        thetas = prior.sample(int(n), rng)
        weights = np.full(int(n), 1.0 / int(n))
        times = []
        total = steps + min(10, steps)  # leading iterations warm caches, untimed
        for i in range(total):
            h_true = float(field.intensity_batch(pose, theta_true[None, :])[0])
            z = sample_observation(h_true, sp, rng)
            t0 = time.perf_counter()
            if mode == "student":
                window.push(z, pose)
                x = window.vector()
                belief = use_student.forward(x)
                spread = float(np.sqrt(np.sum(belief.var[loc])))
                feats = features_from_gaussian(
                    belief, loc_idx=loc,
                    include_spread=not cfg.no_spread_feature)
                stop = should_stop(spread, cfg.zeta)
                psi = assemble_state(z, pose, feats)
                a = use_actor.mean_action(psi)
            else:
                try:
                    w_new, ess_val, mu_full, cov_full = pf_step_fast(
                        thetas, weights, z, pose, field, sp)
                    weights = w_new
                except DegenerateUpdateError:
                    weights = np.full(int(n), 1.0 / int(n))
                    mu_full, cov_full = _uniform_moments(thetas)
                spread = _loc_spread(cov_full, loc)
                feats = features_from_moments(
                    mu_full[loc], cov_full[np.ix_(loc, loc)],
                    include_spread=not cfg.no_spread_feature)
                stop = should_stop(spread, cfg.zeta)
                psi = assemble_state(z, pose, feats)
                a = use_actor.mean_action(psi)
            dt = time.perf_counter() - t0
            if i >= total - steps:
                times.append(dt)
            pose = np.clip(pose + a, dom[:, 0], dom[:, 1])
        rows.append({"mode": mode, "n": int(n),
                     "median_us": float(np.median(times) * 1e6)})
    return rows
