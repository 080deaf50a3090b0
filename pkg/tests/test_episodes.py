"""Episode loops: scenario sampling, reward plumbing, purity, metrics, bench."""

import math

import numpy as np
import pytest

import srcloc.pf as pf
from srcloc.config import default_config
from srcloc.episodes import (bench_latency, compute_metrics, greedy_planner_step,
                             input_scaling, make_bundle, make_field, make_prior,
                             run_baseline_episode, run_deployment_episode,
                             run_pf_test_episode, run_training_episode,
                             sample_scenario, _compass_dirs, _terminal_metrics)
from srcloc.fields import HalfSpace3DField, Plume2DField
from srcloc.pf import ParticleSet
from srcloc.sensor import SensorParams
from srcloc.serialize import dumps, rng_for
from srcloc.student import LOG_VAR_MAX, LOG_VAR_MIN, GaussianBelief

NLL_7D = 6.432569732432709


def _small_cfg(**kw):
    base = dict(n_particles=25, horizon=6, episodes=2)
    base.update(kw)
    return default_config(**base)


# --- scenario sampling and construction helpers ---

def test_sample_scenario_bounds(rng):
    cfg = _small_cfg()
    prior = make_prior(cfg)
    box = np.asarray(cfg.start_box, dtype=float)
    thetas = []
    poses = []
    for _ in range(300):
        theta, pose = sample_scenario(cfg, rng)
        assert prior.contains(theta[None, :])[0]
        assert np.all(pose >= box[:, 0]) and np.all(pose <= box[:, 1])
        thetas.append(theta)
        poses.append(pose)
    thetas = np.stack(thetas)
    mid = 0.5 * (prior.lows + prior.highs)
    se = prior.widths / math.sqrt(12.0 * 300)
    assert np.all(np.abs(thetas.mean(axis=0) - mid) < 4.0 * se)
    pm = np.stack(poses).mean(axis=0)
    assert np.all(np.abs(pm - 2.5) < 4.0 * (5.0 / math.sqrt(12.0 * 300)))


def test_sample_scenario_degenerate_start_box(rng):
    cfg = _small_cfg(start_box=[[2.0, 2.0 + 1e-9], [3.0, 3.0 + 1e-9]])
    _, pose = sample_scenario(cfg, rng)
    assert pose[0] == pytest.approx(2.0, abs=1e-8)
    assert pose[1] == pytest.approx(3.0, abs=1e-8)


def test_make_field_by_dim():
    assert isinstance(make_field(_small_cfg()), Plume2DField)
    assert isinstance(make_field(default_config(dim=3, n_particles=25)),
                      HalfSpace3DField)


def test_make_prior_applies_lam_floor():
    prior = make_prior(_small_cfg())
    i = _small_cfg().param_names.index("lam")
    assert prior.lows[i] == 1e-6
    assert prior.names == _small_cfg().param_names


def test_input_scaling_matches_state_layout():
    cfg = _small_cfg()
    shift, scale = input_scaling(cfg)
    # [z, pose(2), mu_L(2), sigma_L(2), spread]
    assert shift.shape == (8,) and scale.shape == (8,)
    assert np.all(scale > 0.0)
    cfg2 = _small_cfg(no_spread_feature=True)
    shift2, _ = input_scaling(cfg2)
    assert shift2.shape == (5,)


def test_bundle_initial_belief_is_prior_moments():
    cfg = _small_cfg()
    bundle = make_bundle(cfg, rng_for(0, 0))
    lows, highs = (np.asarray(v) for v in cfg.prior_bounds())
    x = np.zeros(bundle.student.stats.mean.shape[0])
    belief = bundle.student.forward(x)
    assert np.allclose(belief.mu, 0.5 * (lows + highs), atol=0.0)
    want_lv = np.clip(np.log((highs - lows) ** 2 / 12.0),
                      LOG_VAR_MIN, LOG_VAR_MAX)
    assert np.allclose(belief.log_var, want_lv, atol=0.0)


# --- episode records ---

def test_training_episode_record_shape():
    cfg = _small_cfg(zeta=1e-12)  # certificate can never fire
    bundle = make_bundle(cfg, rng_for(0, 0))
    record, rollout = run_training_episode(cfg, bundle, rng_for(0, 1, 0),
                                           episode_index=3, seed=0)
    assert record["schema"] == "episode/v1"
    assert record["mode"] == "train"
    assert record["episode_index"] == 3
    assert record["stop_cause"] == "horizon"
    assert record["stop_step"] == cfg.horizon
    s = record["steps"]
    assert len(s["z"]) == cfg.horizon
    assert len(s["action"]) == cfg.horizon
    assert len(s["pose"]) == cfg.horizon
    assert len(s["reward"]) == len(s["reward_raw"]) == cfg.horizon
    assert len(s["ess"]) == len(s["spread_teacher"]) == cfg.horizon
    assert len(s["spread_student"]) == cfg.horizon
    assert set(record["flags"]) == {
        "reward_mode", "stop_source", "reward_from_student", "pf_at_test",
        "student_only", "no_spread_feature", "no_spread_stop", "no_mh"}
    # horizon truncation: one transition per action except the unresolved last
    assert len(rollout) == cfg.horizon - 1
    assert not any(rollout.dones)
    assert math.isfinite(rollout.bootstrap_value)
    dumps(record)  # byte-stable serialization must accept every field


def test_certificate_fires_immediately_with_huge_zeta():
    cfg = _small_cfg(zeta=1e9)
    bundle = make_bundle(cfg, rng_for(0, 0))
    record, rollout = run_training_episode(cfg, bundle, rng_for(0, 1, 0))
    assert record["stop_cause"] == "certificate"
    assert record["stop_step"] == 1
    assert len(record["steps"]["z"]) == 1
    assert len(record["steps"]["action"]) == 0
    assert rollout is None  # no completed transition before the stop


def test_rollout_rewards_align_with_next_observation():
    # reward for the action at t is the information gain logged at t+1
    cfg = _small_cfg(zeta=1e-12)
    bundle = make_bundle(cfg, rng_for(0, 0))
    record, rollout = run_training_episode(cfg, bundle, rng_for(0, 1, 0))
    assert rollout.rewards == record["steps"]["reward"][1:]


def test_terminal_bonus_lands_on_last_transition():
    cfg = _small_cfg(reward_mode="mixed", zeta=0.9)
    bundle = make_bundle(cfg, rng_for(1, 0))
    for k in range(40):
        record, rollout = run_training_episode(cfg, bundle, rng_for(1, 1, k),
                                               episode_index=k, seed=1)
        fired = record["stop_cause"] == "certificate"
        if fired and rollout is not None:
            t = record["stop_step"]
            assert rollout.dones[-1] is True or rollout.dones[-1] == True  # noqa: E712
            want = record["steps"]["reward"][t - 1] + 1.0
            assert rollout.rewards[-1] == pytest.approx(want, rel=1e-12)
            assert record["terminal_bonus"] == 1.0
            break
    else:
        pytest.skip("no mid-episode certificate in 40 tries")


def test_baseline_episode_kinds():
    cfg = _small_cfg()
    for kind in ("random", "greedy"):
        record = run_baseline_episode(cfg, kind, rng_for(0, 1, 0))
        assert record["mode"] == kind
        assert "spread_student" not in record["steps"]
        assert "spread_teacher" in record["steps"]
        dumps(record)
    with pytest.raises(ValueError):
        run_baseline_episode(cfg, "bogus", rng_for(0, 1, 0))


def test_episode_determinism_same_stream():
    cfg = _small_cfg()
    a = run_baseline_episode(cfg, "random", rng_for(7, 1, 4))
    b = run_baseline_episode(cfg, "random", rng_for(7, 1, 4))
    assert dumps(a) == dumps(b)


def test_pf_test_episode_is_deterministic_given_stream():
    cfg = _small_cfg(pf_at_test=True)
    bundle = make_bundle(cfg, rng_for(0, 0))
    a = run_pf_test_episode(cfg, bundle.actor, rng_for(0, 1, 2))
    b = run_pf_test_episode(cfg, bundle.actor, rng_for(0, 1, 2))
    assert a["mode"] == "deploy_pf"
    assert dumps(a) == dumps(b)


def test_reward_source_isolation():
    # switching the reward to the student belief must not perturb the filter
    cfg_a = _small_cfg(seed=0)
    cfg_b = _small_cfg(seed=0, reward_from_student=True)
    bundle_a = make_bundle(cfg_a, rng_for(0, 0))
    bundle_b = make_bundle(cfg_b, rng_for(0, 0))
    rec_a, _ = run_training_episode(cfg_a, bundle_a, rng_for(0, 1, 0))
    rec_b, _ = run_training_episode(cfg_b, bundle_b, rng_for(0, 1, 0))
    assert rec_a["steps"]["z"] == rec_b["steps"]["z"]
    assert rec_a["steps"]["ess"] == rec_b["steps"]["ess"]
    assert rec_b["steps"]["reward_raw"][0] == 0.0
    assert rec_a["steps"]["reward_raw"] != rec_b["steps"]["reward_raw"]


def test_student_only_episode_has_no_teacher():
    cfg = _small_cfg(student_only=True)
    bundle = make_bundle(cfg, rng_for(0, 0))
    before = pf.construction_count
    record, _ = run_training_episode(cfg, bundle, rng_for(0, 1, 0))
    assert pf.construction_count == before
    assert "spread_teacher" not in record["steps"]
    assert all(v == 0.0 for v in record["steps"]["ess"])
    dumps(record)


def test_deployment_is_particle_free():
    cfg = _small_cfg()
    bundle = make_bundle(cfg, rng_for(0, 0))
    bundle.student.frozen_stats = True
    before = pf.construction_count
    record = run_deployment_episode(cfg, bundle.student, bundle.actor,
                                    rng_for(0, 1, 0))
    assert pf.construction_count == before
    assert record["mode"] == "deploy"
    assert all(r == 0.0 for r in record["steps"]["reward"])
    dumps(record)


def test_deployment_requires_frozen_stats():
    cfg = _small_cfg()
    bundle = make_bundle(cfg, rng_for(0, 0))
    assert not bundle.student.frozen_stats
    with pytest.raises(ValueError):
        run_deployment_episode(cfg, bundle.student, bundle.actor,
                               rng_for(0, 1, 0))


def test_deployment_determinism():
    cfg = _small_cfg()
    bundle = make_bundle(cfg, rng_for(0, 0))
    bundle.student.frozen_stats = True
    a = run_deployment_episode(cfg, bundle.student, bundle.actor,
                               rng_for(0, 1, 9))
    b = run_deployment_episode(cfg, bundle.student, bundle.actor,
                               rng_for(0, 1, 9))
    assert dumps(a) == dumps(b)


def test_degenerate_updates_reset_and_continue():
    # a needle-width sensor zeroes every particle likelihood at every step;
    # the loop must log resets and still finish the episode
    cfg = _small_cfg(horizon=5, n_particles=20,
                     sensor=SensorParams(p_d=1.0, sigma_bg=0.05,
                                         sigma_meas=1e-9))
    record = run_baseline_episode(cfg, "random", rng_for(0, 1, 0))
    assert record["degenerate_resets"] == 5
    assert record["stop_cause"] == "horizon"
    assert all(e == cfg.n_particles for e in record["steps"]["ess"])


def test_trace_hook_sees_each_step():
    cfg = _small_cfg()
    seen = []

    def hook(t, ps):
        seen.append((t, ps.thetas.shape, float(ps.weights.sum())))

    record = run_baseline_episode(cfg, "random", rng_for(0, 1, 0),
                                  trace_hook=hook)
    assert len(seen) == record["stop_step"]
    assert [t for t, _, _ in seen] == list(range(1, record["stop_step"] + 1))
    assert all(shape == (25, 7) for _, shape, _ in seen)
    assert all(abs(s - 1.0) < 1e-9 for _, _, s in seen)


# --- greedy planner ---

def test_greedy_returns_compass_displacement(rng):
    cfg = _small_cfg(l_step=0.5)
    dirs = _compass_dirs(2, 0.5)
    prior = make_prior(cfg)
    ps = pf.init_particles(prior, 30, rng)
    a = greedy_planner_step(ps, np.array([1.0, 1.0]), cfg, rng)
    assert any(np.allclose(a, d, atol=0.0) for d in dirs)
    assert np.linalg.norm(a) == pytest.approx(0.5, rel=1e-12)


def test_greedy_point_mass_is_well_defined(rng):
    # a collapsed posterior offers (numerically) zero gain in every direction;
    # the planner must still return one finite compass displacement
    cfg = _small_cfg()
    theta = np.array([10.0, 15.0, 100.0, 1.0, 1.0, 2.0, 3.0])
    ps = ParticleSet(thetas=np.tile(theta, (20, 1)),
                     weights=np.full(20, 0.05))
    a = greedy_planner_step(ps, np.array([2.0, 2.0]), cfg, rng)
    dirs = _compass_dirs(2, cfg.l_step)
    assert any(np.allclose(a, d, atol=0.0) for d in dirs)
    assert np.all(np.isfinite(a))


def test_compass_dirs_3d_include_vertical():
    dirs = _compass_dirs(3, 2.0)
    assert dirs.shape == (10, 3)
    assert np.allclose(dirs[-2], [0.0, 0.0, 2.0])
    assert np.allclose(dirs[-1], [0.0, 0.0, -2.0])
    assert np.allclose(np.linalg.norm(dirs[:8], axis=1), 2.0, rtol=1e-12)


# --- metrics ---

def test_terminal_metrics_closed_forms():
    cfg = _small_cfg()
    theta_true = np.zeros(7)
    theta_hat = np.array([3.0, 4.0, 0.0, 0.0, 0.0, 0.0, 0.0])
    belief = GaussianBelief(mu=theta_hat.copy(), log_var=np.zeros(7))
    m = _terminal_metrics(cfg, theta_true, theta_hat, belief)
    assert m["sle"] == 5.0
    assert m["fpe_mae"] == 1.0
    assert m["fpe_rmse"] == pytest.approx(math.sqrt(25.0 / 7.0), rel=1e-14)
    assert m["uq_nll"] == pytest.approx(NLL_7D + 12.5, rel=1e-14)


def test_compute_metrics_aggregates():
    recs = [
        {"stop_cause": "certificate", "stop_step": 10,
         "metrics": {"sle": 1.0, "fpe_rmse": 2.0, "fpe_mae": 1.5, "uq_nll": 3.0}},
        {"stop_cause": "horizon", "stop_step": 100,
         "metrics": {"sle": 3.0, "fpe_rmse": 4.0, "fpe_mae": 2.5, "uq_nll": 5.0}},
    ]
    m = compute_metrics(recs)
    assert m["sr"] == 0.5
    assert m["te"] == 55.0
    assert m["sle_mean"] == 2.0
    assert m["sle_std"] == 1.0
    assert m["fpe_rmse"] == 3.0
    assert m["fpe_mae"] == 2.0
    assert m["uq_nll"] == 4.0


def test_compute_metrics_rejects_empty():
    with pytest.raises(ValueError):
        compute_metrics([])


# --- latency bench ---

def test_bench_latency_rows():
    cfg = _small_cfg()
    rows = bench_latency(cfg, "student", [50], steps=5)
    assert len(rows) == 1
    assert rows[0]["mode"] == "student"
    assert rows[0]["n"] == 50
    assert rows[0]["median_us"] > 0.0
    rows2 = bench_latency(cfg, "pf_at_test", [30, 60], steps=5)
    assert [r["n"] for r in rows2] == [30, 60]


def test_bench_latency_empty_and_invalid():
    cfg = _small_cfg()
    assert bench_latency(cfg, "student", [50], steps=0) == []
    with pytest.raises(ValueError):
        bench_latency(cfg, "warp", [50], steps=5)
