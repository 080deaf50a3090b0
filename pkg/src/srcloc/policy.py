"""Belief features, squashed diagonal-Gaussian actor, critic, GAE, PPO.

The actor outputs a pre-squash Gaussian in u-space; executed displacements are
a = L_step * tanh(u) per axis, and log-probs carry the tanh Jacobian term.
Both nets are hand-backpropagated (see nets.py).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .nets import MLP, Adam, sigmoid, softplus, softplus_inv, save_flat, load_flat

LOG_2PI = math.log(2.0 * math.pi)
SIGMA_FLOOR = 1e-3
# scaled net inputs are clipped here; field readings are heavy-tailed and a
# raw spike would otherwise blow through the ReLU trunk
PSI_CLIP = 10.0


# ---------------------------------------------------------------------------
# belief features

def features_from_moments(mu_loc, cov_loc, include_spread: bool = True) -> np.ndarray:
    """[mu_L, sigma_L, spread] from a location mean and covariance block.

    sigma_L reports per-axis stds (diagonal only); spread uses the full trace.
    With include_spread=False only mu_L survives (feature ablation).
    """
    mu_loc = np.asarray(mu_loc, dtype=float)
    cov_loc = np.atleast_2d(np.asarray(cov_loc, dtype=float))
    if not include_spread:
        return mu_loc.copy()
    sig = np.sqrt(np.maximum(np.diag(cov_loc), 0.0))
    spread = math.sqrt(max(float(np.trace(cov_loc)), 0.0))
    return np.concatenate([mu_loc, sig, [spread]])


def features_from_particles(ps, loc_idx=(0, 1), include_spread: bool = True) -> np.ndarray:
    idx = list(loc_idx)
    locs = ps.thetas[:, idx]
    mu = ps.weights @ locs
    d = locs - mu
    cov = np.einsum("i,ij,ik->jk", ps.weights, d, d)
    return features_from_moments(mu, 0.5 * (cov + cov.T), include_spread)


def features_from_gaussian(belief, loc_idx=(0, 1), include_spread: bool = True) -> np.ndarray:
    idx = list(loc_idx)
    mu = belief.mu[idx]
    var = belief.var[idx]
    return features_from_moments(mu, np.diag(var), include_spread)


def feature_dim(loc_dim: int, include_spread: bool = True) -> int:
    return 2 * loc_dim + 1 if include_spread else loc_dim


def assemble_state(z: float, pose, features) -> np.ndarray:
    """psi = [o_t, p_t, belief features]."""
    return np.concatenate([[float(z)], np.asarray(pose, dtype=float),
                           np.asarray(features, dtype=float)])


# ---------------------------------------------------------------------------
# actor / critic

def _log_tanh_jacobian(u, l_step: float):
    """log |d(L tanh u)/du| summed over axes, stable for large |u|:
    log(1 - tanh^2 u) = log 4 - 2(|u| + log1p(exp(-2|u|)))."""
    u = np.asarray(u, dtype=float)
    au = np.abs(u)
    log_sech2 = math.log(4.0) - 2.0 * (au + np.log1p(np.exp(-2.0 * au)))
    return np.sum(math.log(l_step) + log_sech2, axis=-1)


class GaussianActor:
    """Diagonal Gaussian over pre-squash actions; state-independent log-std.

    The mu head is zero-initialized so the initial policy is centered.
    Scaling of psi is a fixed affine map (set once from the config) so the
    trunk sees O(1) inputs; it is part of the checkpoint.
    """

    def __init__(self, obs_dim: int, act_dim: int, rng: np.random.Generator,
                 l_step: float = 1.0, hidden: int = 128, init_sigma: float = 0.5):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.l_step = l_step
        self.trunk = MLP((obs_dim, hidden, hidden, act_dim), rng, final_zero=True)
        self.rho = np.full(act_dim, float(softplus_inv(init_sigma)))
        self.in_shift = np.zeros(obs_dim)
        self.in_scale = np.ones(obs_dim)

    def set_input_scaling(self, shift, scale):
        self.in_shift = np.asarray(shift, dtype=float).copy()
        self.in_scale = np.asarray(scale, dtype=float).copy()

    def _scale_in(self, psi):
        x = (np.asarray(psi, dtype=float) - self.in_shift) / self.in_scale
        return np.clip(x, -PSI_CLIP, PSI_CLIP)

    @property
    def sigma(self) -> np.ndarray:
        return np.maximum(softplus(self.rho), SIGMA_FLOOR)

    def dist_params(self, psi):
        """(mu_u, sigma_u) of the pre-squash Gaussian; sigma is state-free."""
        mu, _ = self.trunk.forward(self._scale_in(psi))
        return mu, self.sigma

    def sample(self, psi, rng: np.random.Generator):
        """Returns (action, u, log_prob) with the tanh Jacobian included."""
        mu, sig = self.dist_params(psi)
        u = mu + sig * rng.standard_normal(self.act_dim)
        a = self.l_step * np.tanh(u)
        logp = self._log_prob_u(u, mu, sig)
        return a, u, float(logp)

    def mean_action(self, psi) -> np.ndarray:
        """Deterministic evaluation-time action: squashed mean."""
        mu, _ = self.dist_params(psi)
        return self.l_step * np.tanh(mu)

    def _log_prob_u(self, u, mu, sig):
        t = (u - mu) / sig
        log_gauss = np.sum(-0.5 * t * t - np.log(sig) - 0.5 * LOG_2PI, axis=-1)
        return log_gauss - _log_tanh_jacobian(u, self.l_step)

    def log_prob(self, psi_batch, u_batch):
        """Batch log-probs of stored pre-squash actions under current params."""
        mu, cache = self.trunk.forward(self._scale_in(psi_batch))
        sig = self.sigma
        return self._log_prob_u(u_batch, mu, sig), (mu, cache)

    def entropy(self) -> float:
        """Closed-form entropy of the pre-squash diagonal Gaussian."""
        return float(np.sum(0.5 * math.log(2.0 * math.pi * math.e) + np.log(self.sigma)))

    def params(self):
        return self.trunk.params + [self.rho]


class Critic:
    def __init__(self, obs_dim: int, rng: np.random.Generator, hidden: int = 128):
        self.trunk = MLP((obs_dim, hidden, hidden, 1), rng)
        self.in_shift = np.zeros(obs_dim)
        self.in_scale = np.ones(obs_dim)

    def set_input_scaling(self, shift, scale):
        self.in_shift = np.asarray(shift, dtype=float).copy()
        self.in_scale = np.asarray(scale, dtype=float).copy()

    def value(self, psi):
        x = (np.asarray(psi, dtype=float) - self.in_shift) / self.in_scale
        x = np.clip(x, -PSI_CLIP, PSI_CLIP)
        out, cache = self.trunk.forward(x)
        if out.ndim == 0 or (np.asarray(psi).ndim == 1):
            return float(out[0]), cache
        return out[:, 0], cache


# ---------------------------------------------------------------------------
# rollout container + GAE

@dataclass
class Rollout:
    psis: list = field(default_factory=list)
    us: list = field(default_factory=list)
    log_probs: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    values: list = field(default_factory=list)
    dones: list = field(default_factory=list)
    bootstrap_value: float = 0.0

    def push(self, psi, u, log_prob, reward, value, done):
        self.psis.append(np.asarray(psi, dtype=float))
        self.us.append(np.asarray(u, dtype=float))
        self.log_probs.append(float(log_prob))
        self.rewards.append(float(reward))
        self.values.append(float(value))
        self.dones.append(bool(done))

    def __len__(self):
        return len(self.rewards)


def gae(rewards, values, dones, bootstrap_value: float, gamma: float, lam: float):
    """Backward-recursion GAE.

    rewards[t] is the reward produced by the transition taken at t;
    values[t] = V(psi_t); dones[t] marks the last transition of an episode
    (no bootstrap across it).  bootstrap_value is V at the state after the
    final transition, used only when dones[-1] is False.
    Returns (advantages, returns = advantages + values).
    """
    r = np.asarray(rewards, dtype=float)
    v = np.asarray(values, dtype=float)
    d = np.asarray(dones, dtype=bool)
    n = r.shape[0]
    adv = np.zeros(n)
    last = 0.0
    for t in range(n - 1, -1, -1):
        v_next = bootstrap_value if t == n - 1 else v[t + 1]
        nonterm = 0.0 if d[t] else 1.0
        delta = r[t] + gamma * v_next * nonterm - v[t]
        last = delta + gamma * lam * nonterm * last
        adv[t] = last
    return adv, adv + v


def clipped_objective(ratio, adv, eps_clip: float):
    """Per-sample PPO surrogate min(r A, clip(r) A)."""
    ratio = np.asarray(ratio, dtype=float)
    adv = np.asarray(adv, dtype=float)
    return np.minimum(ratio * adv, np.clip(ratio, 1.0 - eps_clip, 1.0 + eps_clip) * adv)


def normalize_advantages(adv):
    adv = np.asarray(adv, dtype=float)
    return (adv - adv.mean()) / (adv.std() + 1e-8)


# ---------------------------------------------------------------------------
# PPO update

@dataclass
class PPOConfig:
    gamma: float = 0.99
    lam: float = 0.95
    eps_clip: float = 0.2
    c_v: float = 0.5
    c_ent: float = 0.01
    epochs: int = 4
    minibatch: int = 64
    rollout_steps: int = 2048
    lr: float = 1e-3


def ppo_update(actor: GaussianActor, critic: Critic, rollouts, cfg: PPOConfig,
               rng: np.random.Generator, actor_opt: Adam, critic_opt: Adam):
    """Minibatched clipped-surrogate ascent over collected rollouts.

    Maximizes E[min(r A, clip(r) A)] - c_v E[(V - R)^2] + c_ent H(pi) by
    Adam on the actor (surrogate + entropy) and critic (value MSE) parts.
    Returns summary stats.  A non-finite minibatch loss aborts the epoch.
    """
    if isinstance(rollouts, Rollout):
        rollouts = [rollouts]
    psi = np.concatenate([np.stack(r.psis) for r in rollouts])
    u = np.concatenate([np.stack(r.us) for r in rollouts])
    logp_old = np.concatenate([np.asarray(r.log_probs) for r in rollouts])
    adv_list = []
    ret_list = []
    for r in rollouts:
        a, ret = gae(r.rewards, r.values, r.dones, r.bootstrap_value,
                     cfg.gamma, cfg.lam)
        adv_list.append(a)
        ret_list.append(ret)
    adv = normalize_advantages(np.concatenate(adv_list))
    ret = np.concatenate(ret_list)
    m = psi.shape[0]
    stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": actor.entropy(),
             "clip_frac": 0.0, "n_minibatches": 0}
    for _ in range(cfg.epochs):
        perm = rng.permutation(m)
        for start in range(0, m, cfg.minibatch):
            sel = perm[start:start + cfg.minibatch]
            b = sel.shape[0]
            logp_new, (mu, cache) = actor.log_prob(psi[sel], u[sel])
            sig = actor.sigma
            ratio = np.exp(logp_new - logp_old[sel])
            a_sel = adv[sel]
            obj = clipped_objective(ratio, a_sel, cfg.eps_clip)
            ent = actor.entropy()
            policy_loss = -float(obj.mean()) - cfg.c_ent * ent
            if not math.isfinite(policy_loss):
                return stats
            # gradient of -mean(obj) wrt logp: unclipped branch only
            active = np.where(a_sel >= 0.0, ratio < 1.0 + cfg.eps_clip,
                              ratio > 1.0 - cfg.eps_clip)
            g_logp = -(active * ratio * a_sel) / b
            # logp wrt mu and sigma of the pre-squash Gaussian
            t = (u[sel] - mu) / sig
            g_mu = g_logp[:, None] * (t / sig)
            g_sig = (g_logp[:, None] * (t * t - 1.0) / sig).sum(axis=0)
            g_sig += -cfg.c_ent / sig  # entropy term, per-batch mean = value
            trunk_grads, _ = actor.trunk.backward(cache, g_mu)
            gate = softplus(actor.rho) > SIGMA_FLOOR
            g_rho = g_sig * sigmoid(actor.rho) * gate
            actor_opt.step(actor.trunk.params + [actor.rho],
                           trunk_grads + [g_rho], lr=cfg.lr)

            v, vcache = critic.value(psi[sel])
            verr = v - ret[sel]
            value_loss = cfg.c_v * float(np.mean(verr * verr))
            if not math.isfinite(value_loss):
                return stats
            g_v = (cfg.c_v * 2.0 * verr / b)[:, None]
            critic_grads, _ = critic.trunk.backward(vcache, g_v)
            critic_opt.step(critic.trunk.params, critic_grads, lr=cfg.lr)

            stats["policy_loss"] += policy_loss
            stats["value_loss"] += value_loss
            stats["clip_frac"] += float(np.mean(~active))
            stats["n_minibatches"] += 1
    nm = max(stats["n_minibatches"], 1)
    stats["policy_loss"] /= nm
    stats["value_loss"] /= nm
    stats["clip_frac"] /= nm
    stats["entropy"] = actor.entropy()
    return stats


# ---------------------------------------------------------------------------
# checkpoints (same flat container as the student)

def save_policy(actor: GaussianActor, critic: Critic, path):
    arrays = {}
    for i, p in enumerate(actor.trunk.params):
        arrays[f"a{i}"] = p
    arrays["rho"] = actor.rho
    arrays["a_shift"] = actor.in_shift
    arrays["a_scale"] = actor.in_scale
    for i, p in enumerate(critic.trunk.params):
        arrays[f"c{i}"] = p
    arrays["c_shift"] = critic.in_shift
    arrays["c_scale"] = critic.in_scale
    meta = {
        "obs_dim": actor.obs_dim,
        "act_dim": actor.act_dim,
        "l_step": actor.l_step,
        "actor_sizes": list(actor.trunk.sizes),
        "critic_sizes": list(critic.trunk.sizes),
    }
    save_flat(path, "policy", arrays, meta)


def load_policy(path):
    kind, meta, arrays = load_flat(path)
    if kind != "policy":
        raise ValueError(f"not a policy checkpoint: kind={kind!r}")
    rng = np.random.default_rng(0)
    actor = GaussianActor(meta["obs_dim"], meta["act_dim"], rng,
                          l_step=meta["l_step"], hidden=meta["actor_sizes"][1])
    critic = Critic(meta["obs_dim"], rng, hidden=meta["critic_sizes"][1])
    for i in range(len(actor.trunk.params)):
        actor.trunk.params[i][...] = arrays[f"a{i}"]
    actor.rho[...] = arrays["rho"]
    actor.set_input_scaling(arrays["a_shift"], arrays["a_scale"])
    for i in range(len(critic.trunk.params)):
        critic.trunk.params[i][...] = arrays[f"c{i}"]
    critic.set_input_scaling(arrays["c_shift"], arrays["c_scale"])
    return actor, critic
