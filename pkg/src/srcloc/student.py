"""Amortized diagonal-Gaussian posterior distilled from filter particles.

The net maps a short window of recent (reading, pose) pairs to the mean and
per-dimension log variance of a Gaussian over the full parameter vector.
Three stabilizers: hard log-variance clipping, epsilon-stabilized constant
(stop-gradient) particle weights in the loss, and online input standardization
frozen at deployment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nets import MLP, Adam, save_flat, load_flat

SIGMA_MIN = 1e-3
SIGMA_MAX = 10.0
LOG_VAR_MIN = 2.0 * math.log(SIGMA_MIN)
LOG_VAR_MAX = 2.0 * math.log(SIGMA_MAX)
LOG_2PI = math.log(2.0 * math.pi)
WEIGHT_EPS = 1e-12
# standardized inputs are clipped before the trunk; with only a step or two of
# running statistics the variance estimate is ~0 and the quotient explodes,
# which would pin the log-var head outside its clip range for good
STD_CLIP = 10.0


@dataclass
class GaussianBelief:
    mu: np.ndarray
    log_var: np.ndarray

    @property
    def var(self) -> np.ndarray:
        return np.exp(self.log_var)

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(0.5 * self.log_var)

    def nll(self, theta) -> float:
        """-log N(theta; mu, diag var)."""
        theta = np.asarray(theta, dtype=float)
        v = self.var
        return 0.5 * float(np.sum(LOG_2PI + self.log_var + (theta - self.mu) ** 2 / v))


class RunningStats:
    """Welford online mean / population variance per coordinate."""

    def __init__(self, dim: int):
        self.count = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def update(self, x):
        x = np.asarray(x, dtype=float)
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    @property
    def var(self) -> np.ndarray:
        if self.count == 0:
            return np.ones_like(self.m2)
        return self.m2 / self.count

    def standardize(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / np.sqrt(self.var + 1e-8)


class ObsWindow:
    """Fixed-length window of the K most recent (z, pose) pairs, zero-padded
    at episode start, flattened oldest-first.

    Readings span many decades, so z is stored arcsinh-compressed; feeding the
    raw value would let a single spike dominate the running statistics."""

    def __init__(self, k: int, pose_dim: int):
        self.k = k
        self.pose_dim = pose_dim
        self.buf = np.zeros((k, 1 + pose_dim))

    def push(self, z: float, pose):
        self.buf[:-1] = self.buf[1:]
        self.buf[-1, 0] = np.arcsinh(z)
        self.buf[-1, 1:] = np.asarray(pose, dtype=float)

    def vector(self) -> np.ndarray:
        return self.buf.ravel().copy()

    @property
    def dim(self) -> int:
        return self.k * (1 + self.pose_dim)


class StudentNet:
    """input -> 128 -> 128 -> [mu, log_var] with running input standardization.

    The head weights start at zero so the initial belief is exactly the head
    bias.  Passing the prior moments as that bias keeps the early q-dimension
    gradients bounded: with log_var starting at ~0 instead, the wide-range
    dimensions produce moment residuals of ~1e3 over variance 1 and the trunk
    saturates before the variance head can catch up."""

    def __init__(self, input_dim: int, theta_dim: int, rng: np.random.Generator,
                 hidden: int = 128, window: int = 8, pose_dim: int = 2,
                 head_bias_mu=None, head_bias_log_var=None):
        self.theta_dim = theta_dim
        self.window = window
        self.pose_dim = pose_dim
        self.mlp = MLP((input_dim, hidden, hidden, 2 * theta_dim), rng,
                       final_zero=True)
        if head_bias_mu is not None:
            self.mlp.params[-1][:theta_dim] = np.asarray(head_bias_mu, dtype=float)
        if head_bias_log_var is not None:
            self.mlp.params[-1][theta_dim:] = np.asarray(head_bias_log_var,
                                                         dtype=float)
        self.stats = RunningStats(input_dim)
        self.frozen_stats = False

    def observe_input(self, x):
        """Update the standardization statistics (training mode only)."""
        if not self.frozen_stats:
            self.stats.update(x)

    def _forward_raw(self, x, check=True):
        xs = np.clip(self.stats.standardize(x), -STD_CLIP, STD_CLIP)
        raw, cache = self.mlp.forward(xs, check=check)
        return raw, cache

    def forward(self, x) -> GaussianBelief:
        """Deterministic belief for one input vector; log_var hard-clipped."""
        raw, _ = self._forward_raw(x)
        d = self.theta_dim
        mu = raw[:d].copy()
        log_var = np.clip(raw[d:], LOG_VAR_MIN, LOG_VAR_MAX)
        return GaussianBelief(mu=mu, log_var=log_var)


def distill_loss_and_stats(belief: GaussianBelief, thetas, weights):
    """Weighted NLL of the particles under the belief, plus the sufficient
    statistics (s0, m1, m2) of the stabilized weights needed by the gradient.

    Weights are normalized by (sum + eps) and treated as constants.
    """
    thetas = np.asarray(thetas, dtype=float)
    w = np.asarray(weights, dtype=float)
    if thetas.shape[1] != belief.mu.shape[0]:
        raise ValueError("particle dimension does not match belief")
    wn = w / (w.sum() + WEIGHT_EPS)
    s0 = float(wn.sum())
    m1 = wn @ thetas
    m2 = wn @ (thetas * thetas)
    v = belief.var
    mu = belief.mu
    # sum_i wn_i * nll(theta_i), expanded in the sufficient statistics
    quad = m2 - 2.0 * mu * m1 + mu * mu * s0
    loss = float(np.sum(0.5 * s0 * (LOG_2PI + belief.log_var) + 0.5 * quad / v))
    return loss, (s0, m1, m2)


def distill_loss(belief: GaussianBelief, thetas, weights) -> float:
    return distill_loss_and_stats(belief, thetas, weights)[0]


def _loss_grads_wrt_head(belief: GaussianBelief, stats):
    """Gradient of the weighted NLL w.r.t. (mu, log_var), before the clip gate."""
    s0, m1, m2 = stats
    v = belief.var
    mu = belief.mu
    g_mu = (mu * s0 - m1) / v
    quad = m2 - 2.0 * mu * m1 + mu * mu * s0
    g_lv = 0.5 * s0 - 0.5 * quad / v
    return g_mu, g_lv


def student_loss_and_grads(net: StudentNet, x, thetas, weights):
    """Forward + hand-derived backward for one (input, particle set) pair.

    Returns (loss, grads aligned with net.mlp.params).  The log_var clip is a
    hard gate: zero gradient where the raw output left the clip range.
    """
    raw, cache = net._forward_raw(x)
    d = net.theta_dim
    mu = raw[:d]
    raw_lv = raw[d:]
    log_var = np.clip(raw_lv, LOG_VAR_MIN, LOG_VAR_MAX)
    belief = GaussianBelief(mu=mu, log_var=log_var)
    loss, stats = distill_loss_and_stats(belief, thetas, weights)
    g_mu, g_lv = _loss_grads_wrt_head(belief, stats)
    gate = (raw_lv > LOG_VAR_MIN) & (raw_lv < LOG_VAR_MAX)
    grad_out = np.concatenate([g_mu, g_lv * gate])
    grads, _ = net.mlp.backward(cache, grad_out)
    return loss, grads


def train_step(net: StudentNet, batch, opt: Adam, lr=None):
    """One Adam step on the mean distillation loss over the batch.

    batch: iterable of (input_vector, thetas, weights).  A non-finite loss
    aborts the step (params untouched) and returns the bad value.
    """
    total = 0.0
    acc = [np.zeros_like(p) for p in net.mlp.params]
    n = 0
    for x, thetas, weights in batch:
        loss, grads = student_loss_and_grads(net, x, thetas, weights)
        total += loss
        for a, g in zip(acc, grads):
            a += g
        n += 1
    if n == 0:
        raise ValueError("empty batch")
    mean_loss = total / n
    if not math.isfinite(mean_loss):
        return mean_loss
    for a in acc:
        a /= n
    opt.step(net.mlp.params, acc, lr=lr)
    return mean_loss


def save_student(net: StudentNet, path):
    arrays = {}
    for i, p in enumerate(net.mlp.params):
        arrays[f"p{i}"] = p
    arrays["stats_mean"] = net.stats.mean
    arrays["stats_m2"] = net.stats.m2
    meta = {
        "sizes": list(net.mlp.sizes),
        "theta_dim": net.theta_dim,
        "window": net.window,
        "pose_dim": net.pose_dim,
        "stats_count": net.stats.count,
        "log_var_min": LOG_VAR_MIN,
        "log_var_max": LOG_VAR_MAX,
    }
    save_flat(path, "student", arrays, meta)


def load_student(path) -> StudentNet:
    kind, meta, arrays = load_flat(path)
    if kind != "student":
        raise ValueError(f"not a student checkpoint: kind={kind!r}")
    sizes = meta["sizes"]
    net = StudentNet(sizes[0], meta["theta_dim"], np.random.default_rng(0),
                     hidden=sizes[1], window=meta["window"],
                     pose_dim=meta["pose_dim"])
    for i in range(len(net.mlp.params)):
        net.mlp.params[i][...] = arrays[f"p{i}"]
    net.stats.mean[...] = arrays["stats_mean"]
    net.stats.m2[...] = arrays["stats_m2"]
    net.stats.count = int(meta["stats_count"])
    net.frozen_stats = True
    return net
