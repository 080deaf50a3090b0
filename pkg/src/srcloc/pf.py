"""Bootstrap particle filter over static source parameters.

Particles never move during reweighting (the target is a fixed parameter
vector); diversity is restored by systematic resampling plus Metropolis
rejuvenation against the full observation history.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .sensor import SensorParams, log_likelihood_from_intensity, likelihood_from_intensity


class DegenerateUpdateError(RuntimeError):
    """Every particle got exactly zero likelihood; the update is undefined."""


# deployment purity guard: inside forbid_particles() any ParticleSet
# construction is an error, and a counter supports zero-construction asserts
_forbid_depth = 0
construction_count = 0


@contextmanager
def forbid_particles():
    global _forbid_depth
    _forbid_depth += 1
    try:
        yield
    finally:
        _forbid_depth -= 1


@dataclass
class PriorBox:
    """Axis-aligned uniform prior over the parameter vector."""

    lows: np.ndarray
    highs: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        self.lows = np.asarray(self.lows, dtype=float)
        self.highs = np.asarray(self.highs, dtype=float)
        if self.lows.shape != self.highs.shape:
            raise ValueError("prior bounds must have matching shapes")
        if not np.all(self.lows < self.highs):
            raise ValueError("prior must satisfy low < high in every dimension")

    @property
    def dim(self) -> int:
        return self.lows.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.highs - self.lows

    def contains(self, thetas: np.ndarray) -> np.ndarray:
        t = np.atleast_2d(thetas)
        return np.all((t >= self.lows) & (t <= self.highs), axis=1)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lows, self.highs, size=(n, self.dim))


@dataclass
class ParticleSet:
    """Weighted ensemble; weights live on the simplex.

    pre_resample_weights caches the post-update weights so the information
    gain can always be computed from the un-resampled vector.
    """

    thetas: np.ndarray
    weights: np.ndarray
    step: int = 0
    pre_resample_weights: Optional[np.ndarray] = None

    def __post_init__(self):
        global construction_count
        if _forbid_depth > 0:
            raise RuntimeError("ParticleSet constructed inside a particle-free region")
        construction_count += 1

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def validate(self, tol: float = 1e-12):
        if self.thetas.ndim != 2 or self.thetas.shape[0] != self.weights.shape[0]:
            raise ValueError("thetas must be (N, d) aligned with weights")
        if self.n < 2:
            raise ValueError("need at least 2 particles")
        if np.any(self.weights < 0.0):
            raise ValueError("negative weight")
        if abs(float(self.weights.sum()) - 1.0) > tol:
            raise ValueError("weights must sum to 1")
        return self


def init_particles(prior: PriorBox, n: int, rng: np.random.Generator) -> ParticleSet:
    """Uniform draws from the prior box with uniform weights."""
    if n < 2:
        raise ValueError("need at least 2 particles")
    thetas = prior.sample(n, rng)
    return ParticleSet(thetas=thetas, weights=np.full(n, 1.0 / n))


def reweight(ps: ParticleSet, z: float, p, field, sp: SensorParams,
             eps: float = 1e-300) -> ParticleSet:
    """Bayes update of the weights for one reading; particles do not move.

    Raises DegenerateUpdateError when every particle has zero likelihood.
    The normalizer is stabilized by eps; the updated (pre-resample) weights
    are cached on the returned set.
    """
    h = field.intensity_batch(p, ps.thetas)
    lik = likelihood_from_intensity(z, h, sp)
    wt = ps.weights * lik
    s = float(wt.sum())
    if not s > 0.0:
        raise DegenerateUpdateError("all-zero likelihood at step %d" % (ps.step + 1))
    w = wt / (s + eps)
    return ParticleSet(thetas=ps.thetas, weights=w, step=ps.step + 1,
                       pre_resample_weights=w)


def ess(weights: np.ndarray) -> float:
    """Effective sample size 1 / sum(w^2) for normalized weights."""
    w = np.asarray(weights, dtype=float)
    return 1.0 / float(np.sum(w * w))


def systematic_resample(ps: ParticleSet, rng: np.random.Generator) -> ParticleSet:
    """Systematic (single-offset, stride 1/N) resampling; resets weights to uniform."""
    n = ps.n
    u = rng.uniform()
    positions = (u + np.arange(n)) / n
    csum = np.cumsum(ps.weights)
    csum[-1] = 1.0  # guard fp round-down at the last atom
    idx = np.searchsorted(csum, positions, side="left")
    return ParticleSet(thetas=ps.thetas[idx].copy(), weights=np.full(n, 1.0 / n),
                       step=ps.step, pre_resample_weights=ps.pre_resample_weights)


def weighted_moments(ps: ParticleSet):
    """Weighted mean and covariance of the ensemble; cov is symmetrized."""
    w = ps.weights
    mu = w @ ps.thetas
    d = ps.thetas - mu
    cov = np.einsum("i,ij,ik->jk", w, d, d)
    cov = 0.5 * (cov + cov.T)
    return mu, cov


def _history_loglik(thetas: np.ndarray, hist_z: np.ndarray, hist_p: np.ndarray,
                    field, sp: SensorParams) -> np.ndarray:
    """Log product of per-reading mixture likelihoods for each theta row."""
    out = np.empty(thetas.shape[0])
    name = getattr(field, "name", None)
    X = np.ascontiguousarray(thetas)
    if name == "plume2d":
        kernels.history_loglik_2d(X, hist_z, hist_p, sp.p_d, sp.sigma_bg,
                                  sp.sigma_meas, out)
        return out
    if name == "halfspace3d":
        kernels.history_loglik_3d(X, hist_z, hist_p, field.wind_sign, sp.p_d,
                                  sp.sigma_bg, sp.sigma_meas, out)
        return out
    out[:] = 0.0
    for k in range(hist_z.shape[0]):
        h = field.intensity_batch(hist_p[k], thetas)
        out += log_likelihood_from_intensity(float(hist_z[k]), h, sp)
    return out


def mh_rejuvenate(ps: ParticleSet, history, prior: PriorBox, field,
                  sp: SensorParams, rng: np.random.Generator,
                  h_t: float = 0.5, n_moves: int = 1,
                  full_cov: bool = False):
    """Random-walk Metropolis moves targeting prior x full-history likelihood.

    history is a pair (z_array, pose_matrix); an empty history targets the
    prior alone.  The proposal scale is h_t times the per-dimension weighted
    std of the current set (or its Cholesky factor when full_cov), held fixed
    across moves and floored at 1e-8 of the prior width.  Weights are left
    untouched.  Returns (rejuvenated set, acceptance fraction).
    """
    hist_z, hist_p = history
    hist_z = np.asarray(hist_z, dtype=float)
    hist_p = np.atleast_2d(np.asarray(hist_p, dtype=float))
    mu, cov = weighted_moments(ps)
    floor = 1e-8 * prior.widths
    if full_cov:
        jitter = np.diag(np.maximum(floor ** 2, 1e-300))
        chol = np.linalg.cholesky(cov + jitter)
    else:
        std = np.maximum(np.sqrt(np.maximum(np.diag(cov), 0.0)), floor)

    X = ps.thetas.copy()
    have_hist = hist_z.shape[0] > 0
    if have_hist:
        cur_ll = _history_loglik(X, hist_z, hist_p, field, sp)
    else:
        cur_ll = np.zeros(ps.n)
    accepted = 0
    for _ in range(n_moves):
        xi = rng.standard_normal(size=X.shape)
        if full_cov:
            prop = X + h_t * (xi @ chol.T)
        else:
            prop = X + h_t * std * xi
        inside = prior.contains(prop)
        prop_ll = np.full(ps.n, -np.inf)
        if np.any(inside):
            if have_hist:
                prop_ll[inside] = _history_loglik(prop[inside], hist_z, hist_p,
                                                  field, sp)
            else:
                prop_ll[inside] = 0.0
        # uniform prior cancels inside the box; outside is an automatic reject
        log_u = np.log(rng.uniform(size=ps.n))
        accept = inside & (log_u < (prop_ll - cur_ll))
        X[accept] = prop[accept]
        cur_ll[accept] = prop_ll[accept]
        accepted += int(accept.sum())
    rate = accepted / (ps.n * n_moves)
    out = ParticleSet(thetas=X, weights=ps.weights.copy(), step=ps.step,
                      pre_resample_weights=ps.pre_resample_weights)
    return out, rate


def pf_step_fast(thetas: np.ndarray, weights: np.ndarray, z: float, p, field,
                 sp: SensorParams):
    """Fused jitted reweight + ESS + full weighted moments for builtin fields.

    Mutates nothing; returns (new_weights, ess, mu, cov) where mu / cov are
    the weighted moments over the full parameter vector (restrict to loc_idx
    for location features).  Raises DegenerateUpdateError on an all-zero
    likelihood, like reweight.  Semantically identical to reweight + ess +
    weighted_moments (parity is tested); kept fused so per-step cost scales
    linearly in N.
    """
    d = thetas.shape[1]
    w_out = np.empty_like(weights)
    mu = np.empty(d)
    cov = np.empty((d, d))
    name = getattr(field, "name", None)
    if name == "plume2d":
        s, e = kernels.pf_update_2d(
            z, float(p[0]), float(p[1]), thetas, weights, w_out, mu, cov,
            sp.p_d, sp.sigma_bg, sp.sigma_meas)
    elif name == "halfspace3d":
        s, e = kernels.pf_update_3d(
            z, float(p[0]), float(p[1]), float(p[2]), thetas, weights, w_out,
            mu, cov, field.wind_sign, sp.p_d, sp.sigma_bg, sp.sigma_meas)
    else:
        h = field.intensity_batch(p, thetas)
        lik = likelihood_from_intensity(z, h, sp)
        wt = weights * lik
        s = float(wt.sum())
        if not s > 0.0:
            raise DegenerateUpdateError("all-zero likelihood")
        w_out = wt / (s + 1e-300)
        e = ess(w_out)
        mu = w_out @ thetas
        diff = thetas - mu
        cov = np.einsum("i,ij,ik->jk", w_out, diff, diff)
        cov = 0.5 * (cov + cov.T)
        return w_out, e, mu, cov
    if not s > 0.0:
        raise DegenerateUpdateError("all-zero likelihood")
    return w_out, float(e), mu, cov
