"""Jitted per-particle kernels for the filter hot loops.

These are performance twins of the numpy reference implementations in
fields.py / sensor.py / pf.py; parity tests pin them together.  The fused
update returns the full weighted moments (the teacher feature path restricts
full-space moments to the location block), so per-step cost is genuinely
linear in the particle count.
"""

import math

import numpy as np
from numba import njit

FOUR_PI = 4.0 * math.pi
EPS_SING = 1e-9
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@njit(cache=True)
def _plume2d_one(px, py, x, y, q, ux, uy, alpha, lam):
    dx = px - x
    dy = py - y
    r = math.sqrt(dx * dx + dy * dy)
    if r < EPS_SING:
        r = EPS_SING
    expo = -r / lam - (dx * ux + dy * uy) / (2.0 * alpha)
    return q / (FOUR_PI * alpha * r) * math.exp(expo)


@njit(cache=True)
def _halfspace_one(px, py, pz, x, y, z, q, vx, vy, vz, alpha, lam):
    dx = px - x
    dy = py - y
    out = 0.0
    for dz in (pz - z, pz + z):
        r = math.sqrt(dx * dx + dy * dy + dz * dz)
        if r < EPS_SING:
            r = EPS_SING
        expo = (vx * dx + vy * dy + vz * dz) / (2.0 * alpha) - r / lam
        out += q / (FOUR_PI * alpha * r) * math.exp(expo)
    return out


@njit(cache=True)
def field_2d(px, py, X, out):
    for i in range(X.shape[0]):
        out[i] = _plume2d_one(px, py, X[i, 0], X[i, 1], X[i, 2], X[i, 3],
                              X[i, 4], X[i, 5], X[i, 6])


@njit(cache=True)
def field_3d(px, py, pz, X, wind_sign, out):
    for i in range(X.shape[0]):
        out[i] = _halfspace_one(px, py, pz, X[i, 0], X[i, 1], X[i, 2], X[i, 3],
                                wind_sign * X[i, 4], wind_sign * X[i, 5],
                                wind_sign * X[i, 6], X[i, 7], X[i, 8])


@njit(cache=True)
def _mixture_loglik_one(z, h, pd, sb, sm):
    # log of (1-pd) N(z;0,sb^2) + pd N(z;h,sm^2), max-shifted for stability
    if pd <= 0.0:
        t = z / sb
        return -0.5 * t * t - math.log(sb) - LOG_SQRT_2PI
    if pd >= 1.0:
        t = (z - h) / sm
        return -0.5 * t * t - math.log(sm) - LOG_SQRT_2PI
    tb = z / sb
    tf = (z - h) / sm
    la = math.log(1.0 - pd) - 0.5 * tb * tb - math.log(sb) - LOG_SQRT_2PI
    lb = math.log(pd) - 0.5 * tf * tf - math.log(sm) - LOG_SQRT_2PI
    m = la if la > lb else lb
    return m + math.log(math.exp(la - m) + math.exp(lb - m))


@njit(cache=True)
def _update_and_moments(z, h, X, w_in, w_out, mu, cov, pd, sb, sm):
    """Weight update against intensities h plus ESS and full weighted moments.

    Returns (lik_sum, ess); lik_sum == 0 flags a degenerate update and leaves
    w_out / mu / cov unspecified.
    """
    n, d = X.shape
    c_bg = (1.0 - pd) / (sb * math.sqrt(2.0 * math.pi))
    c_fg = pd / (sm * math.sqrt(2.0 * math.pi))
    tb = z / sb
    bg = c_bg * math.exp(-0.5 * tb * tb)
    s = 0.0
    for i in range(n):
        tf = (z - h[i]) / sm
        w_out[i] = w_in[i] * (bg + c_fg * math.exp(-0.5 * tf * tf))
        s += w_out[i]
    if s <= 0.0:
        return 0.0, 0.0
    inv = 1.0 / (s + 1e-300)
    sumsq = 0.0
    for j in range(d):
        mu[j] = 0.0
    for i in range(n):
        w_out[i] *= inv
        sumsq += w_out[i] * w_out[i]
        for j in range(d):
            mu[j] += w_out[i] * X[i, j]
    for j in range(d):
        for k in range(d):
            cov[j, k] = 0.0
    for i in range(n):
        wi = w_out[i]
        for j in range(d):
            dj = X[i, j] - mu[j]
            cov[j, j] += wi * dj * dj
            for k in range(j + 1, d):
                cov[j, k] += wi * dj * (X[i, k] - mu[k])
    for j in range(d):
        for k in range(j):
            cov[j, k] = cov[k, j]
    return s, 1.0 / sumsq


@njit(cache=True)
def pf_update_2d(z, px, py, X, w_in, w_out, mu, cov, pd, sb, sm):
    """Fused reweight + ESS + full moments for the planar plume."""
    h = np.empty(X.shape[0])
    field_2d(px, py, X, h)
    return _update_and_moments(z, h, X, w_in, w_out, mu, cov, pd, sb, sm)


@njit(cache=True)
def pf_update_3d(z, px, py, pz, X, w_in, w_out, mu, cov, wind_sign, pd, sb, sm):
    """3D half-space twin of pf_update_2d."""
    h = np.empty(X.shape[0])
    field_3d(px, py, pz, X, wind_sign, h)
    return _update_and_moments(z, h, X, w_in, w_out, mu, cov, pd, sb, sm)


@njit(cache=True)
def history_loglik_2d(X, Z, P, pd, sb, sm, out):
    """Per-particle log product of mixture likelihoods over the whole history."""
    n = X.shape[0]
    t = Z.shape[0]
    for i in range(n):
        acc = 0.0
        for k in range(t):
            h = _plume2d_one(P[k, 0], P[k, 1], X[i, 0], X[i, 1], X[i, 2],
                             X[i, 3], X[i, 4], X[i, 5], X[i, 6])
            acc += _mixture_loglik_one(Z[k], h, pd, sb, sm)
        out[i] = acc


@njit(cache=True)
def history_loglik_3d(X, Z, P, wind_sign, pd, sb, sm, out):
    n = X.shape[0]
    t = Z.shape[0]
    for i in range(n):
        acc = 0.0
        for k in range(t):
            h = _halfspace_one(P[k, 0], P[k, 1], P[k, 2], X[i, 0], X[i, 1],
                               X[i, 2], X[i, 3], wind_sign * X[i, 4],
                               wind_sign * X[i, 5], wind_sign * X[i, 6],
                               X[i, 7], X[i, 8])
            acc += _mixture_loglik_one(Z[k], h, pd, sb, sm)
        out[i] = acc


def warmup():
    """Force jit compilation of every kernel (cached on disk afterwards)."""
    X2 = np.ones((2, 7))
    X3 = np.ones((2, 9))
    w = np.full(2, 0.5)
    wo = np.empty(2)
    mu2 = np.empty(7)
    cov2 = np.empty((7, 7))
    mu3 = np.empty(9)
    cov3 = np.empty((9, 9))
    pf_update_2d(0.1, 0.0, 0.0, X2, w, wo, mu2, cov2, 0.9, 0.05, 0.05)
    pf_update_3d(0.1, 0.0, 0.0, 0.0, X3, w, wo, mu3, cov3, -1.0, 0.9, 0.05, 0.05)
    out = np.empty(2)
    Z = np.array([0.1])
    P2 = np.zeros((1, 2))
    P3 = np.zeros((1, 3))
    history_loglik_2d(X2, Z, P2, 0.9, 0.05, 0.05, out)
    history_loglik_3d(X3, Z, P3, -1.0, 0.9, 0.05, 0.05, out)
