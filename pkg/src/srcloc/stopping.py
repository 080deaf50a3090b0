"""Spread-based stopping certificate and coverage radii.

Spread is the root total variance of the source-location belief:
sqrt(trace of the location covariance block) = sqrt(E |L - mu_L|^2).
"""

from __future__ import annotations

import logging
import math

import numpy as np

log = logging.getLogger(__name__)


def spread_particles(ps, loc_idx=(0, 1)) -> float:
    """Weighted RMS distance of particle locations to their weighted mean.

    Computed directly (not via the covariance); equals sqrt(trace) of the
    location block of the weighted covariance.
    """
    idx = list(loc_idx)
    locs = ps.thetas[:, idx]
    mu = ps.weights @ locs
    d = locs - mu
    return math.sqrt(float(np.sum(ps.weights * np.sum(d * d, axis=1))))


def spread_gaussian(sigma) -> float:
    """Spread of a diagonal Gaussian belief: sqrt(sum of location variances).

    sigma holds the per-axis standard deviations of the location block.
    """
    s = np.asarray(sigma, dtype=float)
    return math.sqrt(float(np.sum(s * s)))


def should_stop(spread: float, zeta: float) -> bool:
    """Strict certificate: stop only when spread < zeta.  Ties do not stop.

    A non-finite spread never stops (logged): an invalid belief must not
    fire the certificate.
    """
    if not math.isfinite(spread):
        log.warning("non-finite spread %r: certificate suppressed", spread)
        return False
    return spread < zeta


def markov_bound(spread: float, delta: float) -> float:
    """P(|L - mu_L| >= delta) <= min(1, spread^2 / delta^2), any distribution."""
    if delta <= 0.0:
        raise ValueError("delta must be > 0")
    return min(1.0, (spread / delta) ** 2)


def chi2_3_cdf(x: float) -> float:
    """CDF of chi-square with 3 dof: the regularized lower incomplete gamma
    P(3/2, x/2) = erf(sqrt(x/2)) - sqrt(2x/pi) exp(-x/2)."""
    if x <= 0.0:
        return 0.0
    return math.erf(math.sqrt(0.5 * x)) - math.sqrt(2.0 * x / math.pi) * math.exp(-0.5 * x)


def chi2_3_quantile(p: float, tol: float = 1e-10) -> float:
    """Inverse of chi2_3_cdf by bisection to tol (no special-function dependency)."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    lo, hi = 0.0, 1.0
    while chi2_3_cdf(hi) < p:
        hi *= 2.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if chi2_3_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def credible_radius_gaussian(spread: float, delta: float, dim: int = 2) -> float:
    """Radius sqrt(c) * spread of a >= 1-delta credible ball around the mean
    of a Gaussian location belief.

    c is the (1-delta) chi-square quantile with dim degrees of freedom,
    closed form -2 ln delta for dim 2.  Using the full spread (not the
    per-axis std) makes the ball conservative for any covariance shape.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if dim == 2:
        c = -2.0 * math.log(delta)
    elif dim == 3:
        c = chi2_3_quantile(1.0 - delta)
    else:
        raise ValueError("dim must be 2 or 3")
    return math.sqrt(c) * spread
