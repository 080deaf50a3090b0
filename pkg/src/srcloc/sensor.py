"""Bernoulli-gated Gaussian observation model.

With probability p_d the sensor reports the local intensity plus N(0, sigma_meas^2)
noise, otherwise pure background noise N(0, sigma_bg^2).  The marginal likelihood
is the two-component mixture used everywhere downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import EPS_SING, SingularPointError

SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass
class SensorParams:
    p_d: float = 0.9
    sigma_bg: float = 0.05
    sigma_meas: float = 0.05

    def __post_init__(self):
        if not 0.0 <= self.p_d <= 1.0:
            raise ValueError("p_d must lie in [0, 1]")
        if self.sigma_bg <= 0.0 or self.sigma_meas <= 0.0:
            raise ValueError("noise scales must be > 0")


def sample_observation(h: float, sp: SensorParams, rng: np.random.Generator) -> float:
    """Draw one reading given true intensity h.  Detection gate first, then noise."""
    detected = rng.uniform() < sp.p_d
    if detected:
        return h + sp.sigma_meas * rng.standard_normal()
    return sp.sigma_bg * rng.standard_normal()


def _norm_pdf(z, mean, sigma):
    t = (z - mean) / sigma
    return np.exp(-0.5 * t * t) / (sigma * SQRT_2PI)


def likelihood_from_intensity(z: float, h, sp: SensorParams):
    """Mixture density (1-p_d) N(z; 0, sigma_bg^2) + p_d N(z; h, sigma_meas^2).

    h may be a scalar or an array of intensities; broadcasts accordingly.
    """
    bg = (1.0 - sp.p_d) * _norm_pdf(z, 0.0, sp.sigma_bg)
    fg = sp.p_d * _norm_pdf(z, np.asarray(h, dtype=float), sp.sigma_meas)
    return bg + fg


def log_likelihood_from_intensity(z: float, h, sp: SensorParams):
    """Stable log of the mixture density; tolerates p_d of exactly 0 or 1."""
    h = np.asarray(h, dtype=float)
    tb = (z - 0.0) / sp.sigma_bg
    tf = (z - h) / sp.sigma_meas
    log_bg = -0.5 * tb * tb - math.log(sp.sigma_bg * SQRT_2PI)
    log_fg = -0.5 * tf * tf - math.log(sp.sigma_meas * SQRT_2PI)
    with np.errstate(divide="ignore"):
        a = math.log(1.0 - sp.p_d) + log_bg if sp.p_d < 1.0 else -np.inf
        b = np.log(sp.p_d) + log_fg if sp.p_d > 0.0 else np.full_like(h, -np.inf)
    return np.logaddexp(a, b)


def likelihood(z: float, p, theta_row, field, sp: SensorParams) -> float:
    """Mixture likelihood of reading z at pose p under source parameters theta_row.

    Singular field queries are clamped to the intensity at radius EPS_SING so
    the likelihood stays finite everywhere (the scalar field query would raise).
    """
    try:
        h = field.intensity(p, theta_row)
    except SingularPointError:
        h = float(field.intensity_batch(p, np.asarray(theta_row, dtype=float)[None, :])[0])
    return float(likelihood_from_intensity(z, h, sp))


__all__ = [
    "SensorParams",
    "sample_observation",
    "likelihood",
    "likelihood_from_intensity",
    "log_likelihood_from_intensity",
    "EPS_SING",
]
