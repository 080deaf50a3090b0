"""Bernoulli-gated mixture sensor: sampling, density, log-density."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from srcloc.fields import Plume2DField
from srcloc.sensor import (SensorParams, likelihood,
                           likelihood_from_intensity,
                           log_likelihood_from_intensity, sample_observation)

import _oracles as orc

# 0.5 N(0;0,1) + 0.5 N(0;1,1), frozen from the two pdf evaluations
MIX_HALF_HALF = 0.320456502460288


def test_params_validation():
    with pytest.raises(ValueError):
        SensorParams(p_d=1.2)
    with pytest.raises(ValueError):
        SensorParams(sigma_bg=0.0)
    with pytest.raises(ValueError):
        SensorParams(sigma_meas=-0.1)


def test_defaults():
    sp = SensorParams()
    assert (sp.p_d, sp.sigma_bg, sp.sigma_meas) == (0.9, 0.05, 0.05)


def test_sample_degenerate_gate(rng):
    sp = SensorParams(p_d=1.0, sigma_bg=0.05, sigma_meas=1e-12)
    for _ in range(20):
        assert sample_observation(3.7, sp, rng) == pytest.approx(3.7, abs=1e-9)


def test_sample_pure_background(rng):
    sp = SensorParams(p_d=0.0, sigma_bg=1.0, sigma_meas=0.1)
    zs = np.array([sample_observation(100.0, sp, rng) for _ in range(10 ** 5)])
    assert abs(zs.mean()) < 3.0 / math.sqrt(10 ** 5)


def test_sample_mixture_mean(rng):
    # E z = p_d * h; se of the mixture with h=1, sigmas 0.1
    sp = SensorParams(p_d=0.7, sigma_bg=0.1, sigma_meas=0.1)
    n = 10 ** 6
    det = rng.uniform(size=n) < 0.7  # oracle draw, same model
    z_orc = np.where(det, 1.0 + 0.1 * rng.standard_normal(n), 0.1 * rng.standard_normal(n))
    se = z_orc.std() / math.sqrt(n)
    zs = np.array([sample_observation(1.0, sp, rng) for _ in range(n // 10)])
    assert abs(zs.mean() - 0.7) < 3.0 * z_orc.std() / math.sqrt(n // 10)
    assert abs(z_orc.mean() - 0.7) < 3.0 * se  # oracle sanity


def test_density_theta_free_when_blind():
    sp = SensorParams(p_d=0.0, sigma_bg=0.3, sigma_meas=0.1)
    a = likelihood_from_intensity(0.2, 5.0, sp)
    b = likelihood_from_intensity(0.2, 500.0, sp)
    assert a == b == pytest.approx(orc.norm_pdf(0.2, 0.0, 0.3), rel=1e-12)


def test_density_mode_height():
    sp = SensorParams(p_d=1.0, sigma_bg=0.3, sigma_meas=0.25)
    got = likelihood_from_intensity(4.0, 4.0, sp)
    assert got == pytest.approx(1.0 / (0.25 * math.sqrt(2 * math.pi)), rel=1e-12)


def test_density_frozen_example():
    sp = SensorParams(p_d=0.5, sigma_bg=1.0, sigma_meas=1.0)
    got = likelihood_from_intensity(0.0, 1.0, sp)
    assert got == pytest.approx(MIX_HALF_HALF, rel=1e-9)
    assert got == pytest.approx(orc.mixture_pdf_reference(0.0, 1.0, 0.5, 1.0, 1.0), rel=1e-12)


def test_density_matches_reference(rng):
    for _ in range(200):
        sp = SensorParams(p_d=float(rng.uniform(0, 1)),
                          sigma_bg=float(rng.uniform(0.01, 2)),
                          sigma_meas=float(rng.uniform(0.01, 2)))
        z = float(rng.normal(0, 3))
        h = float(rng.uniform(0, 10))
        want = orc.mixture_pdf_reference(z, h, sp.p_d, sp.sigma_bg, sp.sigma_meas)
        assert likelihood_from_intensity(z, h, sp) == pytest.approx(want, rel=1e-12)


def test_density_integrates_to_one():
    for h, pd in ((0.0, 0.5), (1.0, 0.9), (7.5, 0.2)):
        total = orc.mixture_pdf_integral(h, pd, 0.05, 0.05)
        assert total == pytest.approx(1.0, abs=1e-4)


def test_log_density_consistent(rng):
    sp = SensorParams()
    h = rng.uniform(0, 5, size=64)
    z = 0.73
    dens = likelihood_from_intensity(z, h, sp)
    logd = log_likelihood_from_intensity(z, h, sp)
    np.testing.assert_allclose(np.exp(logd), dens, rtol=1e-12)


def test_log_density_edge_gates():
    # p_d of exactly 0 and 1 must not produce NaN
    z, h = 0.4, 2.0
    blind = log_likelihood_from_intensity(z, np.array([h]), SensorParams(p_d=0.0))
    assert np.isfinite(blind).all()
    always = log_likelihood_from_intensity(z, np.array([h]), SensorParams(p_d=1.0))
    assert np.isfinite(always).all()


def test_log_density_survives_underflow():
    # intensity far from z: raw density underflows, log path must not -inf out
    sp = SensorParams()
    logd = log_likelihood_from_intensity(0.0, np.array([1e6]), sp)
    assert np.isfinite(logd).all()
    # the background component keeps the mixture well above the foreground tail
    assert logd[0] == pytest.approx(
        math.log((1 - sp.p_d) * orc.norm_pdf(0.0, 0.0, sp.sigma_bg)), rel=1e-9)


def test_likelihood_clamps_singular_field_query():
    field = Plume2DField()
    theta = np.array([0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0])
    sp = SensorParams()
    v = likelihood(0.1, (0.0, 0.0), theta, field, sp)  # pose exactly at source
    assert math.isfinite(v) and v > 0.0


def test_self_consistency_entropy(rng):
    # mean self log-density of draws approximates -H(mixture)
    sp = SensorParams(p_d=0.7, sigma_bg=0.2, sigma_meas=0.1)
    h = 1.0
    n = 10 ** 5
    zs = np.array([sample_observation(h, sp, rng) for _ in range(n)])
    ll = log_likelihood_from_intensity(zs[0], np.array([h]), sp)  # shape check
    assert ll.shape == (1,)
    lls = np.array([float(log_likelihood_from_intensity(float(z), h, sp)) for z in zs])
    want = -orc.mixture_entropy_quadrature(h, sp.p_d, sp.sigma_bg, sp.sigma_meas)
    se = lls.std() / math.sqrt(n)
    assert abs(lls.mean() - want) < 3.0 * se


@given(st.floats(-5, 5), st.floats(0, 20))
def test_log_density_finite_everywhere(z, h):
    # the log path never underflows: both component log-densities are finite
    sp = SensorParams()
    assert math.isfinite(log_likelihood_from_intensity(z, h, sp))


@given(st.floats(-5, 5), st.floats(0, 20))
def test_density_positive(z, h):
    # raw density positivity holds wherever at least one component is
    # representable; with unit sigmas every z in range is within ~25 sigma
    sp = SensorParams(p_d=0.5, sigma_bg=1.0, sigma_meas=1.0)
    assert likelihood_from_intensity(z, h, sp) > 0.0
