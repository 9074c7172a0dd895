import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spectator import model
from spectator.model import ConfigError, SpectatorConfig, derive
from spectator.spectra import Lorentzian, White


def test_trivial_feedforward_off():
    cfg = SpectatorConfig(beta_s=1.0, lambda1=1.0, alpha_s=0.0)
    d = derive(cfg)
    assert d.gamma_ff == 0.0
    assert d.kappa_phi == 1.0
    assert d.n2 == 0.0
    assert d.n1 == 1.0


def test_n2_near_fig1b_operating_point():
    # lambda2 ~ 0.74 gives about 0.6 squeezing photons
    d = derive(SpectatorConfig(beta_s=0.5, lambda1=1.0, lambda2=0.74))
    assert abs(d.n2 - 0.6) < 0.05


def test_gamma_ff_roundtrip_fig1b_params():
    cfg = SpectatorConfig.from_photons(beta_s=0.5, n1=1000.0, alpha_s=1.0)
    d = cfg.derived
    alpha = model.alpha_from_gamma(cfg.beta_s, d.kappa_phi, d.n1, cfg.kappa_c, d.gamma_ff)
    assert alpha == pytest.approx(1.0, rel=1e-12)
    np.testing.assert_allclose(d.gamma_ff, 1.0 / (64 * 0.25 * 1000))


@pytest.mark.parametrize(
    "kwargs, code",
    [
        (dict(beta_s=1, lambda1=1, lambda2=1.0), "bad_lambda2"),
        (dict(beta_s=1, lambda1=1, lambda2=1.3), "bad_lambda2"),
        (dict(beta_s=1, lambda1=0, alpha_s=1.0), "undefined_transduction"),
        (dict(beta_s=1, lambda1=1, eta=1.5), "bad_eta"),
        (dict(beta_s=-1, lambda1=1), "bad_beta_s"),
        (dict(beta_s=1, lambda1=1, kappa_i=-0.1), "bad_kappa_i"),
        (dict(beta_s=1, lambda1=1, tau_d=-1.0), "bad_tau_d"),
        (dict(beta_s=1, lambda1=1, alpha_s=float("nan")), "bad_alpha_s"),
    ],
)
def test_rejections(kwargs, code):
    with pytest.raises(ConfigError) as exc:
        SpectatorConfig(**kwargs)
    assert exc.value.code == code


def test_zero_lambda1_allowed_without_feedforward():
    cfg = SpectatorConfig(beta_s=1, lambda1=0, alpha_s=0)
    assert cfg.derived.gamma_ff == 0


configs = st.builds(
    SpectatorConfig,
    beta_s=st.floats(1e-3, 10),
    lambda1=st.floats(1e-3, 1e3),
    lambda2=st.floats(0, 0.999),
    alpha_s=st.floats(1e-3, 5),
    eta=st.floats(0, 1),
    kappa_i=st.floats(0, 2),
)


@settings(max_examples=1000, deadline=None)
@given(configs)
def test_alpha_roundtrip(cfg):
    d = cfg.derived
    assert d.gamma_ff >= 0 and d.n1 >= 0
    back = model.alpha_from_gamma(cfg.beta_s, d.kappa_phi, d.n1, cfg.kappa_c, d.gamma_ff)
    assert abs(back - cfg.alpha_s) <= 1e-12 * cfg.alpha_s


@settings(max_examples=200, deadline=None)
@given(configs)
def test_derived_invariants(cfg):
    d = cfg.derived
    assert d.kappa_phi > 0 and d.kappa_a > 0
    assert d.kappa_tot == cfg.kappa_c + cfg.kappa_i
    lam2 = cfg.lambda2
    assert d.n2 == 0.5 * lam2**2 / (1 - lam2**2)
    assert d.ncav == d.n1 + d.n2
    assert d.alpha_ideal == pytest.approx(1 + cfg.kappa_i / cfg.kappa_c, rel=1e-15)


@given(st.floats(0, 1e6))
def test_lambda2_for_n2_inverts(n2):
    lam = model.lambda2_for_n2(n2)
    assert 0 <= lam < 1
    np.testing.assert_allclose(0.5 * lam**2 / (1 - lam**2), n2, rtol=1e-9, atol=1e-15)


def test_linear_noise_white_closed_form():
    cfg = SpectatorConfig(beta_s=1.0, lambda1=1.0)
    m = model.validity_linear_noise(cfg, White(0.04))
    np.testing.assert_allclose(m, 0.01, rtol=1e-8)
    np.testing.assert_allclose(model.validity_linear_noise(cfg.replace(beta_s=2.0), White(0.04)), 0.04, rtol=1e-8)
    assert model.validity_linear_noise(cfg, White(0.0)) == 0.0


def test_fig1b_gates_pass():
    S = White(1e-3)
    cfg = SpectatorConfig(beta_s=0.5, lambda1=1.0, lambda2=0.74)
    assert model.passes_linear_noise(cfg, S)
    assert model.validity_squeezing(cfg, S).passed


def test_squeezing_trivial_at_lambda2_zero():
    cfg = SpectatorConfig(beta_s=1.0, lambda1=1.0)
    # margin just below 1/16
    S = White(4 * 0.0624)
    assert model.validity_linear_noise(cfg, S) < 1 / 16
    assert model.validity_squeezing(cfg, S).passed


def test_quasistatic_limit():
    # narrow Lorentzian of variance sigma^2 = S0 gamma / 4 -> margin beta^2 sigma^2 / 4
    beta, sigma2 = 0.7, 1e-3
    for gamma in (1e-3, 1e-4):
        S = Lorentzian(4 * sigma2 / gamma, gamma)
        m = model.validity_linear_noise(SpectatorConfig(beta_s=beta, lambda1=1.0), S)
        np.testing.assert_allclose(m, beta**2 * sigma2 / 4, rtol=5 * gamma)


def test_lambda2_max_solves_equality():
    cfg = SpectatorConfig(beta_s=1.0, lambda1=1.0)
    gate = model.validity_squeezing(cfg, White(0.01))
    np.testing.assert_allclose((1 - gate.lambda2_max) ** 4, gate.limit, rtol=1e-12)
    assert model.validity_squeezing(cfg.replace(lambda2=gate.lambda2_max * 0.999), White(0.01)).passed
    assert not model.validity_squeezing(cfg.replace(lambda2=min(gate.lambda2_max * 1.001 + 1e-6, 0.999)), White(0.01)).passed


def test_lambda2_max_monotone():
    grid = np.geomspace(1e-4, 1e-1, 8)
    for beta in (0.3, 1.0):
        lm = [model.validity_squeezing(SpectatorConfig(beta_s=beta, lambda1=1.0), White(s)).lambda2_max for s in grid]
        assert np.all(np.diff(lm) <= 0)
    lm = [model.validity_squeezing(SpectatorConfig(beta_s=b, lambda1=1.0), Lorentzian(0.01, 2.0)).lambda2_max
          for b in np.linspace(0.1, 3, 8)]
    assert np.all(np.diff(lm) <= 0)


def test_mapping_variants():
    a = model.config_from_mapping({"beta_s": 1, "n1": 100}).config
    np.testing.assert_allclose(a.n1, 100)
    b = model.config_from_mapping({"beta_s": 1, "ncav": 1000, "n2": 0.6}).config
    np.testing.assert_allclose(b.derived.n2, 0.6, rtol=1e-12)
    np.testing.assert_allclose(b.derived.ncav, 1000, rtol=1e-12)
    with pytest.raises(ConfigError) as exc:
        model.config_from_mapping({"beta_s": 1, "n1": 1, "lambda1": 1})
    assert exc.value.code == "conflicting_drive"


def test_absolute_units():
    ing = model.config_from_mapping(
        {"units": "absolute", "kappa_c": 2e6, "kappa_i": 2e4, "tau_d": 1e-7, "beta_s": 1, "n1": 10}
    )
    assert ing.rate_scale == 2e6
    assert ing.config.kappa_c == 1.0
    np.testing.assert_allclose(ing.config.kappa_i, 1e-2)
    np.testing.assert_allclose(ing.config.tau_d, 0.2)


def test_config_immutable():
    cfg = SpectatorConfig(beta_s=1.0, lambda1=1.0)
    with pytest.raises(Exception):
        cfg.beta_s = 2.0
    assert math.isclose(cfg.replace(beta_s=2.0).beta_s, 2.0)
