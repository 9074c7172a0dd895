import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spectator import coherence, spectra
from spectator.coherence import (
    break_even_time,
    chi,
    chi_delay,
    chi_env,
    chi_init,
    filter_correlated,
    filter_fid,
    filter_uncorrelated,
    lambda_imp,
    long_time_rate,
    tphi,
)
from spectator.model import SpectatorConfig
from spectator.spectra import Lorentzian, Tabulated, White


def cfg_(n1=100.0, **kw):
    kw.setdefault("beta_s", 1.0)
    return SpectatorConfig.from_photons(n1=n1, **kw)


# -- filters ---------------------------------------------------------------


def test_fid_trivial():
    assert filter_fid(3.0, 0.0) == 0
    assert filter_fid(0.0, 5.0) == 0


@given(st.floats(-1e3, 1e3), st.floats(0, 1e3))
def test_fid_trig_identity(w, t):
    np.testing.assert_allclose(abs(filter_fid(w, t)) ** 2, 4 * math.sin(w * t / 2) ** 2, atol=1e-9)


def test_correlated_examples():
    w = np.linspace(-20, 20, 41)
    np.testing.assert_allclose(filter_correlated(w, 2.0, 0.0, 0.7, 1.0), filter_fid(w, 2.0))
    assert abs(filter_correlated(1e-12, 1.0, 1.0, 1.0, 1.5)) < 1e-20
    kp = 1.7
    Y = filter_correlated(w, 2.0, 1.0, 1.0, kp)
    np.testing.assert_allclose(np.abs(Y) ** 2, w**2 / (w**2 + kp**2 / 4) * np.abs(filter_fid(w, 2.0)) ** 2, atol=1e-13)


@settings(max_examples=100)
@given(st.floats(-50, 50), st.floats(0, 20), st.floats(0, 3), st.floats(0, 1), st.floats(0.1, 5))
def test_uncorrelated_identity(w, t, alpha, eta, kp):
    lhs = abs(filter_uncorrelated(w, t, alpha, eta, kp)) ** 2
    rhs = (1 - eta**2) * alpha**2 * (kp**2 / 4) / (w**2 + kp**2 / 4) * abs(filter_fid(w, t)) ** 2
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-14)


@settings(max_examples=50)
@given(st.floats(-30, 30), st.floats(0.01, 10), st.floats(0, 2), st.floats(0, 1), st.floats(0, 3))
def test_env_kernel_matches_filters(w, t, alpha, eta, tau):
    cfg = cfg_(alpha_s=alpha, eta=eta)
    f = coherence.evaluate_filters(w, t, cfg.replace(tau_d=tau))
    k = coherence.env_kernel(t, cfg, tau)
    if abs(w) > 1e-6:
        ref = (abs(f.Y) ** 2 + abs(f.Ytilde) ** 2) / w**2
        np.testing.assert_allclose(k(w), ref, rtol=1e-9, atol=1e-12)


# -- imprecision -------------------------------------------------------------


def test_lambda_imp_examples():
    cfg = cfg_(beta_s=0.5, n1=300.0)
    t = np.geomspace(1e-3, 1e4, 30)
    np.testing.assert_allclose(lambda_imp(t, cfg), 2 * cfg.derived.gamma_ff * t, rtol=1e-14)
    assert lambda_imp(0.0, cfg.replace(lambda2=0.6)) == 0.0


@pytest.mark.parametrize("lam2", [0.1, 0.5, 0.9])
def test_lambda_imp_slope_ratio(lam2):
    cfg = cfg_(lambda2=lam2)
    T = 1e8
    slope = (lambda_imp(2 * T, cfg) - lambda_imp(T, cfg)) / T
    np.testing.assert_allclose(slope / (2 * cfg.derived.gamma_ff), ((1 - lam2) / (1 + lam2)) ** 2, rtol=1e-9)


def test_lambda_imp_lossy_form():
    cfg = cfg_(lambda2=0.4, kappa_i=0.05, alpha_s=1.05)
    r, lam2 = 0.05, 0.4
    pref = 1.05**2 / (32 * cfg.n1)
    expect = pref / 1.05 * ((1 - lam2) ** 2 / (1 + lam2) + r * (1 + lam2)) * cfg.kappa_phi * 10.0
    np.testing.assert_allclose(lambda_imp(10.0, cfg), expect, rtol=1e-14)
    assert lambda_imp(10.0, cfg, include_transient=True) > lambda_imp(10.0, cfg)


# -- environmental dephasing ------------------------------------------------


T = np.geomspace(1e-2, 1e4, 25)


def test_bare_white():
    S = White(0.02)
    c = chi(T, cfg_(alpha_s=0.0, eta=0.3), S)
    np.testing.assert_allclose(c.chi_total, 0.01 * T, rtol=1e-8)


def test_ideal_white_closed_form():
    S0 = 0.05
    cfg = cfg_(n1=50.0)
    c = chi(T, cfg, White(S0))
    kp = cfg.kappa_phi
    ref = 2 * cfg.derived.gamma_ff * T + (S0 / kp) * -np.expm1(-kp * T / 2)
    np.testing.assert_allclose(c.chi_total, ref, rtol=1e-8)
    np.testing.assert_allclose(c.chi_total, c.chi_env + c.lambda_imp, rtol=0, atol=0)
    # same as the delay closed form at tau_d = 0
    np.testing.assert_allclose(chi_delay(T, 0.0, cfg, White(S0)), ref, rtol=1e-8)


def test_curve_invariants():
    c = chi(np.concatenate([[0.0], T]), cfg_(lambda2=0.3), Lorentzian(0.01, 2.0))
    assert c.chi_total[0] == 0.0
    assert np.all(np.diff(c.chi_total) >= 0)
    assert np.all((c.coherence > 0) & (c.coherence <= 1))


def test_long_time_rate_examples():
    S = White(0.01)
    for beta, n1 in [(1.0, 100.0), (0.5, 1000.0), (2.0, 7.0)]:
        cfg = cfg_(beta_s=beta, n1=n1)
        np.testing.assert_allclose(long_time_rate(cfg, S), 1 / (32 * beta**2 * n1), rtol=1e-14)
    assert long_time_rate(cfg_(alpha_s=0.0), S) == 0.005
    eta = 0.6
    big = cfg_(beta_s=1e6, alpha_s=eta, eta=eta)
    np.testing.assert_allclose(long_time_rate(big, S), 0.5 * (1 - eta**2) * 0.01, rtol=1e-9)


def test_partial_correlation_optimum():
    from scipy import optimize

    S = Lorentzian(0.01, 3.0)
    for eta in (0.2, 0.5, 0.9):
        f = lambda a: long_time_rate(cfg_(beta_s=1e8, alpha_s=a, eta=eta), S)
        res = optimize.minimize_scalar(f, bounds=(0, 2), method="bounded", options={"xatol": 1e-10})
        assert abs(res.x - eta) < 1e-6


@pytest.mark.parametrize("S", [White(0.01), Lorentzian(0.02, 0.3), Lorentzian(0.02, 30.0),
                               Tabulated([0, 1, 2, 5], [0.02, 0.015, 0.004, 0.0])])
def test_alpha_one_optimal(S):
    for t in (0.1, 1.0, 10.0, 300.0):
        best = chi_env(t, cfg_(alpha_s=1.0), S)
        for a in (0.0, 0.5, 0.9, 1.1, 1.5, 2.5):
            assert best <= chi_env(t, cfg_(alpha_s=a), S) * (1 + 1e-9)


def test_chi_init_limits():
    S0, kp = 0.03, 1.6
    assert chi_init(0.0, kp, White(S0)) == 0.0
    np.testing.assert_allclose(chi_init(1e5, kp, White(S0)), S0 / kp, rtol=1e-8)
    np.testing.assert_allclose(chi_init(1e-5, kp, White(S0)), S0 * 1e-5 / 2, rtol=1e-4)


def test_broadband_tracks_bare():
    cfg = cfg_()
    kp = cfg.kappa_phi
    S = Lorentzian(0.01, 1e3 * kp)
    t = np.linspace(0.01, 0.2, 10) / kp
    ratio = chi_env(t, cfg, S) / coherence.chi_fid(t, S)
    assert np.all(np.abs(ratio - 1) < 0.05)


def test_narrowband_slope():
    cfg = cfg_()
    kp = cfg.kappa_phi
    gamma, S0 = 0.01 * kp, 0.01
    S = Lorentzian(S0, gamma)
    # intermediate window 1/kappa_phi << t << 1/gamma
    t1, t2 = 5.0 / kp, 20.0 / kp
    slope = (chi_env(t2, cfg, S) - chi_env(t1, cfg, S)) / (t2 - t1)
    np.testing.assert_allclose(slope, (gamma / kp) ** 2 * S0 / 2, rtol=0.1)


def test_threads_identical():
    cfg, S = cfg_(lambda2=0.2), Lorentzian(0.01, 2.0)
    a = chi_env(T, cfg, S, threads=1)
    b = chi_env(T, cfg, S, threads=4)
    assert np.array_equal(a, b)


def test_validity_warning():
    with pytest.warns(RuntimeWarning):
        chi([1.0], cfg_(), White(1.0))


# -- delay -------------------------------------------------------------------


def test_delay_closed_form_vs_quadrature():
    cfg = cfg_()
    S = White(0.01)
    tau = 0.7
    t = np.array([0.1, 0.5, 0.69, 0.71, 1.0, 3.0, 30.0])
    closed = chi_delay(t, tau, cfg, S, include_imp=False)
    quad = [0.5 * spectra.weighted_integral(S, coherence.env_kernel(tk, cfg, tau)) for tk in t]
    np.testing.assert_allclose(closed, quad, rtol=1e-7)


def test_delay_continuity():
    cfg = cfg_()
    S = White(0.01)
    tau, h = 1.3, 1e-6
    f = lambda t: chi_delay(t, tau, cfg, S, include_imp=False)
    left = (f(tau - h) - f(tau - 2 * h)) / h
    right = (f(tau + 2 * h) - f(tau + h)) / h
    np.testing.assert_allclose(left, right, rtol=1e-4)
    # no jump beyond the linear change across [tau - h, tau + h]
    assert abs(f(tau + h) - f(tau - h) - 2 * h * left) < 1e-12


def test_break_even():
    cfg = cfg_()
    kp = cfg.kappa_phi
    S = White(0.01 * kp)
    assert break_even_time(cfg, S, 0.0) == 0.0
    tau = 0.01 / kp
    np.testing.assert_allclose(break_even_time(cfg, S, tau), (2 + math.sqrt(2)) * tau, rtol=0.02)
    tau = 5.0 / kp
    np.testing.assert_allclose(break_even_time(cfg, S, tau), 2 * (tau + 1 / kp), rtol=0.05)


# -- T_phi -------------------------------------------------------------------


def test_tphi_bare():
    S0 = 0.01
    c = chi(np.geomspace(1, 1e4, 50), cfg_(alpha_s=0.0), White(S0))
    np.testing.assert_allclose(tphi(c), 2 / S0, atol=1e-6)
    c2 = chi(np.geomspace(1, 1e4, 50), cfg_(alpha_s=0.0), White(2 * S0))
    np.testing.assert_allclose(tphi(c2), tphi(c) / 2, atol=1e-6)


def test_tphi_dense_grid():
    cfg = cfg_(n1=1000.0)
    S = White(0.01)
    c = chi(np.geomspace(1, 1e5, 40), cfg, S)
    fine_t = np.linspace(0.9 * tphi(c), 1.1 * tphi(c), 2001)
    fine = chi(fine_t, cfg, S, check_validity=False).chi_total
    interp = np.interp(1.0, fine, fine_t)
    np.testing.assert_allclose(tphi(c), interp, rtol=1e-3)


def test_tphi_not_reached():
    c = chi(np.geomspace(1, 10, 5), cfg_(alpha_s=0.0), White(0.01))
    with pytest.raises(coherence.NotReached) as exc:
        tphi(c)
    np.testing.assert_allclose(exc.value.max_chi, 0.05)


def test_tphi_rejects_non_monotone():
    c = chi(np.geomspace(1, 1e4, 10), cfg_(alpha_s=0.0), White(0.01))
    c.chi_env = c.chi_env[::-1].copy()
    with pytest.raises(ValueError):
        tphi(c)


def test_curve_csv(tmp_path):
    c = chi(T[:5], cfg_(), White(0.01))
    p = c.to_csv(tmp_path / "c.csv")
    lines = p.read_text().splitlines()
    assert lines[0] == "t,chi_env,lambda_imp,chi_total,coherence"
    assert len(lines) == 6
    assert p.with_suffix(".json").exists()
