"""Analytic decoherence engine.

Filter functions, the decoherence function ``chi(t)`` and its components,
long-time rates, the finite-bandwidth transient, feedforward delay and
internal loss.
"""

from __future__ import annotations

import csv
import json
import math
import pathlib
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import model, spectra
from .model import SpectatorConfig
from .spectra import FilterKernel, KernelTerm, SpectralDensity, White

__all__ = [
    "filter_fid",
    "filter_correlated",
    "filter_uncorrelated",
    "FilterEvaluation",
    "evaluate_filters",
    "env_kernel",
    "lambda_imp",
    "lambda_imp_slope",
    "chi_env",
    "chi_fid",
    "chi",
    "CoherenceCurve",
    "long_time_rate",
    "chi_init",
    "chi_delay",
    "break_even_time",
    "tphi",
    "NoCrossing",
    "NotReached",
    "log_grid",
]


class NoCrossing(RuntimeError):
    """The mitigated curve never drops below the bare curve."""


class NotReached(RuntimeError):
    """``chi`` stays below the target over the requested span."""

    def __init__(self, message, max_chi):
        super().__init__(message)
        self.max_chi = max_chi


# ---------------------------------------------------------------------------
# filter functions


def filter_fid(omega, t):
    """Free-induction-decay filter ``exp(-i w t) - 1``."""
    omega = np.asarray(omega, dtype=float)
    return np.expm1(-1j * omega * t) if omega.ndim else complex(np.expm1(-1j * omega * t))


def _lowpass(omega, kappa_phi):
    a = 0.5 * kappa_phi
    return a / (1j * omega + a)


def filter_correlated(omega, t, alpha_s, eta, kappa_phi, tau_d=0.0):
    """Correlated-noise filter ``(1 - eta alpha exp(-i w tau) L(w)) Y_fid``.

    ``L(w) = (kappa_phi/2) / (i w + kappa_phi/2)`` is the spectator response.
    """
    omega = np.asarray(omega, dtype=float)
    delay = np.exp(-1j * omega * tau_d) if tau_d else 1.0
    return (1.0 - eta * alpha_s * delay * _lowpass(omega, kappa_phi)) * filter_fid(omega, t)


def filter_uncorrelated(omega, t, alpha_s, eta, kappa_phi, tau_d=0.0):
    """Uncorrelated-noise filter ``sqrt(1 - eta**2) alpha L(w) Y_fid``."""
    omega = np.asarray(omega, dtype=float)
    delay = np.exp(-1j * omega * tau_d) if tau_d else 1.0
    return math.sqrt(1.0 - eta**2) * alpha_s * delay * _lowpass(omega, kappa_phi) * filter_fid(omega, t)


@dataclass(frozen=True)
class FilterEvaluation:
    omega: np.ndarray
    t: float
    Y: np.ndarray
    Ytilde: np.ndarray


def evaluate_filters(omega, t, config: SpectatorConfig) -> FilterEvaluation:
    a = config.alpha_eff
    kphi = config.kappa_phi
    return FilterEvaluation(
        omega=np.asarray(omega, dtype=float),
        t=t,
        Y=filter_correlated(omega, t, a, config.eta, kphi, config.tau_d),
        Ytilde=filter_uncorrelated(omega, t, a, config.eta, kphi, config.tau_d),
    )


def env_kernel(t: float, config: SpectatorConfig, tau_d: float | None = None) -> FilterKernel:
    """Kernel of ``(|Y|**2 + |Ytilde|**2) / w**2`` as a :class:`FilterKernel`.

    ``h = 1 - 2 eta alpha Re[exp(-i w tau) L] + alpha**2 |L|**2``.
    """
    alpha = config.alpha_eff
    eta = config.eta
    tau = config.tau_d if tau_d is None else tau_d
    a = 0.5 * config.kappa_phi
    a2 = a * a
    if tau == 0:
        k = alpha**2 - 2.0 * eta * alpha
        terms = (KernelTerm(lambda w: 1.0 + k * a2 / (w * w + a2)),)
    else:
        terms = (
            KernelTerm(lambda w: 1.0 + alpha**2 * a2 / (w * w + a2)),
            KernelTerm(lambda w: -2.0 * eta * alpha * a2 / (w * w + a2), "cos", tau),
            KernelTerm(lambda w: 2.0 * eta * alpha * a * w / (w * w + a2), "sin", tau),
        )
    return FilterKernel(t=t, terms=terms, scales=(a,))


# ---------------------------------------------------------------------------
# imprecision noise


def _imp_prefactor(config: SpectatorConfig) -> float:
    if config.alpha_s == 0:
        return 0.0
    return config.alpha_s**2 / (32.0 * config.beta_s**2 * config.n1)


def lambda_imp_slope(config: SpectatorConfig) -> float:
    """Long-time slope of the imprecision dephasing."""
    lam2 = config.lambda2
    kphi = config.kappa_phi
    pref = _imp_prefactor(config)
    if config.kappa_i == 0:
        return pref * (1.0 - lam2) ** 2 / (1.0 + lam2) * kphi
    r = config.kappa_i / config.kappa_c
    return pref * (config.kappa_c / config.kappa_tot) * ((1.0 - lam2) ** 2 / (1.0 + lam2) + r * (1.0 + lam2)) * kphi


def lambda_imp(t, config: SpectatorConfig, include_transient: bool | None = None):
    """Measurement-imprecision dephasing ``Lambda_imp(t)``.

    Parameters
    ----------
    t : float or array
    config : SpectatorConfig
    include_transient : bool, optional
        Keep the saturating ``8 lambda2 (1 - exp(-kappa_phi t/2))`` term.
        Defaults to True without internal loss and False with it, where the
        lossy long-time form is used.
    """
    t = np.asarray(t, dtype=float)
    if config.alpha_s > 0 and config.n1 == 0:
        raise model.ConfigError("n1 = 0 with alpha_s > 0", "undefined_transduction")
    lossless = config.kappa_i == 0
    if include_transient is None:
        include_transient = lossless
    pref = _imp_prefactor(config)
    lam2 = config.lambda2
    kphi = config.kappa_phi
    out = lambda_imp_slope(config) * t
    if include_transient and lam2 > 0:
        dilution = (config.kappa_c / config.kappa_tot) ** 2
        out = out + pref * dilution * 8.0 * lam2 / (1.0 + lam2) * (-np.expm1(-0.5 * kphi * t))
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# environmental dephasing


def _map(fn, items, threads):
    if threads and threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def chi_env(t, config: SpectatorConfig, S: SpectralDensity, tol: float = 1e-8, threads: int | None = None):
    """Environmental part ``(1/2) int dw/2pi S (|Y|**2 + |Ytilde|**2)/w**2``."""
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    vals = _map(lambda tk: 0.5 * spectra.weighted_integral(S, env_kernel(tk, config), tol=tol), list(ts), threads)
    out = np.array(vals)
    return out if np.ndim(t) else float(out[0])


def chi_fid(t, S: SpectralDensity, tol: float = 1e-8):
    """Bare-qubit dephasing ``(1/2) int dw/2pi S |Y_fid|**2/w**2``."""
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.array([0.5 * spectra.weighted_integral(S, FilterKernel.fid(tk), tol=tol) for tk in ts])
    return out if np.ndim(t) else float(out[0])


def chi_init(t, kappa_phi: float, S: SpectralDensity, tol: float = 1e-8):
    """Finite-bandwidth transient ``(1/2) int dw/2pi S |Y_fid|**2 / (w**2 + kappa_phi**2/4)``.

    This is the full environmental dephasing at ``alpha_s = eta = 1``.
    """
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.array(
        [0.5 * spectra.weighted_integral(S, FilterKernel.lorentz_denominator(tk, 0.5 * kappa_phi), tol=tol) for tk in ts]
    )
    return out if np.ndim(t) else float(out[0])


def long_time_rate(config: SpectatorConfig, S: SpectralDensity) -> float:
    """Long-time dephasing rate ``(1/2)(alpha**2 - 2 eta alpha + 1) S[0] + dLambda/dt``."""
    a = config.alpha_eff
    return 0.5 * (a * a - 2.0 * config.eta * a + 1.0) * S.S0 + lambda_imp_slope(config)


@dataclass
class CoherenceCurve:
    t: np.ndarray
    chi_env: np.ndarray
    lambda_imp: np.ndarray
    chi_init: np.ndarray
    config: SpectatorConfig
    spectrum: SpectralDensity
    tol: float = 1e-8
    include_transient: bool | None = None
    include_imp: bool = True
    meta: dict = field(default_factory=dict)

    @property
    def chi_total(self) -> np.ndarray:
        return self.chi_env + self.lambda_imp

    @property
    def coherence(self) -> np.ndarray:
        return np.exp(-self.chi_total)

    def evaluate(self, t: float) -> float:
        """Analytic ``chi_total`` at an arbitrary time (not interpolated)."""
        env = chi_env(t, self.config, self.spectrum, self.tol)
        return env + lambda_imp(t, self.config, self.include_transient) if self.include_imp else env

    def snapshot(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "spectrum": self.spectrum.describe(),
            "tol": self.tol,
            "include_transient": self.include_transient,
            "include_imp": self.include_imp,
            **self.meta,
        }

    def to_csv(self, path) -> pathlib.Path:
        """Write ``t, chi_env, lambda_imp, chi_total, coherence`` and a JSON sidecar."""
        path = pathlib.Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "chi_env", "lambda_imp", "chi_total", "coherence"])
            for row in zip(self.t, self.chi_env, self.lambda_imp, self.chi_total, self.coherence):
                w.writerow([repr(float(x)) for x in row])
        path.with_suffix(".json").write_text(json.dumps(self.snapshot(), indent=2, sort_keys=True))
        return path


def log_grid(t_min: float, t_max: float, n: int = 200) -> np.ndarray:
    return np.geomspace(t_min, t_max, n)


def chi(
    t,
    config: SpectatorConfig,
    S: SpectralDensity,
    tol: float = 1e-8,
    include_transient: bool | None = None,
    threads: int | None = None,
    check_validity: bool = True,
) -> CoherenceCurve:
    """Decoherence function ``chi = Lambda_imp + chi_env`` on a time grid.

    Warns (does not abort) when the linear-noise-drive margin is marginal.
    """
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts < 0):
        raise ValueError("times must be >= 0")
    if check_validity and config.beta_s > 0:
        margin = model.validity_linear_noise(config, S, tol=1e-6)
        if margin >= model.LINEAR_NOISE_THRESHOLD:
            warnings.warn(f"linear-noise-drive margin {margin:.3g} is not small", RuntimeWarning, stacklevel=2)
    env = chi_env(ts, config, S, tol, threads)
    a = config.alpha_eff
    linear = 0.5 * (a * a - 2.0 * config.eta * a + 1.0) * S.S0 * ts
    return CoherenceCurve(
        t=ts,
        chi_env=env,
        lambda_imp=np.asarray(lambda_imp(ts, config, include_transient), dtype=float),
        chi_init=env - linear,
        config=config,
        spectrum=S,
        tol=tol,
        include_transient=include_transient,
    )


# ---------------------------------------------------------------------------
# feedforward delay


def _delay_white_closed(t, tau, kphi, S0):
    # alpha = eta = 1, white noise
    t = np.asarray(t, dtype=float)
    early = S0 * t + (S0 / kphi) * np.expm1(-0.5 * kphi * t)
    late = S0 * tau + (S0 / kphi) * (1.0 - 2.0 * np.exp(-0.5 * kphi * (t - tau)) + np.exp(-0.5 * kphi * t))
    out = np.where(t < tau, early, late)
    return out if out.ndim else float(out)


def _delay_env(t, config, S, tau, tol):
    if isinstance(S, White) and config.alpha_eff == 1.0 and config.eta == 1.0:
        return _delay_white_closed(t, tau, config.kappa_phi, S.S0)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.array([0.5 * spectra.weighted_integral(S, env_kernel(tk, config, tau), tol=tol) for tk in ts])
    return out if np.ndim(t) else float(out[0])


def chi_delay(t, tau_d: float, config: SpectatorConfig, S: SpectralDensity, tol: float = 1e-8, include_imp: bool = True):
    """Decoherence with feedforward delay ``tau_d``.

    Closed form for white noise at ``alpha_s = eta = 1``; otherwise the
    delayed filter (``alpha -> alpha exp(-i w tau_d)``) goes through the
    quadrature engine.
    """
    env = _delay_env(t, config, S, tau_d, tol)
    return env + lambda_imp(t, config) if include_imp else env


def break_even_time(config: SpectatorConfig, S: SpectralDensity, tau_d: float | None = None, tol: float = 1e-8) -> float:
    """Earliest ``t > tau_d`` where the delayed curve meets the bare curve.

    ``Lambda_imp`` is neglected.
    """
    tau = config.tau_d if tau_d is None else tau_d
    if tau == 0:
        return 0.0
    kphi = config.kappa_phi

    def f(t):
        return _delay_env(t, config, S, tau, tol) - chi_fid(t, S, tol)

    lo = tau
    if f(lo) <= 0:
        return lo
    hi = 2.0 * tau + 4.0 / kphi
    for _ in range(60):
        if f(hi) < 0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise NoCrossing(f"no break-even crossing below t = {hi:g}")
    return optimize.bisect(f, lo, hi, xtol=1e-10 / kphi, rtol=4 * np.finfo(float).eps, maxiter=500)


# ---------------------------------------------------------------------------
# T_phi


def tphi(curve: CoherenceCurve, target: float = 1.0, xtol: float | None = None) -> float:
    """Time at which ``chi_total`` reaches ``target`` (default 1, coherence 1/e).

    Bracketing on the curve grid, then bisection on the analytic evaluator to
    ``1e-6 / kappa_c`` absolute.
    """
    total = curve.chi_total
    # allow quadrature-level jitter on plateaus
    slack = 10.0 * max(curve.tol, 1e-12) * np.maximum(np.abs(total[1:]), 1e-300)
    if np.any(np.diff(total) < -slack):
        raise ValueError("chi_total is not monotone on the grid")
    above = np.nonzero(total >= target)[0]
    if above.size == 0:
        raise NotReached(f"chi never reaches {target} on the grid (max {total.max():.6g})", float(total.max()))
    k = int(above[0])
    hi = float(curve.t[k])
    lo = float(curve.t[k - 1]) if k > 0 else 0.0
    xtol = 1e-6 / curve.config.kappa_c if xtol is None else xtol
    return optimize.bisect(lambda x: curve.evaluate(x) - target, lo, hi, xtol=xtol, maxiter=500)
