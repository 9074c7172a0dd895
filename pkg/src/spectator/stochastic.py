"""Stochastic validation: noise synthesis, Gaussian-ansatz ODEs, ensembles.

Each noise realization drives the six Gaussian Wigner parameters
``(nu, xbar, pbar, sigma_x, sigma_p, sigma_xp)`` of the spectator mode; the
qubit phase is ``Re nu`` and the quantum imprecision dephasing is
``-Im nu``.  The flag ``epsilon`` switches the residual (photon-number
coupled) phase noise on or off.
"""

from __future__ import annotations

import csv
import json
import math
import pathlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from . import coherence, spectra
from .model import ConfigError, SpectatorConfig
from .spectra import Lorentzian, SpectralDensity, White

__all__ = [
    "NoiseRealization",
    "GaussianTrajectory",
    "EnsembleResult",
    "AliasingError",
    "IntegrationError",
    "synthesize",
    "integrate",
    "ensemble_chi",
    "residual_rate_estimate",
    "preroll_time",
    "default_dt",
    "realization_seed",
]

MAX_SAMPLES = 1 << 26
ALIAS_RATIO = 1e-3
UNRESOLVED_CHI = 5.0
BLOCK_SIZE = 256


class AliasingError(ValueError):
    pass


class IntegrationError(RuntimeError):
    """The covariance blew up (|sigma| > 1e6)."""


@dataclass
class NoiseRealization:
    dt: float
    n_samples: int
    xi_q: np.ndarray
    xi_s: np.ndarray
    seed: tuple
    spectrum: dict
    eta: float
    n_pre: int = 0  # index of t = 0

    @property
    def t(self) -> np.ndarray:
        return (np.arange(self.n_samples) - self.n_pre) * self.dt


@dataclass
class GaussianTrajectory:
    t: np.ndarray
    nu: np.ndarray
    xbar: np.ndarray
    pbar: np.ndarray
    sigma_x: np.ndarray
    sigma_p: np.ndarray
    sigma_xp: np.ndarray
    epsilon: int

    @property
    def phase(self) -> np.ndarray:
        return self.nu.real

    @property
    def imprecision(self) -> np.ndarray:
        return -self.nu.imag


def realization_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    """Counter-based substream: realization ``index`` of run ``master_seed``."""
    return np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))


def preroll_time(config: SpectatorConfig, S: SpectralDensity) -> float:
    """Ten times the slowest of the spectator and noise memory times."""
    tc = 2.0 / config.kappa_a
    if isinstance(S, Lorentzian):
        tc = max(tc, 2.0 / S.gamma)
    elif not isinstance(S, White):
        scales = [s for s in S.scales if s > 0]
        if scales:
            tc = max(tc, 1.0 / min(scales))
    return 10.0 * tc


def _resolution_dt(S: SpectralDensity) -> float:
    if isinstance(S, White) or S.S0 == 0:
        return math.inf
    if isinstance(S, Lorentzian):
        b = 0.5 * S.gamma
        return math.pi / (b * math.sqrt(1.0 / ALIAS_RATIO - 1.0)) * 0.999
    if math.isfinite(S.cutoff):
        return math.pi / S.cutoff
    return math.inf


def default_dt(config: SpectatorConfig, S: SpectralDensity, t_min: float | None = None) -> float:
    dt = min(1.0 / (40.0 * config.kappa_phi), _resolution_dt(S))
    if t_min is not None and t_min > 0:
        dt = min(dt, t_min / 50.0)
    return dt


def _check_aliasing(S, dt):
    if isinstance(S, White):
        return
    s0 = S.S0
    if s0 > 0 and float(S(math.pi / dt)) >= ALIAS_RATIO * s0:
        raise AliasingError(
            f"dt = {dt:g} under-resolves the spectrum: S[pi/dt]/S[0] = {float(S(math.pi / dt)) / s0:.3g}"
        )


def _draw(rng, amp, n):
    # Hermitian rfft coefficients with E|Z_k|^2 = S(w_k) dw / 2pi, scaled for irfft
    m = amp.size
    z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    z *= amp * math.sqrt(0.5)
    z[0] = z[0].real * math.sqrt(2.0)
    if n % 2 == 0:
        z[-1] = z[-1].real * math.sqrt(2.0)
    return z * n


def _amplitudes(S, dt, n):
    w = 2.0 * math.pi * np.fft.rfftfreq(n, d=dt)
    dw = 2.0 * math.pi / (n * dt)
    return np.sqrt(np.asarray(S(w), dtype=float) * dw / (2.0 * math.pi))


def _synth_block(S, eta, dt, n, seeds):
    amp = _amplitudes(S, dt, n)
    zq = np.empty((len(seeds), amp.size), dtype=complex)
    zp = np.empty_like(zq)
    for k, ss in enumerate(seeds):
        rng = np.random.Generator(np.random.PCG64(ss))
        zq[k] = _draw(rng, amp, n)
        zp[k] = _draw(rng, amp, n)
    xq = np.fft.irfft(zq, n=n, axis=-1)
    if eta == 1.0:
        xs = xq.copy()
    else:
        xs = eta * xq + math.sqrt(1.0 - eta * eta) * np.fft.irfft(zp, n=n, axis=-1)
    return xq, xs


def synthesize(
    S: SpectralDensity,
    eta: float,
    dt: float,
    n_samples: int,
    seed,
    n_pre: int = 0,
    check_aliasing: bool = True,
) -> NoiseRealization:
    """Draw one stationary Gaussian pair ``(xi_q, xi_s)`` with correlation ``eta``.

    Frequency-domain synthesis on a periodic grid of ``n_samples`` points;
    ``xi_s = eta xi_q + sqrt(1 - eta**2) xi'`` with ``xi'`` independent.

    Parameters
    ----------
    seed : int, tuple or SeedSequence
        Reproducibility token.  Tuples are read as ``(master_seed, index)``.
    n_pre : int
        Index of the sample at ``t = 0`` (pre-roll length).
    """
    if not 0 <= eta <= 1:
        raise ValueError("eta must lie in [0, 1]")
    if n_samples < 2:
        raise ValueError("need at least two samples")
    if n_samples > MAX_SAMPLES:
        raise OverflowError(f"n_samples = {n_samples} exceeds {MAX_SAMPLES}")
    if check_aliasing:
        _check_aliasing(S, dt)
    if isinstance(seed, np.random.SeedSequence):
        ss, token = seed, (int(seed.entropy), *seed.spawn_key)
    elif isinstance(seed, tuple):
        ss, token = realization_seed(*seed), tuple(int(s) for s in seed)
    else:
        ss, token = np.random.SeedSequence(int(seed)), (int(seed),)
    xq, xs = _synth_block(S, eta, dt, n_samples, [ss])
    return NoiseRealization(dt, n_samples, xq[0], xs[0], token, S.describe(), eta, n_pre)


# ---------------------------------------------------------------------------
# Gaussian ODEs


@numba.njit(cache=True)
def _rhs(nu_dummy, x, p, sx, sp, sxp, xq, xs, th, eps, beta, ka, kp, kc, g, gff, drive):
    dnu = th * (xq - 2.0 * g * p - 2j * gff)
    dx = -0.5 * ka * x + eps * beta * xs * p + 2j * g * sxp * th
    dp = -0.5 * kp * p - eps * beta * xs * x + drive * xs + 1j * g * (2.0 * sp - 1.0) * th
    dsx = -ka * sx + 0.5 * kc + 2.0 * eps * beta * xs * sxp
    dsp = -kp * sp + 0.5 * kc - 2.0 * eps * beta * xs * sxp
    dsxp = -kc * sxp + eps * beta * xs * (sp - sx)
    return dnu, dx, dp, dsx, dsp, dsxp


@numba.njit(cache=True)
def _integrate_kernel(xq, xs, dt, m, n_pre, record, params, out):
    eps, beta, ka, kp, kc, g, gff, drive = params[0], params[1], params[2], params[3], params[4], params[5], params[6], params[7]
    n = xq.size
    nu = 0j
    x = 0j
    p = 0j
    sx = 0.5 * kc / ka
    sp = 0.5 * kc / kp
    sxp = 0.0
    h = dt / m
    r = 0
    nrec = record.size
    while r < nrec and record[r] == 0:
        out[r, 0] = nu
        out[r, 1] = x
        out[r, 2] = p
        out[r, 3] = sx
        out[r, 4] = sp
        out[r, 5] = sxp
        r += 1
    for j in range(n - 1):
        th = 1.0 if j >= n_pre else 0.0
        q0 = xq[j]
        q1 = xq[j + 1]
        s0 = xs[j]
        s1 = xs[j + 1]
        for k in range(m):
            f0 = k / m
            fm = (k + 0.5) / m
            f1 = (k + 1.0) / m
            qa = q0 + (q1 - q0) * f0
            qb = q0 + (q1 - q0) * fm
            qc = q0 + (q1 - q0) * f1
            sa = s0 + (s1 - s0) * f0
            sb = s0 + (s1 - s0) * fm
            sc = s0 + (s1 - s0) * f1
            a1 = _rhs(nu, x, p, sx, sp, sxp, qa, sa, th, eps, beta, ka, kp, kc, g, gff, drive)
            a2 = _rhs(nu, x + 0.5 * h * a1[1], p + 0.5 * h * a1[2], sx + 0.5 * h * a1[3], sp + 0.5 * h * a1[4],
                      sxp + 0.5 * h * a1[5], qb, sb, th, eps, beta, ka, kp, kc, g, gff, drive)
            a3 = _rhs(nu, x + 0.5 * h * a2[1], p + 0.5 * h * a2[2], sx + 0.5 * h * a2[3], sp + 0.5 * h * a2[4],
                      sxp + 0.5 * h * a2[5], qb, sb, th, eps, beta, ka, kp, kc, g, gff, drive)
            a4 = _rhs(nu, x + h * a3[1], p + h * a3[2], sx + h * a3[3], sp + h * a3[4],
                      sxp + h * a3[5], qc, sc, th, eps, beta, ka, kp, kc, g, gff, drive)
            c = h / 6.0
            nu += c * (a1[0] + 2.0 * a2[0] + 2.0 * a3[0] + a4[0])
            x += c * (a1[1] + 2.0 * a2[1] + 2.0 * a3[1] + a4[1])
            p += c * (a1[2] + 2.0 * a2[2] + 2.0 * a3[2] + a4[2])
            sx += c * (a1[3] + 2.0 * a2[3] + 2.0 * a3[3] + a4[3])
            sp += c * (a1[4] + 2.0 * a2[4] + 2.0 * a3[4] + a4[4])
            sxp += c * (a1[5] + 2.0 * a2[5] + 2.0 * a3[5] + a4[5])
        if abs(sx) > 1e6 or abs(sp) > 1e6 or abs(sxp) > 1e6 or not (sx == sx):
            return j + 1
        while r < nrec and record[r] == j + 1:
            out[r, 0] = nu
            out[r, 1] = x
            out[r, 2] = p
            out[r, 3] = sx
            out[r, 4] = sp
            out[r, 5] = sxp
            r += 1
    return 0


@numba.njit(cache=True)
def _phase_block(xq, xs, dt, m, n_pre, record, params, eps_list, out):
    # out[k, e, r] = nu at record[r] for realization k and epsilon eps_list[e]
    buf = np.empty((record.size, 6), dtype=np.complex128)
    p = params.copy()
    for k in range(xq.shape[0]):
        for e in range(eps_list.size):
            p[0] = eps_list[e]
            bad = _integrate_kernel(xq[k], xs[k], dt, m, n_pre, record, p, buf)
            if bad:
                return k * eps_list.size + e + 1, bad
            for r in range(record.size):
                out[k, e, r] = buf[r, 0]
    return 0, 0


def _params(config: SpectatorConfig, epsilon: int) -> np.ndarray:
    if config.kappa_i != 0:
        raise ConfigError("the Gaussian ODEs are implemented without internal loss", "kappa_i_unsupported")
    d = config.derived
    g = math.sqrt(2.0 * config.kappa_c * d.gamma_ff)
    drive = math.sqrt(2.0 * d.n1) * config.beta_s
    return np.array(
        [float(epsilon), config.beta_s, d.kappa_a, d.kappa_phi, config.kappa_c, g, d.gamma_ff, drive], dtype=float
    )


def _substeps(dt, config):
    return max(1, int(math.ceil(dt * 40.0 * config.kappa_phi - 1e-9)))


def integrate(
    realization: NoiseRealization,
    config: SpectatorConfig,
    epsilon: int,
    record: np.ndarray | None = None,
) -> GaussianTrajectory:
    """Integrate the Gaussian-ansatz ODEs for one noise realization.

    Fixed-step RK4 with ``m = ceil(40 kappa_phi dt)`` sub-steps per
    noise sample (so ``h <= min(dt, 1/(40 kappa_phi))``) and linear
    interpolation of the noise.  The spectator starts in its noise-free
    steady state at the first sample; feedforward switches on at ``t = 0``.

    Parameters
    ----------
    record : array of int, optional
        Sample indices at which to store the state; default every sample
        from ``t = 0`` on.
    """
    if epsilon not in (0, 1):
        raise ValueError("epsilon must be 0 or 1")
    n = realization.n_samples
    if record is None:
        record = np.arange(realization.n_pre, n)
    record = np.asarray(record, dtype=np.int64)
    if np.any(np.diff(record) < 0) or record.min() < 0 or record.max() >= n:
        raise ValueError("record indices must be sorted and inside the sample range")
    out = np.zeros((record.size, 6), dtype=complex)
    m = _substeps(realization.dt, config)
    bad = _integrate_kernel(
        np.ascontiguousarray(realization.xi_q),
        np.ascontiguousarray(realization.xi_s),
        realization.dt,
        m,
        realization.n_pre,
        record,
        _params(config, epsilon),
        out,
    )
    if bad:
        raise IntegrationError(f"covariance exceeded 1e6 at sample {bad} (t = {(bad - realization.n_pre) * realization.dt:g})")
    t = (record - realization.n_pre) * realization.dt
    return GaussianTrajectory(
        t=t,
        nu=out[:, 0],
        xbar=out[:, 1],
        pbar=out[:, 2],
        sigma_x=out[:, 3].real,
        sigma_p=out[:, 4].real,
        sigma_xp=out[:, 5].real,
        epsilon=epsilon,
    )


# ---------------------------------------------------------------------------
# ensembles


@dataclass
class EnsembleResult:
    t: np.ndarray
    chi_n: np.ndarray
    stderr: np.ndarray
    chi_analytic: np.ndarray
    chi_res: np.ndarray
    stderr_res: np.ndarray
    unresolved: np.ndarray
    manifest: dict = field(default_factory=dict)

    def to_csv(self, path) -> pathlib.Path:
        """CSV ``t, chi_n, stderr, chi_analytic, chi_res`` plus a JSON manifest."""
        path = pathlib.Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "chi_n", "stderr", "chi_analytic", "chi_res"])
            for row in zip(self.t, self.chi_n, self.stderr, self.chi_analytic, self.chi_res):
                w.writerow([repr(float(x)) for x in row])
        path.with_suffix(".json").write_text(json.dumps(self.manifest, indent=2, sort_keys=True))
        return path


def _jackknife_chi(z: np.ndarray):
    """Leave-one-out jackknife of ``-ln|mean z|`` along axis 0."""
    n = z.shape[0]
    mean = z.mean(axis=0)
    chi = -np.log(np.abs(mean))
    loo = -np.log(np.abs((n * mean - z) / (n - 1)))
    var = (n - 1) / n * np.sum((loo - loo.mean(axis=0)) ** 2, axis=0)
    return chi, np.sqrt(var), loo


def ensemble_chi(
    S: SpectralDensity,
    config: SpectatorConfig,
    epsilon: int,
    n_realizations: int,
    master_seed: int,
    t_grid,
    threads: int | None = None,
    dt: float | None = None,
    t_preroll: float | None = None,
    block_size: int = BLOCK_SIZE,
    tol: float = 1e-8,
) -> EnsembleResult:
    """Monte-Carlo decoherence ``chi_n = -ln|<exp(i phi)>|`` from the Gaussian ODEs.

    The grid is snapped to the integration lattice (returned ``t``).
    ``chi_analytic`` is the environmental analytic curve on that grid.  For
    ``epsilon = 1`` every realization is also integrated at ``epsilon = 0``
    on the same noise and ``chi_res`` is the paired difference, with its own
    jackknife error.  Results depend only on ``master_seed``: realizations
    use counter-based substreams and blocks are reduced in a fixed order.
    """
    if n_realizations < 100:
        raise ValueError("n_realizations must be >= 100")
    if epsilon not in (0, 1):
        raise ValueError("epsilon must be 0 or 1")
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0 or np.any(t_grid <= 0):
        raise ValueError("t_grid must be a 1-D array of positive times")
    if dt is None:
        dt = default_dt(config, S, float(t_grid.min()))
    _check_aliasing(S, dt)
    t_pre = preroll_time(config, S) if t_preroll is None else t_preroll
    n_pre = int(math.ceil(t_pre / dt))
    idx = np.unique(np.maximum(np.rint(t_grid / dt).astype(np.int64), 1))
    record = idx + n_pre
    n = int(record[-1]) + 1
    if n > MAX_SAMPLES:
        raise OverflowError(f"run needs {n} samples (> {MAX_SAMPLES})")
    t = idx * dt
    m = _substeps(dt, config)
    params = _params(config, epsilon)
    eps_list = np.array([0.0, 1.0] if epsilon == 1 else [0.0])

    indices = np.arange(n_realizations)
    blocks = [indices[k : k + block_size] for k in range(0, n_realizations, block_size)]

    def run_block(block):
        seeds = [realization_seed(master_seed, i) for i in block]
        xq, xs = _synth_block(S, config.eta, dt, n, seeds)
        out = np.zeros((len(block), eps_list.size, record.size), dtype=complex)
        bad, step = _phase_block(xq, xs, dt, m, n_pre, record, params, eps_list, out)
        if bad:
            raise IntegrationError(f"covariance exceeded 1e6 (realization {block[(bad - 1) // eps_list.size]}, sample {step})")
        return np.exp(1j * out.real)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run_block, blocks))
    else:
        parts = [run_block(b) for b in blocks]
    z = np.concatenate(parts, axis=0)

    chi0, err0, loo0 = _jackknife_chi(z[:, 0, :])
    if epsilon == 1:
        chi1, err1, loo1 = _jackknife_chi(z[:, 1, :])
        diff = loo1 - loo0
        nr = z.shape[0]
        err_res = np.sqrt((nr - 1) / nr * np.sum((diff - diff.mean(axis=0)) ** 2, axis=0))
        chi_n, stderr, chi_res = chi1, err1, chi1 - chi0
    else:
        chi_n, stderr = chi0, err0
        chi_res = np.zeros_like(chi0)
        err_res = np.zeros_like(chi0)
    chi_an = coherence.chi_env(t, config, S, tol=tol)
    manifest = {
        "master_seed": int(master_seed),
        "n_realizations": int(n_realizations),
        "epsilon": int(epsilon),
        "dt": dt,
        "substeps": m,
        "t_preroll": n_pre * dt,
        "n_samples": n,
        "block_size": int(block_size),
        "config": config.to_dict(),
        "spectrum": S.describe(),
        "t_requested": t_grid.tolist(),
    }
    return EnsembleResult(
        t=t,
        chi_n=chi_n,
        stderr=stderr,
        chi_analytic=chi_an,
        chi_res=chi_res,
        stderr_res=err_res,
        # also flag a mean coherence below the 3-sigma ensemble noise floor
        unresolved=(chi_n > UNRESOLVED_CHI) | (chi_n > np.log(np.sqrt(n_realizations) / 3.0)),
        manifest=manifest,
    )


def residual_rate_estimate(config: SpectatorConfig, S: SpectralDensity, tol: float = 1e-8):
    """Linear estimate of the residual dephasing.

    Returns
    -------
    ratio : float
        ``Gamma_res / Gamma_0 = beta**2 int dw/2pi S/w**2 |Y_fid(w, 1/kappa_c)|**2``.
    alpha_renorm : float
        ``alpha_s (1 - ratio/2)``, the small-noise renormalized transduction.
    """
    ratio = config.beta_s**2 * spectra.weighted_integral(S, spectra.FilterKernel.fid(1.0 / config.kappa_c), tol=tol)
    return ratio, config.alpha_s * (1.0 - 0.5 * ratio)
