"""Photon accounting, estimation error and photon-partition optimizers.

A spectator measured for a time ``T`` spends ``n_d = n1 kappa_c T``
displacement photons and ``n_s = 4 lambda2**2 / (1 - lambda2**2)**2``
squeezing photons of the output temporal mode.  Balancing the two turns the
SQL scaling ``1/sqrt(n)`` of the zero-frequency estimation error into
Heisenberg scaling ``1/n``.
"""

from __future__ import annotations

import csv
import math
import pathlib
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import coherence
from .model import ConfigError, SpectatorConfig, lambda2_for_n2

__all__ = [
    "PhotonBudget",
    "EstimationResult",
    "ConsistencyError",
    "lambda2_for_ns",
    "ns_for_lambda2",
    "estimation_error",
    "lambda_from_error",
    "single_mode_oracle",
    "general_angle_error",
    "brute_force_partition",
    "optimize_incident",
    "optimize_intracavity",
    "intracavity_objective",
    "optimize_with_loss",
    "loss_objective",
    "loss_scaling_slope",
    "scaling_slope",
    "write_sweep",
]


class ConsistencyError(RuntimeError):
    pass


def ns_for_lambda2(lambda2: float) -> float:
    return 4.0 * lambda2**2 / (1.0 - lambda2**2) ** 2


def lambda2_for_ns(n_s: float) -> float:
    """Root in ``[0, 1)`` of ``n_s = 4 l**2/(1 - l**2)**2``: ``(sqrt(1 + n_s) - 1)/sqrt(n_s)``."""
    if n_s < 0:
        raise ValueError("n_s must be >= 0")
    if n_s == 0:
        return 0.0
    # same root, written without cancellation
    return math.sqrt(n_s) / (math.sqrt(1.0 + n_s) + 1.0)


@dataclass(frozen=True)
class PhotonBudget:
    T: float
    n_d: float
    n_s: float
    kappa_c: float = 1.0

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("T must be > 0")
        if self.n_d < 0 or self.n_s < 0:
            raise ValueError("photon numbers must be >= 0")

    @property
    def n_inc(self) -> float:
        return self.n_d + self.n_s

    @property
    def lambda2(self) -> float:
        return lambda2_for_ns(self.n_s)

    @property
    def n1(self) -> float:
        return self.n_d / (self.kappa_c * self.T)

    @property
    def lambda1(self) -> float:
        return math.sqrt(self.n1) * (1.0 - self.lambda2)

    @classmethod
    def from_config(cls, config: SpectatorConfig, T: float) -> "PhotonBudget":
        return cls(T=T, n_d=config.n1 * config.kappa_c * T, n_s=ns_for_lambda2(config.lambda2), kappa_c=config.kappa_c)

    def to_config(self, beta_s: float, alpha_s: float = 1.0) -> SpectatorConfig:
        return SpectatorConfig(beta_s=beta_s, lambda1=self.lambda1, lambda2=self.lambda2, alpha_s=alpha_s, kappa_c=self.kappa_c)


@dataclass(frozen=True)
class EstimationResult:
    delta_xi0: float
    slope: float
    variance: float
    long_time: bool


def estimation_error(budget: PhotonBudget, beta_s: float, form: str = "exact") -> EstimationResult:
    """Homodyne estimation error of the zero-frequency spectator noise.

    ``form="exact"``: ``(1 - lambda2) kappa_c / (2 beta sqrt(2 n_d))``.
    ``form="asymptotic"``: ``kappa_c / (2 beta sqrt(2 n_d n_s))``, valid when
    all photon numbers are large.
    """
    if beta_s <= 0:
        raise ValueError("beta_s must be > 0")
    if budget.n_d == 0:
        raise ValueError("zero displacement photons: the signal vanishes")
    lam2 = budget.lambda2
    kc = budget.kappa_c
    if form == "exact":
        err = (1.0 - lam2) * kc / (2.0 * beta_s * math.sqrt(2.0 * budget.n_d))
    elif form == "asymptotic":
        if budget.n_s == 0:
            raise ValueError("asymptotic form needs n_s > 0")
        err = kc / (2.0 * beta_s * math.sqrt(2.0 * budget.n_d * budget.n_s))
    else:
        raise ValueError("form must be 'exact' or 'asymptotic'")
    variance = ((1.0 - lam2) / (1.0 + lam2)) ** 2
    kphi = (1.0 + lam2) * kc
    return EstimationResult(
        delta_xi0=err,
        slope=math.sqrt(variance) / err,
        variance=variance,
        long_time=kphi * budget.T >= 50.0,
    )


def lambda_from_error(budget: PhotonBudget, beta_s: float, T: float | None = None, check: bool = True, rtol: float = 1e-9) -> float:
    """Imprecision dephasing ``(T**2/4) Delta_xi**2`` implied by the estimation error.

    With ``check`` the result is compared with the linear long-time term of
    the analytic imprecision dephasing at ``alpha_s = 1``.
    """
    T = budget.T if T is None else T
    err = estimation_error(budget, beta_s).delta_xi0
    lam = 0.25 * T * T * err * err
    if check:
        cfg = budget.to_config(beta_s)
        ref = coherence.lambda_imp_slope(cfg) * T
        if abs(lam - ref) > rtol * abs(ref):
            raise ConsistencyError(f"(T^2/4) dxi^2 = {lam!r} but the imprecision slope gives {ref!r}")
    return lam


# ---------------------------------------------------------------------------
# single-mode angle estimation


def general_angle_error(n_d, n_s):
    """Squeezed-displaced state, ``r >> 1``: ``1/(4 sqrt(n_d n_s))``."""
    return 1.0 / (4.0 * np.sqrt(np.asarray(n_d, dtype=float) * np.asarray(n_s, dtype=float)))


def single_mode_oracle(n_total: float, squeezed: bool = False) -> float:
    """Angle-estimation error with ``n_total`` photons.

    Coherent state: ``1/(2 sqrt(n))``.  Squeezed: the general formula at the
    optimal equal split ``n_d = n_s = n/2``.
    """
    if n_total < 1:
        raise ValueError("n_total must be >= 1")
    if not squeezed:
        return 1.0 / (2.0 * math.sqrt(n_total))
    return float(general_angle_error(0.5 * n_total, 0.5 * n_total))


def brute_force_partition(n_total: int):
    """Exhaustive search over integer splits ``n_d + n_s = n_total`` with both >= 1."""
    n_d = np.arange(1, int(n_total))
    err = general_angle_error(n_d, n_total - n_d)
    k = int(np.argmin(err))
    return int(n_d[k]), int(n_total - n_d[k]), float(err[k])


# ---------------------------------------------------------------------------
# incident-photon optimum


def optimize_incident(n_inc: float, beta_s: float, kappa_c: float = 1.0, T: float = 1.0, fix_n_s: float | None = None, form: str = "asymptotic"):
    """Minimize the estimation error over ``n_d + n_s = n_inc``.

    Returns
    -------
    (n_d, n_s, error)
    """
    if fix_n_s is not None:
        n_s = float(fix_n_s)
        n_d = n_inc - n_s
        res = estimation_error(PhotonBudget(T, n_d, n_s, kappa_c), beta_s, "exact" if n_s == 0 else form)
        return n_d, n_s, res.delta_xi0

    def f(n_d):
        return estimation_error(PhotonBudget(T, n_d, n_inc - n_d, kappa_c), beta_s, form).delta_xi0

    lo, hi = n_inc * 1e-9, n_inc * (1.0 - 1e-9)
    out = optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-9 * n_inc})
    return float(out.x), float(n_inc - out.x), float(out.fun)


def scaling_slope(n_inc_grid, beta_s: float = 1.0, squeezed: bool = True) -> float:
    """Log-log slope of the (optimized) estimation error against ``n_inc``."""
    n_inc_grid = np.asarray(n_inc_grid, dtype=float)
    if squeezed:
        errs = [optimize_incident(n, beta_s)[2] for n in n_inc_grid]
    else:
        errs = [optimize_incident(n, beta_s, fix_n_s=0.0)[2] for n in n_inc_grid]
    return float(np.polyfit(np.log(n_inc_grid), np.log(errs), 1)[0])


# ---------------------------------------------------------------------------
# intracavity optimum


def intracavity_objective(n2: float, n_cav: float, t0: float, beta_s: float, kappa_c: float = 1.0) -> float:
    """Full imprecision dephasing at ``t0`` for the split ``(n_cav - n2, n2)``, ``alpha_s = 1``."""
    cfg = SpectatorConfig.from_intracavity(beta_s=beta_s, ncav=n_cav, n2=n2, alpha_s=1.0, kappa_c=kappa_c)
    return coherence.lambda_imp(t0, cfg, include_transient=True)


@dataclass(frozen=True)
class IntracavityResult:
    n1: float
    n2: float
    lambda2: float
    lambda_imp_min: float
    t0_over_ncav2: float  # kappa_c t0 / n_cav**2
    kphi_t0_over_ncav3: float  # kappa_phi t0 / n_cav**3



def optimize_intracavity(n_cav: float, t0: float, config: SpectatorConfig, grid: int = 200) -> IntracavityResult:
    """Minimize ``Lambda_imp(t0)`` over the intracavity partition ``n1 + n2 = n_cav``.

    ``kappa_phi`` follows ``lambda2`` during the search.  A ``grid``-point log
    grid in ``n2`` plus the point ``n2 = 0`` is refined by golden-section
    search; ties go to the smaller ``n2``.
    """
    if n_cav <= 0 or t0 <= 0:
        raise ValueError("n_cav and t0 must be > 0")
    beta, kc = config.beta_s, config.kappa_c

    def f(n2):
        return intracavity_objective(n2, n_cav, t0, beta, kc)

    n2_grid = np.concatenate([[0.0], np.geomspace(1e-8 * n_cav, n_cav * (1.0 - 1e-6), grid)])
    vals = np.array([f(x) for x in n2_grid])
    k = int(np.argmin(vals))
    best_n2, best_val = float(n2_grid[k]), float(vals[k])
    if 1 <= k < n2_grid.size - 1 and k + 1 < n2_grid.size:
        lo = n2_grid[k - 1] if k > 1 else n2_grid[1] * 1e-3
        a, b, c = math.log(lo), math.log(n2_grid[k]), math.log(n2_grid[k + 1])
        g = lambda u: f(math.exp(u))
        if g(b) <= g(a) and g(b) <= g(c):
            out = optimize.minimize_scalar(g, bracket=(a, b, c), method="golden", tol=1e-10)
            if out.fun < best_val:
                best_n2, best_val = float(math.exp(out.x)), float(out.fun)
    lam2 = lambda2_for_n2(best_n2)
    return IntracavityResult(
        n1=n_cav - best_n2,
        n2=best_n2,
        lambda2=lam2,
        lambda_imp_min=best_val,
        t0_over_ncav2=kc * t0 / n_cav**2,
        kphi_t0_over_ncav3=(1.0 + lam2) * kc * t0 / n_cav**3,
    )


# ---------------------------------------------------------------------------
# internal loss


def loss_objective(n_d, n_s, kappa_i_ratio: float, beta_s: float, T: float, kappa_c: float = 1.0):
    """Long-time imprecision dephasing with internal loss.

    ``(kappa_phi T)**2/(64 beta**2) (kappa_tot/kappa_c) [1/(n_d n_s) + 2 r / n_d]``
    with ``r = kappa_i/kappa_c`` and ``kappa_phi = 2 kappa_tot`` (strong squeezing).
    """
    ktot = kappa_c * (1.0 + kappa_i_ratio)
    kphi = 2.0 * ktot
    n_d = np.asarray(n_d, dtype=float)
    n_s = np.asarray(n_s, dtype=float)
    bracket = 1.0 / (n_d * n_s) + 2.0 * kappa_i_ratio / n_d
    return (kphi * T) ** 2 / (64.0 * beta_s**2) * (ktot / kappa_c) * bracket


@dataclass(frozen=True)
class LossResult:
    n_d: float
    n_s: float
    lambda_imp: float

    @property
    def squeeze_fraction(self) -> float:
        return self.n_s / (self.n_d + self.n_s)


def optimize_with_loss(n_inc: float, kappa_i_ratio: float, beta_s: float, T: float, grid: int = 400) -> LossResult:
    """Minimize the lossy imprecision dephasing over ``n_d + n_s = n_inc``."""
    if n_inc <= 0:
        raise ValueError("n_inc must be > 0")
    if kappa_i_ratio < 0:
        raise ValueError("kappa_i/kappa_c must be >= 0")
    frac = np.geomspace(1e-9, 1.0 - 1e-9, grid)
    frac = np.unique(np.concatenate([frac, 1.0 - frac]))
    vals = loss_objective(n_inc * (1.0 - frac), n_inc * frac, kappa_i_ratio, beta_s, T)
    k = int(np.argmin(vals))
    lo = frac[max(k - 1, 0)]
    hi = frac[min(k + 1, frac.size - 1)]
    f = lambda x: float(loss_objective(n_inc * (1.0 - x), n_inc * x, kappa_i_ratio, beta_s, T))
    out = optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    x, v = (float(out.x), float(out.fun)) if out.fun <= vals[k] else (float(frac[k]), float(vals[k]))
    return LossResult(n_d=n_inc * (1.0 - x), n_s=n_inc * x, lambda_imp=v)


def loss_scaling_slope(n_inc_grid, kappa_i_ratio: float, beta_s: float = 1.0, T: float = 1.0) -> np.ndarray:
    """Local log-log slope ``d ln Lambda / d ln n_inc`` of the optimized lossy dephasing."""
    n = np.asarray(n_inc_grid, dtype=float)
    lam = np.array([optimize_with_loss(x, kappa_i_ratio, beta_s, T).lambda_imp for x in n])
    return np.gradient(np.log(lam), np.log(n))


def write_sweep(path, header, rows) -> pathlib.Path:
    path = pathlib.Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) for x in row])
    return path
