"""Physical parameters of the spectator mode and the validity gates.

All rates are expressed in units of the waveguide coupling ``kappa_c``
unless a config is ingested with ``units: "absolute"``, in which case
rates and times are rescaled on ingestion so that ``kappa_c == 1``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property
from typing import Any, Mapping, NamedTuple

from . import spectra

__all__ = [
    "ConfigError",
    "SpectatorConfig",
    "DerivedQuantities",
    "derive",
    "alpha_from_gamma",
    "lambda1_for_n1",
    "lambda2_for_n2",
    "validity_linear_noise",
    "passes_linear_noise",
    "validity_squeezing",
    "SqueezingGate",
    "config_from_mapping",
    "LINEAR_NOISE_THRESHOLD",
]

LINEAR_NOISE_THRESHOLD = 0.05


class ConfigError(ValueError):
    """Invalid physical configuration.

    ``code`` is a short machine-readable identifier used in CLI error reports.
    """

    def __init__(self, message: str, code: str = "invalid_config"):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class DerivedQuantities:
    kappa_phi: float
    kappa_a: float
    kappa_tot: float
    n1: float
    n2: float
    ncav: float
    gamma_ff: float
    alpha_ideal: float


@dataclass(frozen=True)
class SpectatorConfig:
    """Spectator-mode parameters.

    ``alpha_s`` is the stored control knob; the feedforward rate
    ``gamma_ff`` is derived from it.
    """

    beta_s: float
    lambda1: float
    lambda2: float = 0.0
    alpha_s: float = 1.0
    eta: float = 1.0
    kappa_c: float = 1.0
    kappa_i: float = 0.0
    tau_d: float = 0.0

    def __post_init__(self):
        for name in ("beta_s", "lambda1", "lambda2", "alpha_s", "eta", "kappa_c", "kappa_i", "tau_d"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ConfigError(f"{name} must be a finite number, got {value!r}", f"bad_{name}")
        if self.beta_s < 0:
            raise ConfigError("beta_s must be >= 0", "bad_beta_s")
        if self.kappa_c <= 0:
            raise ConfigError("kappa_c must be > 0", "bad_kappa_c")
        if self.kappa_i < 0:
            raise ConfigError("kappa_i must be >= 0", "bad_kappa_i")
        if self.lambda1 < 0:
            raise ConfigError("lambda1 must be >= 0", "bad_lambda1")
        if not 0 <= self.lambda2 < 1:
            raise ConfigError(
                f"lambda2 must satisfy 0 <= lambda2 < 1 (parametric instability), got {self.lambda2}",
                "bad_lambda2",
            )
        if self.alpha_s < 0:
            raise ConfigError("alpha_s must be >= 0", "bad_alpha_s")
        if not 0 <= self.eta <= 1:
            raise ConfigError("eta must lie in [0, 1]", "bad_eta")
        if self.tau_d < 0:
            raise ConfigError("tau_d must be >= 0", "bad_tau_d")
        if self.alpha_s > 0 and (self.lambda1 == 0 or self.beta_s == 0):
            raise ConfigError(
                "alpha_s > 0 needs a displaced spectator (lambda1 > 0) and beta_s > 0; "
                "the feedforward rate would be infinite",
                "undefined_transduction",
            )

    @classmethod
    def from_photons(cls, beta_s: float, n1: float, lambda2: float = 0.0, **kwargs) -> "SpectatorConfig":
        """Build a config from the displacement photon number instead of ``lambda1``."""
        return cls(beta_s=beta_s, lambda1=lambda1_for_n1(n1, lambda2), lambda2=lambda2, **kwargs)

    @classmethod
    def from_intracavity(cls, beta_s: float, ncav: float, n2: float, **kwargs) -> "SpectatorConfig":
        """Split ``ncav`` intracavity photons into ``ncav - n2`` displacement and ``n2`` squeezing photons."""
        if not 0 <= n2 < ncav:
            raise ConfigError("need 0 <= n2 < ncav", "bad_partition")
        lam2 = lambda2_for_n2(n2)
        return cls.from_photons(beta_s, ncav - n2, lambda2=lam2, **kwargs)

    @cached_property
    def derived(self) -> DerivedQuantities:
        return derive(self)

    # convenience accessors used throughout the engines
    @property
    def kappa_tot(self) -> float:
        return self.kappa_c + self.kappa_i

    @property
    def kappa_phi(self) -> float:
        return (1.0 + self.lambda2) * self.kappa_tot

    @property
    def kappa_a(self) -> float:
        return (1.0 - self.lambda2) * self.kappa_tot

    @property
    def n1(self) -> float:
        return self.lambda1**2 / (1.0 - self.lambda2) ** 2

    @property
    def alpha_eff(self) -> float:
        """Transduction seen by the filter functions.

        With internal loss the ideal value of ``alpha_s`` is ``kappa_tot/kappa_c``;
        the filters see ``alpha_s * kappa_c / kappa_tot`` so that the ideal
        setting still cancels zero-frequency noise.
        """
        return self.alpha_s * self.kappa_c / self.kappa_tot

    def replace(self, **changes) -> "SpectatorConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)


def lambda1_for_n1(n1: float, lambda2: float = 0.0) -> float:
    if n1 < 0:
        raise ConfigError("n1 must be >= 0", "bad_n1")
    return math.sqrt(n1) * (1.0 - lambda2)


def lambda2_for_n2(n2: float) -> float:
    """Invert ``n2 = lambda2**2 / (2 (1 - lambda2**2))`` on ``[0, 1)``."""
    if n2 < 0:
        raise ConfigError("n2 must be >= 0", "bad_n2")
    return math.sqrt(2.0 * n2 / (1.0 + 2.0 * n2))


def alpha_from_gamma(beta_s: float, kappa_phi: float, n1: float, kappa_c: float, gamma_ff: float) -> float:
    """Transduction factor ``8 beta_s sqrt(n1 kappa_c gamma_ff) / kappa_phi``."""
    return 8.0 * beta_s * math.sqrt(n1 * kappa_c * gamma_ff) / kappa_phi


def derive(config: SpectatorConfig) -> DerivedQuantities:
    lam2 = config.lambda2
    kappa_tot = config.kappa_tot
    kappa_phi = (1.0 + lam2) * kappa_tot
    kappa_a = (1.0 - lam2) * kappa_tot
    n1 = config.n1
    n2 = 0.5 * lam2**2 / (1.0 - lam2**2)
    if config.alpha_s == 0:
        gamma_ff = 0.0
    else:
        gamma_ff = (config.alpha_s * kappa_phi) ** 2 / (64.0 * config.beta_s**2 * n1 * config.kappa_c)
    return DerivedQuantities(
        kappa_phi=kappa_phi,
        kappa_a=kappa_a,
        kappa_tot=kappa_tot,
        n1=n1,
        n2=n2,
        ncav=n1 + n2,
        gamma_ff=gamma_ff,
        alpha_ideal=kappa_tot / config.kappa_c,
    )


def _sin2_margin(config: SpectatorConfig, S: spectra.SpectralDensity, tol: float) -> float:
    # sin^2(w / 2 kappa_c) = |Y_fid(w, 1/kappa_c)|^2 / 4
    kernel = spectra.FilterKernel.fid(1.0 / config.kappa_c)
    return 0.25 * config.beta_s**2 * spectra.weighted_integral(S, kernel, tol=tol)


def validity_linear_noise(config: SpectatorConfig, S: spectra.SpectralDensity, tol: float = 1e-8) -> float:
    """Margin of the linear-noise-drive approximation.

    Returns ``beta_s**2 * int dw/2pi S[w]/w**2 sin**2(w/(2 kappa_c))``; the
    approximation holds when this is much smaller than one.
    """
    return _sin2_margin(config, S, tol)


def passes_linear_noise(
    config: SpectatorConfig,
    S: spectra.SpectralDensity,
    threshold: float = LINEAR_NOISE_THRESHOLD,
    tol: float = 1e-8,
) -> bool:
    return validity_linear_noise(config, S, tol=tol) < threshold


class SqueezingGate(NamedTuple):
    limit: float  # 16 * margin, compared against (1 - lambda2)**4
    passed: bool
    lambda2_max: float


def validity_squeezing(config: SpectatorConfig, S: spectra.SpectralDensity, tol: float = 1e-8) -> SqueezingGate:
    """Check ``(1 - lambda2)**4 >= 16 * margin`` and report the largest admissible ``lambda2``."""
    limit = 16.0 * _sin2_margin(config, S, tol)
    passed = (1.0 - config.lambda2) ** 4 >= limit
    lambda2_max = max(0.0, 1.0 - limit**0.25)
    return SqueezingGate(limit=limit, passed=bool(passed), lambda2_max=lambda2_max)


# ---------------------------------------------------------------------------
# ingestion

_RATE_FIELDS = ("kappa_i",)
_TIME_FIELDS = ("tau_d",)


@dataclass(frozen=True)
class Ingested:
    config: SpectatorConfig
    rate_scale: float = 1.0
    notes: tuple = field(default_factory=tuple)


def config_from_mapping(data: Mapping[str, Any]) -> Ingested:
    """Build a config from a JSON-like mapping.

    Besides the dataclass fields the mapping may give ``n1`` (instead of
    ``lambda1``), ``ncav``/``n2`` (intracavity split) and
    ``units: "kappa_c" | "absolute"``.  With absolute units every rate is
    divided by the given ``kappa_c`` and every time multiplied by it; the
    returned ``rate_scale`` lets callers rescale spectra the same way.
    """
    data = dict(data)
    units = data.pop("units", "kappa_c")
    if units not in ("kappa_c", "absolute"):
        raise ConfigError(f"units must be 'kappa_c' or 'absolute', got {units!r}", "bad_units")
    scale = 1.0
    if units == "absolute":
        scale = float(data.get("kappa_c", 1.0))
        if scale <= 0:
            raise ConfigError("kappa_c must be > 0", "bad_kappa_c")
        data["kappa_c"] = 1.0
        for name in _RATE_FIELDS:
            if name in data:
                data[name] = float(data[name]) / scale
        for name in _TIME_FIELDS:
            if name in data:
                data[name] = float(data[name]) * scale

    ncav = data.pop("ncav", None)
    n2 = data.pop("n2", None)
    n1 = data.pop("n1", None)
    if ncav is not None:
        if "lambda1" in data or "lambda2" in data or n1 is not None:
            raise ConfigError("give either ncav/n2 or lambda1/lambda2/n1, not both", "conflicting_drive")
        cfg = SpectatorConfig.from_intracavity(ncav=float(ncav), n2=float(n2 or 0.0), **data)
    elif n1 is not None:
        if "lambda1" in data:
            raise ConfigError("give either n1 or lambda1, not both", "conflicting_drive")
        cfg = SpectatorConfig.from_photons(n1=float(n1), **data)
    else:
        try:
            cfg = SpectatorConfig(**data)
        except TypeError as exc:
            raise ConfigError(str(exc), "bad_fields") from exc
    return Ingested(config=cfg, rate_scale=scale)
