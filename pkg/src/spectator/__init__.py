"""Spectator-mode noise mitigation of qubit dephasing: analytic, stochastic and metrology engines."""

from .model import ConfigError, SpectatorConfig, derive
from .spectra import Lorentzian, QuadratureError, Tabulated, White

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "SpectatorConfig",
    "derive",
    "White",
    "Lorentzian",
    "Tabulated",
    "QuadratureError",
]
