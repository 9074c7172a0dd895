"""Noise spectral densities and the filter-weighted quadrature engine.

The decoherence integrals all have the form

    I = int dw/2pi S[w] h(w) |Y_fid(w, t)|**2 / w**2

with ``|Y_fid|**2 = 4 sin(w t / 2)**2`` and ``h`` an even, bounded filter
factor.  :class:`FilterKernel` describes such a weight and
:func:`weighted_integral` evaluates it.  The scheme subtracts an analytic
Lorentzian reference carrying the zero-frequency value, integrates the
remaining smooth part on period panels near the origin and hands the tail to
the Fourier-integral routines of QUADPACK.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator

__all__ = [
    "SpectralDensity",
    "White",
    "Lorentzian",
    "Tabulated",
    "evaluate",
    "spectrum_from_mapping",
    "FilterKernel",
    "KernelTerm",
    "weighted_integral",
    "QuadratureError",
    "t_minus_F",
    "F_lorentz",
]


class QuadratureError(RuntimeError):
    """Quadrature failed to reach the requested tolerance.

    Attributes
    ----------
    estimate : float
        Best available value of the integral.
    error : float
        Achieved absolute error estimate.
    """

    def __init__(self, estimate: float, error: float, message: str = ""):
        self.estimate = estimate
        self.error = error
        super().__init__(message or f"quadrature did not converge: estimate={estimate!r}, error={error!r}")


class SpectralDensity:
    """Even, nonnegative noise spectrum ``S[w]`` with finite ``S[0]``."""

    kind = "abstract"

    def __call__(self, omega):
        raise NotImplementedError

    @property
    def S0(self) -> float:
        return float(self(0.0))

    @property
    def scales(self) -> tuple:
        """Characteristic frequencies used as quadrature breakpoints."""
        return ()

    @property
    def cutoff(self) -> float:
        """Frequency above which ``S`` vanishes identically (``inf`` if never)."""
        return math.inf

    def describe(self) -> dict:
        raise NotImplementedError

    def scaled(self, rate_scale: float) -> "SpectralDensity":
        """Re-express the spectrum with rates divided by ``rate_scale``."""
        raise NotImplementedError


@dataclass(frozen=True)
class White(SpectralDensity):
    S0_: float

    kind = "white"

    def __post_init__(self):
        if not (math.isfinite(self.S0_) and self.S0_ >= 0):
            raise ValueError("white noise strength must be finite and >= 0")

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        out = np.full(omega.shape, self.S0_)
        return out if out.ndim else float(out)

    @property
    def S0(self) -> float:
        return self.S0_

    def describe(self) -> dict:
        return {"kind": "white", "S0": self.S0_}

    def scaled(self, rate_scale: float) -> "White":
        return White(self.S0_ / rate_scale)


@dataclass(frozen=True)
class Lorentzian(SpectralDensity):
    """``S0 (gamma/2)**2 / (w**2 + (gamma/2)**2)``; autocorrelation ``(S0 gamma/4) exp(-gamma|tau|/2)``."""

    S0_: float
    gamma: float

    kind = "lorentzian"

    def __post_init__(self):
        if not (math.isfinite(self.S0_) and self.S0_ >= 0):
            raise ValueError("Lorentzian strength must be finite and >= 0")
        if not (math.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError("Lorentzian bandwidth must be finite and > 0")

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        b2 = 0.25 * self.gamma**2
        out = self.S0_ * b2 / (omega**2 + b2)
        return out if out.ndim else float(out)

    @property
    def S0(self) -> float:
        return self.S0_

    @property
    def scales(self) -> tuple:
        return (0.5 * self.gamma,)

    def autocorrelation(self, tau):
        return 0.25 * self.S0_ * self.gamma * np.exp(-0.5 * self.gamma * np.abs(tau))

    def describe(self) -> dict:
        return {"kind": "lorentzian", "S0": self.S0_, "gamma": self.gamma}

    def scaled(self, rate_scale: float) -> "Lorentzian":
        return Lorentzian(self.S0_ / rate_scale, self.gamma / rate_scale)


class Tabulated(SpectralDensity):
    """Spectrum tabulated on ``w >= 0`` and mirrored to negative frequencies.

    Monotone piecewise-cubic (PCHIP) interpolation between the knots.  Below
    the first knot the spectrum is held flat at ``S[w_min]`` so that ``S[0]``
    stays finite; above the last knot it is zero.
    """

    kind = "tabulated"

    def __init__(self, omega: Sequence[float], values: Sequence[float], source: str | None = None):
        omega = np.asarray(omega, dtype=float)
        values = np.asarray(values, dtype=float)
        if omega.ndim != 1 or omega.shape != values.shape or omega.size < 2:
            raise ValueError("tabulated spectrum needs two equal-length 1-D columns with >= 2 rows")
        if not (np.all(np.isfinite(omega)) and np.all(np.isfinite(values))):
            raise ValueError("tabulated spectrum contains non-finite entries (infrared-singular spectra need a cutoff)")
        if np.any(omega < 0):
            raise ValueError("tabulate the spectrum on omega >= 0 only; it is mirrored automatically")
        if np.any(np.diff(omega) <= 0):
            raise ValueError("tabulated frequencies must be strictly increasing")
        if np.any(values < 0):
            raise ValueError("spectral density must be nonnegative")
        self.omega = omega
        self.values = values
        self.source = source
        self._interp = PchipInterpolator(omega, values, extrapolate=False)

    def __call__(self, omega):
        w = np.abs(np.asarray(omega, dtype=float))
        out = np.where(w <= self.omega[0], self.values[0], 0.0)
        inside = (w > self.omega[0]) & (w <= self.omega[-1])
        if np.any(inside):
            out = out.copy() if out.ndim else np.array(out)
            out[inside] = np.maximum(self._interp(w[inside]), 0.0)
        return out if np.ndim(out) else float(out)

    @property
    def scales(self) -> tuple:
        knots = self.omega[self.omega > 0]
        if knots.size > 64:
            knots = knots[np.unique(np.linspace(0, knots.size - 1, 64).round().astype(int))]
        return tuple(float(k) for k in knots) + (float(self.omega[-1]),)

    @property
    def cutoff(self) -> float:
        return float(self.omega[-1])

    def describe(self) -> dict:
        out = {"kind": "tabulated", "omega": self.omega.tolist(), "S": self.values.tolist()}
        if self.source:
            out["source"] = self.source
        return out

    def scaled(self, rate_scale: float) -> "Tabulated":
        return Tabulated(self.omega / rate_scale, self.values / rate_scale, self.source)

    @classmethod
    def from_csv(cls, path) -> "Tabulated":
        """Read a two-column ``omega,S`` CSV with one header line."""
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if len(rows) < 3:
            raise ValueError(f"{path}: need a header line and at least two data rows")
        try:
            data = np.array([[float(r[0]), float(r[1])] for r in rows[1:] if r], dtype=float)
        except (ValueError, IndexError) as exc:
            raise ValueError(f"{path}: malformed row ({exc})") from exc
        return cls(data[:, 0], data[:, 1], source=str(path))


def evaluate(S: SpectralDensity, omega):
    """Return ``S[|omega|]``."""
    return S(np.abs(np.asarray(omega, dtype=float)))


def spectrum_from_mapping(data: dict, rate_scale: float = 1.0, base_dir=None) -> SpectralDensity:
    """Build a spectrum from ``{"kind": ..., ...}``; rates divided by ``rate_scale``."""
    kind = data.get("kind")
    if kind == "white":
        S = White(float(data["S0"]))
    elif kind == "lorentzian":
        S = Lorentzian(float(data["S0"]), float(data["gamma"]))
    elif kind == "tabulated":
        if "csv" in data:
            import pathlib

            path = pathlib.Path(data["csv"])
            if base_dir is not None and not path.is_absolute():
                path = pathlib.Path(base_dir) / path
            S = Tabulated.from_csv(path)
        else:
            S = Tabulated(data["omega"], data["S"])
    else:
        raise ValueError(f"unknown spectrum kind {kind!r}")
    return S if rate_scale == 1.0 else S.scaled(rate_scale)


# ---------------------------------------------------------------------------
# closed forms used by the reference subtraction and by the analytic engine


def F_lorentz(c: float, t: float) -> float:
    """``int dw/2pi 4 sin(wt/2)**2 / (w**2 + c**2) = (1 - exp(-c t)) / c``."""
    if c == 0:
        return t
    return -math.expm1(-c * t) / c


def t_minus_F(c: float, t: float) -> float:
    """``t - (1 - exp(-c t))/c`` without cancellation for small ``c t``."""
    x = c * t
    if x < 1e-3:
        # x/2 - x^2/6 + x^3/24 - x^4/120
        return t * x * (0.5 - x * (1.0 / 6.0 - x * (1.0 / 24.0 - x / 120.0)))
    return (x + math.expm1(-x)) / c


# ---------------------------------------------------------------------------
# kernels


@dataclass(frozen=True)
class KernelTerm:
    """One term ``coef(w) * trig(w * shift)`` of a filter factor ``h``.

    ``trig`` is ``"one"`` (constant 1), ``"cos"`` or ``"sin"``.
    ``coef`` must be even for ``cos``/``one`` terms and odd for ``sin`` terms
    so that ``h`` stays even.
    """

    coef: Callable[[np.ndarray], np.ndarray]
    trig: str = "one"
    shift: float = 0.0

    def __post_init__(self):
        if self.trig not in ("one", "cos", "sin"):
            raise ValueError("trig must be 'one', 'cos' or 'sin'")
        if self.shift < 0:
            raise ValueError("shift must be >= 0")

    def __call__(self, w):
        c = self.coef(w)
        if self.trig == "one":
            return c
        if self.trig == "cos":
            return c * np.cos(w * self.shift)
        return c * np.sin(w * self.shift)


def _one(w):
    return np.ones_like(np.asarray(w, dtype=float))


@dataclass(frozen=True)
class FilterKernel:
    """Weight ``h(w) |Y_fid(w, t)|**2 / w**2`` with ``h = sum(terms)``.

    Parameters
    ----------
    t : float
        Evolution time.
    terms : tuple of KernelTerm
        Components of the filter factor.
    scales : tuple of float
        Characteristic frequencies of ``h`` (breakpoints).
    """

    t: float
    terms: tuple = field(default_factory=lambda: (KernelTerm(_one),))
    scales: tuple = ()

    def __post_init__(self):
        if not (math.isfinite(self.t) and self.t >= 0):
            raise ValueError("t must be finite and >= 0")

    @classmethod
    def fid(cls, t: float) -> "FilterKernel":
        return cls(t=t)

    @classmethod
    def lorentz_denominator(cls, t: float, a: float) -> "FilterKernel":
        """Weight ``|Y_fid|**2 / (w**2 + a**2)``."""
        a2 = a * a
        return cls(t=t, terms=(KernelTerm(lambda w: w**2 / (w**2 + a2)),), scales=(a,))

    def h(self, w):
        w = np.asarray(w, dtype=float)
        return sum(term(w) for term in self.terms)

    def __call__(self, w):
        """Full weight, with the ``w -> 0`` limit ``h(0) t**2`` taken analytically."""
        w = np.asarray(w, dtype=float)
        half = 0.5 * w * self.t
        sinc = np.sinc(half / np.pi)  # sin(x)/x
        return self.h(w) * self.t**2 * sinc**2

    @property
    def shifts(self) -> tuple:
        return tuple(term.shift for term in self.terms if term.trig != "one")


def _quad(f, a, b, tol, epsabs, points=None, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        kwargs = dict(epsabs=epsabs, epsrel=tol, limit=400, full_output=1)
        kwargs.update(kw)
        if points is not None and len(points) and math.isfinite(b):
            pts = [p for p in points if a < p < b]
            if pts:
                kwargs["points"] = pts
        out = integrate.quad(f, a, b, **kwargs)
    val, err = out[0], out[1]
    ier = 0 if len(out) == 3 else 1
    return val, err, ier


def _quad_inf(g, a, tol, epsabs):
    """``int_a^inf g(w) dw`` via ``w = a/u``; smooth on ``[0, 1]`` for ``g ~ w**-2``."""
    if a <= 0:
        return _quad(g, a, np.inf, tol, epsabs)

    def f(u):
        if u == 0.0:
            return 0.0
        return g(a / u) * a / (u * u)

    return _quad(f, 0.0, 1.0, tol, epsabs)


def _cos_sin_integrals(g, a, freq, trig, tol, epsabs):
    """``int_a^inf g(w) trig(freq w) dw`` (``trig`` in cos/sin)."""
    if freq == 0:
        if trig == "sin":
            return 0.0, 0.0, 0
        return _quad_inf(g, a, tol, epsabs)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        out = integrate.quad(g, a, np.inf, weight=trig, wvar=freq, epsabs=epsabs, limlst=200, limit=400, full_output=1)
    val, err = out[0], out[1]
    ier = 0 if len(out) == 3 else 1
    return val, err, ier


def _panel_edges(lo, hi, period, extra):
    n = int(math.ceil((hi - lo) / period - 1e-12))
    edges = set(np.linspace(lo, hi, max(n, 1) + 1).tolist())
    edges.update(p for p in extra if lo < p < hi)
    return sorted(edges)


def _fid_weighted(S: SpectralDensity, kernel: FilterKernel, tol: float) -> tuple:
    t = kernel.t
    if t == 0:
        return 0.0, 0.0
    cutoff = S.cutoff
    scales = sorted({s for s in tuple(S.scales) + tuple(kernel.scales) if s > 0 and math.isfinite(s)})
    shifts = kernel.shifts
    c = scales[0] if scales else 1.0 / t
    # reference carries S(0) h(0): D(w) = (S h - F0 c^2/(w^2+c^2)) / w^2 is regular at 0
    F0 = float(S(0.0)) * float(kernel.h(np.array(0.0)))
    ref = F0 * t_minus_F(c, t)
    c2 = c * c

    def sh(w):
        return S(w) * kernel.h(w)

    # small-w clamp against cancellation
    longest = max((t,) + shifts)
    w_clamp = 1e-6 * min(c, 1.0 / longest)

    def D(w):
        w = max(w, w_clamp)
        return (sh(w) - F0 * c2 / (w * w + c2)) / (w * w)

    omega1 = 2.0 * math.pi * 8.0 / longest
    if cutoff < omega1:
        omega1 = cutoff
    scale_mag = abs(ref) + abs(float(S(0.0))) * t + 1e-300

    # low region: (1/pi) int_0^omega1 D(w) 4 sin^2(w t/2) dw over period panels
    period = 2.0 * math.pi / longest
    edges = _panel_edges(0.0, omega1, period, scales)
    low, low_err, bad = 0.0, 0.0, False
    for a, b in zip(edges[:-1], edges[1:]):
        v, e, ier = _quad(lambda w: D(w) * 4.0 * math.sin(0.5 * w * t) ** 2, a, b, tol, 0.01 * tol * scale_mag * math.pi)
        low += v
        low_err += e
        bad |= ier != 0
    low /= math.pi
    low_err /= math.pi
    scale_mag = max(scale_mag, abs(low) + abs(ref))
    epsabs = 0.01 * tol * scale_mag * math.pi

    # tail: 2 D (1 - cos wt) split into plain and Fourier pieces per term
    tail, tail_err = 0.0, 0.0
    seg = [omega1] + [s for s in scales if s > omega1 and (s < cutoff or s == cutoff)]
    if math.isfinite(cutoff) and cutoff > omega1 and cutoff not in seg:
        seg.append(cutoff)
    # geometric ladder: finite QAWO segments out to well past the last scale,
    # so the semi-infinite Fourier piece only sees a smooth power-law tail
    top = 4.0**8 * max(seg)
    w = omega1 * 4.0
    while w < top:
        if not (math.isfinite(cutoff) and w >= cutoff):
            seg.append(w)
        w *= 4.0
    seg = sorted(set(seg))

    plain_terms = [term for term in kernel.terms if term.trig == "one"]
    osc_terms = [term for term in kernel.terms if term.trig != "one"]

    def D_plain(w):
        hp = sum(term.coef(w) for term in plain_terms) if plain_terms else 0.0
        return (S(w) * hp - F0 * c2 / (w * w + c2)) / (w * w)

    # each piece: (function g, trig, frequency) with weight +/- ; integral over [omega1, inf)
    pieces = [(D_plain, "one", 0.0, 1.0), (D_plain, "cos", t, -1.0)]
    for term in osc_terms:
        g = (lambda term: lambda w: S(w) * term.coef(w) / (w * w))(term)
        s = term.shift
        pieces.append((g, term.trig, s, 1.0))
        pieces.append((g, term.trig, s + t, -0.5))
        d = s - t
        sign = 1.0 if (term.trig == "cos" or d >= 0) else -1.0
        pieces.append((g, term.trig, abs(d), -0.5 * sign))

    for g, trig, freq, wt in pieces:
        for a, b in zip(seg[:-1], seg[1:]):
            if trig == "one" or freq == 0:
                if trig == "sin":
                    continue
                v, e, ier = _quad(g, a, b, tol, epsabs)
            else:
                v, e, ier = _quad(g, a, b, tol, epsabs, weight=trig, wvar=freq)
            tail += wt * v
            tail_err += abs(wt) * e
            bad |= ier != 0
        a = seg[-1]
        if math.isfinite(cutoff) and a >= cutoff:
            # beyond the cutoff only the reference remains in D_plain; S == 0 kills the rest
            if g is D_plain:
                gref = lambda w: -F0 * c2 / ((w * w + c2) * w * w)
                if trig == "one":
                    v, e, ier = _quad_inf(gref, a, tol, epsabs)
                else:
                    v, e, ier = _cos_sin_integrals(gref, a, freq, trig, tol, epsabs)
                tail += wt * v
                tail_err += abs(wt) * e
                bad |= ier != 0
            continue
        if trig == "one":
            v, e, ier = _quad_inf(g, a, tol, epsabs)
        else:
            v, e, ier = _cos_sin_integrals(g, a, freq, trig, tol, epsabs)
        tail += wt * v
        tail_err += abs(wt) * e
        bad |= ier != 0
    tail *= 2.0 / math.pi
    tail_err *= 2.0 / math.pi

    total = ref + low + tail
    err = low_err + tail_err
    if bad and err > max(tol * abs(total), 1e-300):
        raise QuadratureError(total, err)
    return total, err


def _generic(S: SpectralDensity, weight: Callable, tol: float, points: Iterable[float] = ()) -> tuple:
    pts = sorted({p for p in tuple(points) + tuple(S.scales) if p > 0 and math.isfinite(p)})
    cutoff = S.cutoff
    edges = [0.0] + [p for p in pts if p < cutoff]
    top = cutoff if math.isfinite(cutoff) else np.inf

    def f(w):
        return float(S(w)) * float(weight(w))

    total, err, bad = 0.0, 0.0, False
    bounds = edges + [top] if top not in edges else edges
    for a, b in zip(bounds[:-1], bounds[1:]):
        v, e, ier = _quad(f, a, b, tol, 0.0 if math.isfinite(b) else 1e-300)
        total += v
        err += e
        bad |= ier != 0
    total /= math.pi
    err /= math.pi
    if bad and err > tol * abs(total):
        raise QuadratureError(total, err)
    return total, err


def weighted_integral(S: SpectralDensity, weight, tol: float = 1e-8, points: Iterable[float] = (), full_output: bool = False):
    """Compute ``int dw/2pi S[w] weight(w)`` as ``(1/pi) int_0^inf``.

    Parameters
    ----------
    S : SpectralDensity
    weight : FilterKernel or callable
        Even weight.  A :class:`FilterKernel` triggers the oscillation-aware
        scheme; any other callable is integrated adaptively with breakpoints
        at ``points`` and the spectrum's scales.
    tol : float
        Target relative error.
    full_output : bool
        Also return the absolute error estimate.

    Raises
    ------
    QuadratureError
        If the target accuracy is not reached; carries the best estimate.
    """
    if isinstance(weight, FilterKernel):
        val, err = _fid_weighted(S, weight, tol)
    else:
        val, err = _generic(S, weight, tol, points)
    return (val, err) if full_output else val
