"""Figure-reproduction presets.

Each preset separates parameters stated in the figure caption from values
the caption leaves open (grids, ranges, counts).  Only the latter may be
overridden, and they are reported as ``preset_defaults`` in the summary.
"""

from __future__ import annotations

import copy
import math
import pathlib

import numpy as np

from .. import coherence, metrology, stochastic
from ..model import SpectatorConfig
from ..spectra import Lorentzian, White
from .spec import ExperimentSpec, SpecError

PRESETS = {
    "fig1b": {
        "caption": {"beta_s": 0.5, "S0": 1e-3, "alpha_s": 1.0, "n_cav": 1000.0, "lambda2_quoted": 0.74},
        "defaults": {"t0": 5.0, "t_min": 1e-2, "t_max": 1e7, "n_t": 200},
    },
    "fig3": {
        "caption": {"beta_s": 1.0, "S0_over_kappa_phi": 0.01, "lambda2": 0.0, "alpha_s": 1.0, "n_cav": [10.0, 100.0, 1000.0]},
        "defaults": {"t_min": 1e-2, "t_max": 1e6, "n_t": 200},
    },
    "fig4": {
        "caption": {"S0_over_kappa_phi": 0.01, "alpha_s": 1.0},
        "defaults": {"beta_s": 1.0, "n1": 1000.0, "gamma_broadband": [10.0, 100.0], "gamma_narrowband": [0.01, 0.1],
                     "t_min": 1e-3, "t_max": 1e4, "n_t": 200},
    },
    "fig5": {
        "caption": {"alpha_s": 1.0, "beta_s": 1.0},
        "defaults": {"n_cav": [10.0, 100.0, 1000.0], "t0_min": 1e-2, "t0_max": 1e10, "n_t0": 49},
    },
    "fig6": {
        "caption": {"beta_s": 1.0, "lambda2": 0.0},
        "defaults": {"gamma": [1.0, 4.0], "S0": [1e-3, 1e-2], "n_realizations": 10000, "n1": 100.0,
                     "t_min": 0.5, "t_max": 50.0, "n_t": 20},
    },
    "fig7": {
        "caption": {"S0_over_kappa_phi": 0.01},
        "defaults": {"alpha_s": 1.0, "beta_s": 1.0, "n1": 1000.0, "tau_d": [0.01, 0.1, 1.0, 10.0],
                     "t_min": 1e-3, "t_max": 1e3, "n_t": 200},
    },
    "fig8": {
        "caption": {"n_inc": [250.0, 2500.0], "g": 1.0},
        "defaults": {"kappa_i_ratio": [1e-3, 1e-2, 1e-1], "T": 1.0, "fraction_grid": 199},
    },
}


def resolve(name: str, overrides: dict | None) -> dict:
    preset = copy.deepcopy(PRESETS[name])
    for key, value in (overrides or {}).items():
        if key in preset["caption"]:
            raise SpecError([{"code": f"figure:caption_parameter:{key}", "message": f"{key} is fixed by the {name} caption"}])
        if key not in preset["defaults"]:
            raise SpecError([{"code": f"figure:unknown_override:{key}", "message": f"{name} has no preset default {key!r}"}])
        preset["defaults"][key] = value
    return preset


def _grid(d):
    return np.geomspace(d["t_min"], d["t_max"], int(d["n_t"]))


def _curve(t, cfg, S, tol, threads, include_imp=True):
    c = coherence.chi(t, cfg, S, tol=tol, threads=threads, check_validity=False)
    if not include_imp:
        c.lambda_imp = np.zeros_like(c.t)
        c.include_imp = False
    return c


def fig1b(p, spec, out, threads):
    cap, d = p["caption"], p["defaults"]
    S = White(cap["S0"])
    t = _grid(d)
    base = SpectatorConfig.from_photons(beta_s=cap["beta_s"], n1=cap["n_cav"], alpha_s=cap["alpha_s"])
    opt = metrology.optimize_intracavity(cap["n_cav"], d["t0"], base)
    squeezed = SpectatorConfig.from_intracavity(beta_s=cap["beta_s"], ncav=cap["n_cav"], n2=opt.n2, alpha_s=cap["alpha_s"])
    curves = {
        "bare": _curve(t, base.replace(alpha_s=0.0), S, spec.tol, threads),
        "no_squeezing": _curve(t, base, S, spec.tol, threads),
        "optimized_squeezing": _curve(t, squeezed, S, spec.tol, threads),
        "ncav_infinite": _curve(t, base, S, spec.tol, threads, include_imp=False),
    }
    files, res = [], {}
    for key, c in curves.items():
        files.append(c.to_csv(out / f"fig1b_{key}.csv").name)
        res[key] = tphi_of(c)
    from .commands import gates

    gspec = copy.copy(spec)
    gspec.config, gspec.spectrum = squeezed, S
    res["optimized"] = {"n2": opt.n2, "lambda2": opt.lambda2, "gates": gates(gspec),
                        "long_time_rate_over_gamma0": coherence.long_time_rate(squeezed, S) / (0.5 * S.S0)}
    return res, files


def tphi_of(c):
    try:
        return {"T_phi": coherence.tphi(c)}
    except coherence.NotReached as exc:
        return {"T_phi": None, "max_chi": exc.max_chi}


def fig3(p, spec, out, threads):
    cap, d = p["caption"], p["defaults"]
    kphi = 1.0  # lambda2 = 0
    S = White(cap["S0_over_kappa_phi"] * kphi)
    t = _grid(d)
    files, res = [], {}
    bare_cfg = SpectatorConfig.from_photons(beta_s=cap["beta_s"], n1=1.0, alpha_s=0.0)
    c = _curve(t, bare_cfg, S, spec.tol, threads)
    files.append(c.to_csv(out / "fig3_bare.csv").name)
    res["bare"] = tphi_of(c)
    for n in cap["n_cav"]:
        cfg = SpectatorConfig.from_photons(beta_s=cap["beta_s"], n1=n, lambda2=cap["lambda2"], alpha_s=cap["alpha_s"])
        c = _curve(t, cfg, S, spec.tol, threads)
        files.append(c.to_csv(out / f"fig3_ncav{int(n)}.csv").name)
        res[f"ncav{int(n)}"] = tphi_of(c)
    return res, files


def fig4(p, spec, out, threads):
    cap, d = p["caption"], p["defaults"]
    cfg = SpectatorConfig.from_photons(beta_s=d["beta_s"], n1=d["n1"], alpha_s=cap["alpha_s"])
    kphi = cfg.kappa_phi
    S0 = cap["S0_over_kappa_phi"] * kphi
    t = _grid(d)
    files, res = [], {}
    for band in ("broadband", "narrowband"):
        for g in d[f"gamma_{band}"]:
            S = Lorentzian(S0, g * kphi)
            env = coherence.chi_env(t, cfg, S, spec.tol, threads)
            bare = coherence.chi_fid(t, S, spec.tol)
            name = f"fig4_{band}_gamma{g:g}.csv"
            metrology.write_sweep(out / name, ["t", "chi_env", "chi_bare"], zip(t, env, bare))
            files.append(name)
            entry = {"gamma": g * kphi}
            if band == "narrowband":
                # intermediate-time slope at the geometric midpoint of 1/kappa_phi and 1/gamma
                tm = 1.0 / math.sqrt(kphi * g * kphi)
                h = 0.05 * tm
                slope = (coherence.chi_env(tm + h, cfg, S, spec.tol) - coherence.chi_env(tm - h, cfg, S, spec.tol)) / (2 * h)
                entry.update(intermediate_slope=slope, predicted=(g) ** 2 * S0 / 2)
            res[f"{band}_gamma{g:g}"] = entry
    return res, files


def fig5(p, spec, out, threads):
    cap, d = p["caption"], p["defaults"]
    cfg = SpectatorConfig.from_photons(beta_s=cap["beta_s"], n1=1.0, alpha_s=cap["alpha_s"])
    t0s = np.geomspace(d["t0_min"], d["t0_max"], int(d["n_t0"]))
    rows, res = [], {}
    for n in d["n_cav"]:
        fr = []
        for t0 in t0s:
            r = metrology.optimize_intracavity(n, t0, cfg)
            rows.append((n, t0, r.n2 / n, r.lambda_imp_min, r.t0_over_ncav2, r.kphi_t0_over_ncav3))
            fr.append(r.n2 / n)
        res[f"ncav{int(n)}"] = {"fraction_at_longest_t0": fr[-1], "fraction_at_shortest_t0": fr[0]}
    header = ["n_cav", "kappa_c_t0", "n2_over_ncav", "lambda_imp", "kappa_c_t0_over_ncav2", "kappa_phi_t0_over_ncav3"]
    metrology.write_sweep(out / "fig5.csv", header, rows)
    return res, ["fig5.csv"]


def fig6(p, spec, out, threads):
    cap, d = p["caption"], p["defaults"]
    t = _grid(d)
    files, res = [], {}
    for g in d["gamma"]:
        for S0 in d["S0"]:
            S = Lorentzian(S0, g)
            cfg = SpectatorConfig.from_photons(beta_s=cap["beta_s"], n1=d["n1"], lambda2=cap["lambda2"])
            ens = stochastic.ensemble_chi(S, cfg, 1, int(d["n_realizations"]), spec.seed, t, threads=threads, tol=spec.tol)
            ratio, _ = stochastic.residual_rate_estimate(cfg, S, tol=spec.tol)
            g_res = ratio * 0.5 * S0
            rr = ens.chi_res / (g_res * ens.t)
            name = f"fig6_gamma{g:g}_S0{S0:g}.csv"
            metrology.write_sweep(out / name, ["t", "chi_res", "stderr_res", "gamma_res_t", "ratio"],
                                  zip(ens.t, ens.chi_res, ens.stderr_res, g_res * ens.t, rr))
            files.append(name)
            res[f"gamma{g:g}_S0{S0:g}"] = {"gamma_res_over_gamma0": ratio, "ratio_at_t_max": float(rr[-1])}
    return res, files


def fig7(p, spec, out, threads):
    cap, d = p["caption"], p["defaults"]
    cfg = SpectatorConfig.from_photons(beta_s=d["beta_s"], n1=d["n1"], alpha_s=d["alpha_s"])
    kphi = cfg.kappa_phi
    S = White(cap["S0_over_kappa_phi"] * kphi)
    t = _grid(d)
    bare = coherence.chi_fid(t, S, spec.tol)
    pre = S.S0 * t + (S.S0 / kphi) * np.expm1(-0.5 * kphi * t)
    files, res, rows = [], {}, []
    for tau in d["tau_d"]:
        tau = tau / kphi
        env = coherence.chi_delay(t, tau, cfg, S, spec.tol, include_imp=False)
        name = f"fig7_tau{tau * kphi:g}.csv"
        metrology.write_sweep(out / name, ["t", "chi_delay_env", "chi_pre_delay", "chi_bare"], zip(t, env, pre, bare))
        files.append(name)
        tb = coherence.break_even_time(cfg, S, tau, spec.tol)
        rows.append((tau, tb))
        res[f"tau{tau * kphi:g}"] = {"t_br": tb, "small_delay_asymptote": (2 + math.sqrt(2)) * tau,
                                     "large_delay_asymptote": 2 * (tau + 1 / kphi)}
    metrology.write_sweep(out / "fig7_break_even.csv", ["tau_d", "t_br"], rows)
    files.append("fig7_break_even.csv")
    return res, files


def fig8(p, spec, out, threads):
    cap, d = p["caption"], p["defaults"]
    beta = cap["g"]  # read as the coupling factor beta_s
    frac = np.linspace(0.0, 1.0, int(d["fraction_grid"]) + 2)[1:-1]
    rows, res = [], {}
    for r in d["kappa_i_ratio"]:
        kphi = 2.0 * (1.0 + r)
        for n in cap["n_inc"]:
            vals = metrology.loss_objective(n * (1 - frac), n * frac, r, beta, d["T"]) / (kphi * d["T"]) ** 2
            rows.extend((r, n, f, v) for f, v in zip(frac, vals))
            best = metrology.optimize_with_loss(n, r, beta, d["T"])
            res[f"ki{r:g}_ninc{int(n)}"] = {"optimal_squeeze_fraction": best.squeeze_fraction}
    metrology.write_sweep(out / "fig8.csv", ["kappa_i_ratio", "n_inc", "n_s_over_n_inc", "lambda_imp_over_kphiT2"], rows)
    return res, ["fig8.csv"]


FIGURES = {"fig1b": fig1b, "fig3": fig3, "fig4": fig4, "fig5": fig5, "fig6": fig6, "fig7": fig7, "fig8": fig8}


def run_figure(spec: ExperimentSpec, out: pathlib.Path, threads):
    fig = spec.raw["figure"]
    name = fig["name"]
    p = resolve(name, fig.get("overrides"))
    res, files = FIGURES[name](p, spec, out, threads)
    return {"figure": name, "caption_parameters": p["caption"], "preset_defaults": p["defaults"], "results": res}, files
