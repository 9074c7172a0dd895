"""Command implementations.  Each returns ``(results, files)``."""

from __future__ import annotations

import math
import pathlib

import numpy as np

from .. import coherence, metrology, model, stochastic
from .spec import ExperimentSpec


def gates(spec: ExperimentSpec) -> dict:
    cfg, S = spec.config, spec.spectrum
    margin = model.validity_linear_noise(cfg, S, tol=min(spec.tol, 1e-6))
    sq = model.validity_squeezing(cfg, S, tol=min(spec.tol, 1e-6))
    return {
        "linear_noise": {"margin": margin, "threshold": spec.threshold, "passed": bool(margin < spec.threshold)},
        "squeezing": {"limit": sq.limit, "one_minus_lambda2_pow4": (1.0 - cfg.lambda2) ** 4, "passed": sq.passed, "lambda2_max": sq.lambda2_max},
    }


def tphi_summary(curve: coherence.CoherenceCurve) -> dict:
    try:
        return {"reached": True, "T_phi": coherence.tphi(curve)}
    except coherence.NotReached as exc:
        return {"reached": False, "max_chi": exc.max_chi}


def derived_dict(cfg: model.SpectatorConfig) -> dict:
    d = cfg.derived
    return {k: getattr(d, k) for k in ("kappa_phi", "kappa_a", "kappa_tot", "n1", "n2", "ncav", "gamma_ff", "alpha_ideal")}


def run_validate(spec: ExperimentSpec, out: pathlib.Path, threads):
    g = gates(spec)
    ok = g["linear_noise"]["passed"] and g["squeezing"]["passed"]
    return {"gates": g, "derived": derived_dict(spec.config), "valid": ok}, []


def run_coherence_curve(spec: ExperimentSpec, out: pathlib.Path, threads):
    t = spec.times(spec.raw["grid"])
    curve = coherence.chi(t, spec.config, spec.spectrum, tol=spec.tol, threads=threads, check_validity=False)
    path = curve.to_csv(out / "curve.csv")
    res = {
        "gates": gates(spec),
        "derived": derived_dict(spec.config),
        "long_time_rate": coherence.long_time_rate(spec.config, spec.spectrum),
        "tphi": tphi_summary(curve),
    }
    return res, [path.name, path.with_suffix(".json").name]


def run_monte_carlo(spec: ExperimentSpec, out: pathlib.Path, threads):
    mc = spec.raw["monte_carlo"]
    t = spec.times(spec.raw["grid"])
    res = stochastic.ensemble_chi(
        spec.spectrum,
        spec.config,
        int(mc["epsilon"]),
        int(mc["n_realizations"]),
        spec.seed,
        t,
        threads=threads,
        dt=mc.get("dt"),
        t_preroll=mc.get("t_preroll"),
        block_size=int(mc.get("block_size", stochastic.BLOCK_SIZE)),
        tol=spec.tol,
    )
    path = res.to_csv(out / "ensemble.csv")
    z = (res.chi_n - res.chi_analytic) / np.where(res.stderr > 0, res.stderr, np.inf)
    summary = {
        "gates": gates(spec),
        "fraction_within_3_stderr": float(np.mean(np.abs(z) < 3.0)) if mc["epsilon"] == 0 else None,
        "unresolved_points": int(np.sum(res.unresolved)),
    }
    if mc["epsilon"] == 1:
        ratio, alpha_r = stochastic.residual_rate_estimate(spec.config, spec.spectrum, tol=spec.tol)
        g_res = ratio * 0.5 * spec.spectrum.S0
        summary["gamma_res_over_gamma0"] = ratio
        summary["alpha_renormalized"] = alpha_r
        summary["chi_res_over_gamma_res_t_last"] = float(res.chi_res[-1] / (g_res * res.t[-1])) if g_res > 0 else None
    return summary, [path.name, path.with_suffix(".json").name]


def run_optimize(spec: ExperimentSpec, out: pathlib.Path, threads):
    opt = spec.raw["optimize"]
    cfg = spec.config
    rows, results = [], []
    if opt["mode"] == "intracavity":
        n_cavs = opt.get("n_cav", [cfg.derived.ncav])
        t0s = [x * spec.rate_scale for x in opt.get("t0", [5.0])]
        for n_cav in n_cavs:
            for t0 in t0s:
                r = metrology.optimize_intracavity(n_cav, t0, cfg)
                rows.append((n_cav, t0, r.n1, r.n2, r.n2 / n_cav, r.lambda2, r.lambda_imp_min))
                results.append(
                    {"n_cav": n_cav, "t0": t0, "n1": r.n1, "n2": r.n2, "lambda2": r.lambda2, "lambda_imp": r.lambda_imp_min,
                     "kappa_c_t0_over_ncav2": r.t0_over_ncav2, "kappa_phi_t0_over_ncav3": r.kphi_t0_over_ncav3}
                )
        header = ["n_cav", "t0", "n1", "n2", "n2_over_ncav", "lambda2", "lambda_imp"]
        path = metrology.write_sweep(out / "intracavity.csv", header, rows)
    else:
        T = float(opt.get("T", 1.0)) * spec.rate_scale
        for n_inc in opt.get("n_inc", [1000.0]):
            n_d, n_s, err = metrology.optimize_incident(n_inc, cfg.beta_s, cfg.kappa_c, T)
            _, _, sql = metrology.optimize_incident(n_inc, cfg.beta_s, cfg.kappa_c, T, fix_n_s=0.0)
            rows.append((n_inc, n_d, n_s, err, sql))
            results.append({"n_inc": n_inc, "n_d": n_d, "n_s": n_s, "delta_xi": err, "delta_xi_sql": sql})
        path = metrology.write_sweep(out / "incident.csv", ["n_inc", "n_d", "n_s", "delta_xi", "delta_xi_sql"], rows)
    return {"optima": results}, [path.name]


def run_delay(spec: ExperimentSpec, out: pathlib.Path, threads):
    d = spec.raw["delay"]
    cfg, S = spec.config, spec.spectrum
    kphi = cfg.kappa_phi
    taus = [x * spec.rate_scale for x in d["tau_d"]]
    grid = d.get("grid", {"t_min": 1e-3 / kphi, "t_max": 100.0 / kphi, "n": 200})
    t = spec.times(grid)
    files, rows, results = [], [], []
    bare = coherence.chi_fid(t, S, spec.tol)
    for k, tau in enumerate(taus):
        env = coherence.chi_delay(t, tau, cfg, S, spec.tol, include_imp=False)
        pre = S.S0 * t + (S.S0 / kphi) * np.expm1(-0.5 * kphi * t) if S.S0 else np.zeros_like(t)
        p = metrology.write_sweep(out / f"delay_{k}.csv", ["t", "chi_delay_env", "chi_pre_delay", "chi_bare"], zip(t, env, pre, bare))
        files.append(p.name)
        try:
            tb = coherence.break_even_time(cfg, S, tau, spec.tol)
        except coherence.NoCrossing:
            tb = math.nan
        rows.append((tau, tb, (2.0 + math.sqrt(2.0)) * tau, 2.0 * (tau + 1.0 / kphi)))
        results.append({"tau_d": tau, "t_br": None if math.isnan(tb) else tb})
    p = metrology.write_sweep(out / "break_even.csv", ["tau_d", "t_br", "small_delay_asymptote", "large_delay_asymptote"], rows)
    files.append(p.name)
    return {"gates": gates(spec), "break_even": results}, files


def run_loss(spec: ExperimentSpec, out: pathlib.Path, threads):
    L = spec.raw["loss"]
    beta = float(L["beta_s"])
    T = float(L.get("T", 1.0))
    nfrac = int(L.get("fraction_grid", 199))
    frac = np.linspace(0.0, 1.0, nfrac + 2)[1:-1]
    files, results = [], []
    for j, r in enumerate(L["kappa_i_ratio"]):
        rows = []
        kphi = 2.0 * (1.0 + r)
        for n_inc in L["n_inc"]:
            best = metrology.optimize_with_loss(n_inc, r, beta, T)
            results.append({"kappa_i_ratio": r, "n_inc": n_inc, "n_d": best.n_d, "n_s": best.n_s,
                            "squeeze_fraction": best.squeeze_fraction, "lambda_imp": best.lambda_imp})
            vals = metrology.loss_objective(n_inc * (1 - frac), n_inc * frac, r, beta, T) / (kphi * T) ** 2
            rows.extend((n_inc, f, v) for f, v in zip(frac, vals))
        p = metrology.write_sweep(out / f"loss_{j}.csv", ["n_inc", "n_s_over_n_inc", "lambda_imp_over_kphiT2"], rows)
        files.append(p.name)
    rows = [(x["kappa_i_ratio"], x["n_inc"], x["n_d"], x["n_s"], x["lambda_imp"]) for x in results]
    p = metrology.write_sweep(out / "loss_optima.csv", ["kappa_i_ratio", "n_inc", "n_d", "n_s", "lambda_imp"], rows)
    files.append(p.name)
    return {"optima": results}, files


COMMANDS = {
    "validate": run_validate,
    "coherence-curve": run_coherence_curve,
    "monte-carlo": run_monte_carlo,
    "optimize-photons": run_optimize,
    "delay-sweep": run_delay,
    "loss-sweep": run_loss,
}
