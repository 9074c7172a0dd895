import json
import subprocess
import sys

import numpy as np
import pytest

from spectator import cli, spectra
from spectator.cli import EXIT_CONVERGENCE, EXIT_OK, EXIT_VALIDATION, main

FIG1B = {
    "command": "validate",
    "config": {"beta_s": 0.5, "ncav": 1000.0, "n2": 0.6, "alpha_s": 1.0},
    "spectrum": {"kind": "white", "S0": 1e-3},
}


def write(tmp_path, data, name="spec.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def report(out):
    return json.loads((out / "report.json").read_text())


def test_validate_fig1b(tmp_path):
    out = tmp_path / "o"
    assert main(["validate", "--config", write(tmp_path, FIG1B), "--out", str(out)]) == EXIT_OK
    r = report(out)["results"]
    assert r["valid"]
    assert r["gates"]["linear_noise"]["passed"] and r["gates"]["squeezing"]["passed"]


def test_validate_failing_gate_exits_2(tmp_path):
    data = dict(FIG1B, spectrum={"kind": "white", "S0": 10.0})
    out = tmp_path / "o"
    assert main(["validate", "--config", write(tmp_path, data), "--out", str(out)]) == EXIT_VALIDATION
    assert not report(out)["results"]["gates"]["linear_noise"]["passed"]


def curve_spec(alpha=0.0, S0=0.01):
    return {
        "command": "coherence-curve",
        "config": {"beta_s": 1.0, "n1": 100.0, "alpha_s": alpha},
        "spectrum": {"kind": "white", "S0": S0},
        "grid": {"t_min": 1.0, "t_max": 1e3, "n": 40},
    }


def test_coherence_curve_bare_tphi(tmp_path):
    out = tmp_path / "o"
    assert main(["coherence-curve", "--config", write(tmp_path, curve_spec()), "--out", str(out)]) == EXIT_OK
    r = report(out)["results"]
    np.testing.assert_allclose(r["tphi"]["T_phi"], 2 / 0.01, rtol=1e-6)
    rows = np.loadtxt(out / "curve.csv", delimiter=",", skiprows=1)
    np.testing.assert_allclose(rows[:, 1], 0.005 * rows[:, 0], rtol=1e-7)


def test_manifest_roundtrip_bit_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["coherence-curve", "--config", write(tmp_path, curve_spec(1.0)), "--out", str(a), "--tol", "1e-9"]) == 0
    assert main(["run", "--config", str(a / "manifest.json"), "--out", str(b)]) == 0
    assert (a / "curve.csv").read_bytes() == (b / "curve.csv").read_bytes()
    m = json.loads((a / "manifest.json").read_text())
    assert m["tol"] == 1e-9 and m["command"] == "coherence-curve"


def errors(tmp_path, argv):
    out = tmp_path / "err"
    code = main(argv + ["--out", str(out)])
    return code, [e["code"] for e in json.loads((out / "error.json").read_text())["errors"]]


def test_missing_fields_distinct_codes(tmp_path):
    data = {"command": "coherence-curve", "config": {"n1": 1.0}}
    code, codes = errors(tmp_path, ["run", "--config", write(tmp_path, data)])
    assert code == EXIT_VALIDATION
    for c in ("missing_field:config.beta_s", "missing_field:spectrum", "missing_field:grid"):
        assert c in codes
    assert len(codes) == len(set(codes))


@pytest.mark.parametrize(
    "mutate, expected",
    [
        (lambda d: d["config"].update(lambda2=1.0), "invalid:config.lambda2:exclusiveMaximum"),
        (lambda d: d["config"].update(eta=1.5), "invalid:config.eta:maximum"),
        (lambda d: d["spectrum"].update(kind="pink"), "invalid:spectrum.kind:enum"),
        (lambda d: d.update(extra=1), "invalid:<root>:additionalProperties"),
    ],
)
def test_invalid_values(tmp_path, mutate, expected):
    data = curve_spec()
    mutate(data)
    code, codes = errors(tmp_path, ["run", "--config", write(tmp_path, data)])
    assert code == EXIT_VALIDATION
    assert expected in codes


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert errors(tmp_path, ["validate", "--config", str(bad)]) == (EXIT_VALIDATION, ["config:malformed_json"])
    assert errors(tmp_path, ["validate", "--config", str(tmp_path / "none.json")]) == (EXIT_VALIDATION, ["config:unreadable"])
    assert errors(tmp_path, ["validate"]) == (EXIT_VALIDATION, ["missing_field:--config"])
    assert errors(tmp_path, ["coherence-curve", "--config", write(tmp_path, FIG1B)])[1] == ["conflict:command"]
    assert errors(tmp_path, ["validate", "--config", write(tmp_path, FIG1B), "--threads", "0"])[1] == ["invalid:threads"]
    assert errors(tmp_path, ["validate", "--config", write(tmp_path, FIG1B), "--seed", "-1"])[1] == ["invalid:seed"]


def test_convergence_failure_exits_3(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise spectra.QuadratureError("no convergence", 1.5, 0.1)

    monkeypatch.setattr(cli.commands.coherence, "chi", boom)
    code, codes = errors(tmp_path, ["run", "--config", write(tmp_path, curve_spec())])
    assert code == EXIT_CONVERGENCE
    assert codes == ["quadrature:no_convergence"]


def test_out_precedence(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    cfg = write(tmp_path, FIG1B)
    monkeypatch.setenv("SPECTATOR_OUT", str(tmp_path / "env"))
    assert main(["validate", "--config", cfg]) == 0
    assert (tmp_path / "env" / "report.json").exists()
    assert main(["validate", "--config", cfg, "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "report.json").exists()
    monkeypatch.delenv("SPECTATOR_OUT")
    assert main(["validate", "--config", cfg]) == 0
    assert (tmp_path / "spectator-out" / "report.json").exists()


def mc_spec():
    return {
        "command": "monte-carlo",
        "config": {"beta_s": 1.0, "n1": 100.0},
        "spectrum": {"kind": "lorentzian", "S0": 0.05, "gamma": 2.0},
        "grid": {"t": [0.5, 2.0, 5.0]},
        "monte_carlo": {"n_realizations": 200, "epsilon": 1},
        "seed": 99,
    }


def test_monte_carlo_thread_determinism(tmp_path, monkeypatch):
    cfg = write(tmp_path, mc_spec())
    assert main(["monte-carlo", "--config", cfg, "--out", str(tmp_path / "a"), "--threads", "1"]) == 0
    monkeypatch.setenv("SPECTATOR_THREADS", "3")
    assert main(["monte-carlo", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "ensemble.csv").read_bytes() == (tmp_path / "b" / "ensemble.csv").read_bytes()
    assert main(["monte-carlo", "--config", cfg, "--out", str(tmp_path / "c"), "--seed", "100"]) == 0
    assert (tmp_path / "a" / "ensemble.csv").read_bytes() != (tmp_path / "c" / "ensemble.csv").read_bytes()
    assert report(tmp_path / "a")["results"]["gamma_res_over_gamma0"] > 0


def test_figure_fig3(tmp_path):
    out = tmp_path / "f"
    assert main(["figure", "fig3", "--out", str(out)]) == 0
    r = report(out)["results"]
    assert r["figure"] == "fig3"
    assert r["caption_parameters"]["S0_over_kappa_phi"] == 0.01
    assert "fig3_bare.csv" in report(out)["files"]


def test_figure_caption_override_rejected(tmp_path):
    data = {"command": "figure", "figure": {"name": "fig3", "overrides": {"beta_s": 2.0}}}
    code, codes = errors(tmp_path, ["figure", "fig3", "--config", write(tmp_path, data)])
    assert code == EXIT_VALIDATION
    assert codes == ["figure:caption_parameter:beta_s"]
    data["figure"]["name"] = "fig4"
    assert errors(tmp_path, ["figure", "fig3", "--config", write(tmp_path, data)])[1] == ["conflict:figure"]


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "spectator", "validate", "--config", write(tmp_path, FIG1B), "--out", str(tmp_path / "m")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["status"] == "ok"
