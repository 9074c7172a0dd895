"""Command-line experiment runner.

Usage::

    spectator <command> --config spec.json --out results/
    spectator figure fig3 --out fig3/
    spectator run --config results/manifest.json --out again/

Exit codes: 0 ok, 2 validation failure, 3 convergence failure.  Errors are
printed to stderr as JSON and written to ``<out>/error.json``.
"""

from __future__ import annotations

import argparse
import json
import os
import pathlib
import sys

from .. import coherence, model, spectra, stochastic
from ..coherence import tphi
from .commands import COMMANDS
from .figures import PRESETS, run_figure
from .spec import ExperimentSpec, SpecError, parse

__all__ = ["main", "run", "tphi", "ExperimentSpec", "parse", "EXIT_OK", "EXIT_VALIDATION", "EXIT_CONVERGENCE"]

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CONVERGENCE = 3

ENV_OUT = "SPECTATOR_OUT"
ENV_THREADS = "SPECTATOR_THREADS"


def _dump(obj, path: pathlib.Path):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(x):
    try:
        return float(x)
    except (TypeError, ValueError):
        return str(x)


def run(spec: ExperimentSpec, out: pathlib.Path, threads: int | None = None) -> dict:
    """Execute a parsed spec, writing artifacts, ``report.json`` and ``manifest.json`` to ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    if spec.command == "figure":
        results, files = run_figure(spec, out, threads)
    else:
        results, files = COMMANDS[spec.command](spec, out, threads)
    _dump(spec.manifest(), out / "manifest.json")
    report = {"status": "ok", "command": spec.command, "results": results, "files": sorted(files) + ["manifest.json"]}
    _dump(report, out / "report.json")
    return report


def _fail(out: pathlib.Path | None, code: int, errors: list) -> int:
    payload = {"status": "error", "exit_code": code, "errors": errors}
    text = json.dumps(payload, sort_keys=True, default=_jsonable)
    print(text, file=sys.stderr)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(text + "\n")
        except OSError:
            pass
    return code


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment spec (JSON)")
    common.add_argument("--out", help=f"output directory (env {ENV_OUT}; default ./spectator-out)")
    common.add_argument("--seed", type=int, help="master seed (u64)")
    common.add_argument("--threads", type=int, help=f"worker threads (env {ENV_THREADS}; default 1)")
    common.add_argument("--tol", type=float, help="relative quadrature tolerance (default 1e-8)")

    p = argparse.ArgumentParser(prog="spectator", description="Spectator-mode dephasing mitigation toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run the command stored in --config")
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    fig = sub.add_parser("figure", parents=[common], help="reproduce a figure preset")
    fig.add_argument("name", choices=sorted(PRESETS))
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    out = pathlib.Path(args.out or os.environ.get(ENV_OUT) or "spectator-out")
    threads = args.threads
    if threads is None and os.environ.get(ENV_THREADS):
        try:
            threads = int(os.environ[ENV_THREADS])
        except ValueError:
            return _fail(out, EXIT_VALIDATION, [{"code": "invalid:threads", "message": f"{ENV_THREADS} must be an integer"}])
    if threads is not None and threads < 1:
        return _fail(out, EXIT_VALIDATION, [{"code": "invalid:threads", "message": "threads must be >= 1"}])
    if args.seed is not None and not 0 <= args.seed < 2**64:
        return _fail(out, EXIT_VALIDATION, [{"code": "invalid:seed", "message": "seed must be an unsigned 64-bit integer"}])

    data, base_dir = {}, None
    if args.config:
        path = pathlib.Path(args.config)
        try:
            data = json.loads(path.read_text())
        except OSError as exc:
            return _fail(out, EXIT_VALIDATION, [{"code": "config:unreadable", "message": str(exc)}])
        except json.JSONDecodeError as exc:
            return _fail(out, EXIT_VALIDATION, [{"code": "config:malformed_json", "message": str(exc)}])
        base_dir = path.parent
    elif args.command not in ("figure",):
        return _fail(out, EXIT_VALIDATION, [{"code": "missing_field:--config", "message": "--config is required"}])

    command = None if args.command == "run" else args.command
    if args.command == "figure":
        fig = dict(data.get("figure", {})) if isinstance(data, dict) else {}
        if fig.get("name", args.name) != args.name:
            return _fail(out, EXIT_VALIDATION, [{"code": "conflict:figure", "message": "figure name differs from spec"}])
        fig["name"] = args.name
        data = {**(data if isinstance(data, dict) else {}), "figure": fig}

    try:
        spec = parse(data, command=command, seed=args.seed, tol=args.tol, base_dir=base_dir)
        report = run(spec, out, threads)
    except SpecError as exc:
        return _fail(out, EXIT_VALIDATION, exc.errors)
    except model.ConfigError as exc:
        return _fail(out, EXIT_VALIDATION, [{"code": f"config:{exc.code}", "message": str(exc)}])
    except (stochastic.AliasingError, OverflowError) as exc:
        return _fail(out, EXIT_VALIDATION, [{"code": "monte_carlo:invalid", "message": str(exc)}])
    except spectra.QuadratureError as exc:
        return _fail(out, EXIT_CONVERGENCE, [{"code": "quadrature:no_convergence", "message": str(exc),
                                              "estimate": exc.estimate, "error": exc.error}])
    except stochastic.IntegrationError as exc:
        return _fail(out, EXIT_CONVERGENCE, [{"code": "integration:unstable", "message": str(exc)}])
    except coherence.NoCrossing as exc:
        return _fail(out, EXIT_CONVERGENCE, [{"code": "break_even:no_crossing", "message": str(exc)}])
    except ValueError as exc:
        return _fail(out, EXIT_VALIDATION, [{"code": "invalid:value", "message": str(exc)}])
    if spec.command == "validate" and not report["results"]["valid"]:
        return EXIT_VALIDATION
    print(json.dumps({"status": "ok", "out": str(out), "files": report["files"]}))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
