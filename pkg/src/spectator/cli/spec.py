"""Experiment-spec parsing and schema validation."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources

import jsonschema
import numpy as np

from .. import model, spectra

DEFAULT_TOL = 1e-8
DEFAULT_SEED = 0


class SpecError(ValueError):
    """Schema or semantic validation failure with machine-readable codes."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{e['code']}: {e['message']}" for e in self.errors))


def load_schema() -> dict:
    text = resources.files("spectator").joinpath("schemas/experiment.schema.json").read_text()
    return json.loads(text)


def _join(path) -> str:
    return ".".join(str(p) for p in path)


def schema_errors(data) -> list:
    validator = jsonschema.Draft7Validator(load_schema())
    out = []
    for err in validator.iter_errors(data):
        out.extend(_describe(err))
    # stable ordering, no duplicates
    seen, unique = set(), []
    for e in sorted(out, key=lambda e: (e["code"], e["message"])):
        if e["code"] not in seen:
            seen.add(e["code"])
            unique.append(e)
    return unique


def _describe(err) -> list:
    path = list(err.absolute_path)
    if err.validator == "required":
        inst = err.instance if isinstance(err.instance, dict) else {}
        return [
            {"code": f"missing_field:{_join(path + [name])}", "message": f"required field {_join(path + [name])!r} is missing"}
            for name in err.validator_value
            if name not in inst
        ]
    if err.validator == "anyOf" and all(
        isinstance(s, dict) and set(s) == {"required"} for s in err.validator_value
    ):
        names = "|".join(s["required"][0] for s in err.validator_value)
        where = _join(path + [names])
        return [{"code": f"missing_field:{where}", "message": f"one of {names} is required at {_join(path) or 'top level'}"}]
    if err.validator in ("allOf", "anyOf", "if"):
        subs = []
        for sub in err.context or ():
            subs.extend(_describe(sub))
        if subs:
            return subs
    return [{"code": f"invalid:{_join(path) or '<root>'}:{err.validator}", "message": err.message}]


@dataclass
class ExperimentSpec:
    """Resolved experiment: everything needed to reproduce a run."""

    command: str
    raw: dict
    config: model.SpectatorConfig | None = None
    spectrum: spectra.SpectralDensity | None = None
    rate_scale: float = 1.0
    seed: int = DEFAULT_SEED
    tol: float = DEFAULT_TOL
    threshold: float = model.LINEAR_NOISE_THRESHOLD
    base_dir: str | None = None
    extra: dict = field(default_factory=dict)

    def manifest(self) -> dict:
        """Resolved spec; re-ingesting it reproduces the run."""
        out = copy.deepcopy(self.raw)
        out["command"] = self.command
        out["seed"] = self.seed
        out["tol"] = self.tol
        out.setdefault("thresholds", {})["linear_noise"] = self.threshold
        if self.spectrum is not None and out.get("spectrum", {}).get("kind") == "tabulated" and "csv" in out["spectrum"]:
            # inline the table so the manifest is self-contained
            desc = self.spectrum.describe()
            scale = self.rate_scale
            out["spectrum"] = {"kind": "tabulated", "omega": [w * scale for w in desc["omega"]], "S": [s * scale for s in desc["S"]]}
        return out

    def times(self, grid: dict) -> np.ndarray:
        if "t" in grid:
            t = np.asarray(grid["t"], dtype=float)
        else:
            n = int(grid.get("n", 200))
            if grid.get("spacing", "log") == "log":
                t = np.geomspace(grid["t_min"], grid["t_max"], n)
            else:
                t = np.linspace(grid["t_min"], grid["t_max"], n)
        return t * self.rate_scale  # absolute seconds -> 1/kappa_c units


def parse(data: dict, command: str | None = None, seed: int | None = None, tol: float | None = None, base_dir=None) -> ExperimentSpec:
    """Validate ``data`` against the schema and build the engine objects.

    ``command``, ``seed`` and ``tol`` (CLI flags) override the file.
    """
    if not isinstance(data, dict):
        raise SpecError([{"code": "invalid:<root>:type", "message": "spec must be a JSON object"}])
    data = copy.deepcopy(data)
    if command is not None:
        if "command" in data and data["command"] != command:
            raise SpecError([{"code": "conflict:command", "message": f"spec says {data['command']!r}, CLI says {command!r}"}])
        data["command"] = command
    if seed is not None:
        data["seed"] = seed
    if tol is not None:
        data["tol"] = tol
    errs = schema_errors(data)
    if errs:
        raise SpecError(errs)
    spec = ExperimentSpec(
        command=data["command"],
        raw=data,
        seed=int(data.get("seed", DEFAULT_SEED)),
        tol=float(data.get("tol", DEFAULT_TOL)),
        threshold=float(data.get("thresholds", {}).get("linear_noise", model.LINEAR_NOISE_THRESHOLD)),
        base_dir=str(base_dir) if base_dir is not None else None,
    )
    try:
        if "config" in data:
            ing = model.config_from_mapping(data["config"])
            spec.config, spec.rate_scale = ing.config, ing.rate_scale
        if "spectrum" in data:
            spec.spectrum = spectra.spectrum_from_mapping(data["spectrum"], spec.rate_scale, base_dir)
    except model.ConfigError as exc:
        raise SpecError([{"code": f"config:{exc.code}", "message": str(exc)}]) from exc
    except (ValueError, OSError) as exc:
        raise SpecError([{"code": "spectrum:invalid", "message": str(exc)}]) from exc
    return spec
