"""Experiment configuration: YAML files with explicit unit suffixes.

Site numbers in configuration files are 1-based, as in the chemistry
literature; they are converted to 0-based indices here.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np
import yaml

from .dynamics import NetworkModel, Trap, as_density_matrix, site_state
from .errors import ConfigInvalid, DechistError
from .histories import Basis

COMMANDS = ("eigen", "evolve", "coherence", "qavg", "interference", "efficiency")

_NUMBER = {"type": "number"}
_GRID = {
    "type": "object",
    "required": ["start", "stop", "step"],
    "additionalProperties": False,
    "properties": {
        "start": {"type": "number", "minimum": 0},
        "stop": {"type": "number", "minimum": 0},
        "step": {"type": "number", "exclusiveMinimum": 0},
    },
}
_RATE = {"type": "number", "minimum": 0}

SCHEMA = {
    "type": "object",
    "required": ["model", "initial_state"],
    "additionalProperties": False,
    "properties": {
        "model": {
            "type": "object",
            "required": ["sites", "hamiltonian_cm1"],
            "additionalProperties": False,
            "properties": {
                "name": {"type": "string"},
                "sites": {"type": "integer", "minimum": 1},
                "hamiltonian_cm1": {"type": "array", "items": {"type": "array", "items": _NUMBER}},
                "gamma_ps": {"oneOf": [_RATE, {"type": "array", "items": _RATE}]},
                "trap": {
                    "type": "object",
                    "required": ["exit_site", "k_trap_ps"],
                    "additionalProperties": False,
                    "properties": {
                        "exit_site": {"type": "integer", "minimum": 1},
                        "k_trap_ps": _RATE,
                        "apply_to": {"type": "array", "items": {"enum": list(COMMANDS)}, "uniqueItems": True},
                    },
                },
            },
        },
        "initial_state": {
            "type": "object",
            "additionalProperties": False,
            "oneOf": [{"required": ["site"]}, {"required": ["density_matrix"]}],
            "properties": {
                "site": {"type": "integer", "minimum": 1},
                "density_matrix": {
                    "type": "array",
                    "items": {"type": "array", "items": {"type": ["number", "string"]}},
                },
            },
        },
        "history": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "basis": {"enum": [b.value for b in Basis]},
                "n": {"type": "integer", "minimum": 1},
                "dt_grid_fs": _GRID,
                "site": {"type": "integer", "minimum": 1},
            },
        },
        "evolve": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"time_grid_fs": _GRID},
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "gamma_ps": {"type": "array", "items": _RATE, "minItems": 1},
                "tau_d_fs": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                "tau_trap_fs": {"type": "number", "exclusiveMinimum": 0},
                "interference_sites": {"type": "array", "items": {"type": "integer", "minimum": 1}},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "precision": {"type": "integer", "minimum": 1, "maximum": 17},
            },
        },
    },
}


def _path(error: jsonschema.ValidationError) -> str:
    out = ""
    for part in error.absolute_path:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out


def schema_problems(data) -> list:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    return [(_path(e), e.message) for e in errors]


def _grid_problems(block: Optional[dict], where: str, positive: bool) -> list:
    if not block:
        return []
    probs = []
    if block["stop"] < block["start"]:
        probs.append((where, "stop must not be below start"))
    if positive and block["start"] <= 0:
        probs.append((f"{where}.start", "grid must be strictly positive"))
    return probs


def semantic_problems(data) -> tuple[list, list]:
    """Checks beyond the schema; returns ``(errors, warnings)``."""
    errors, warnings = [], []
    model = data["model"]
    n = model["sites"]
    h = model["hamiltonian_cm1"]
    if len(h) != n or any(len(row) != n for row in h):
        errors.append(("model.hamiltonian_cm1", f"must be a {n}x{n} matrix"))
    else:
        for i in range(n):
            for j in range(i + 1, n):
                if abs(h[i][j] - h[j][i]) > 1e-10 * max(1.0, abs(h[i][j])):
                    warnings.append(
                        (
                            f"model.hamiltonian_cm1[{i}][{j}]",
                            f"NotSymmetric: H({i + 1},{j + 1}) = {h[i][j]} but H({j + 1},{i + 1}) = {h[j][i]}",
                        )
                    )
    gamma = model.get("gamma_ps")
    if isinstance(gamma, list) and len(gamma) != n:
        errors.append(("model.gamma_ps", f"needs one rate per site ({n}), got {len(gamma)}"))
    trap = model.get("trap")
    if trap and trap["exit_site"] > n:
        errors.append(("model.trap.exit_site", f"site {trap['exit_site']} exceeds {n} sites"))

    init = data["initial_state"]
    if "site" in init and init["site"] > n:
        errors.append(("initial_state.site", f"site {init['site']} exceeds {n} sites"))
    if "density_matrix" in init:
        try:
            rho = _parse_matrix(init["density_matrix"])
            as_density_matrix(NetworkModel(np.zeros((n, n))), rho)
        except (ValueError, DechistError) as exc:
            errors.append(("initial_state.density_matrix", str(exc)))

    hist = data.get("history", {})
    errors += _grid_problems(hist.get("dt_grid_fs"), "history.dt_grid_fs", positive=True)
    if "site" in hist and hist["site"] > n + bool(trap):
        errors.append(("history.site", f"site {hist['site']} outside the basis"))
    errors += _grid_problems(data.get("evolve", {}).get("time_grid_fs"), "evolve.time_grid_fs", positive=False)
    for s in data.get("sweep", {}).get("interference_sites", []):
        if s > n:
            errors.append(("sweep.interference_sites", f"site {s} exceeds {n} sites"))
    return errors, warnings


def _parse_matrix(rows) -> np.ndarray:
    return np.array([[complex(str(x).replace(" ", "")) for x in row] for row in rows], dtype=complex)


def grid_from(block: dict, scale: float = 1e-3) -> np.ndarray:
    """Inclusive ``start, start + step, ..., stop`` grid, converted by ``scale``."""
    start, stop, step = block["start"], block["stop"], block["step"]
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return (start + step * np.arange(count)) * scale


@dataclass(frozen=True)
class ExperimentConfig:
    model: NetworkModel
    rho0: np.ndarray
    basis: Basis
    n_projections: int
    dt_grid: np.ndarray  # ps
    time_grid: np.ndarray  # ps
    gammas: tuple
    tau_d: tuple  # ps
    tau_trap: float  # ps
    history_site: int  # 0-based
    interference_sites: tuple  # 0-based
    trap_apply_to: frozenset
    out_dir: Path
    precision: int
    sha256: str
    source: Optional[Path] = None
    raw: dict = field(default_factory=dict, repr=False)

    def model_for(self, command: str, gamma: Optional[float] = None) -> NetworkModel:
        """The model as used by ``command``: trap on or off, dephasing overridden."""
        model = self.model
        if command not in self.trap_apply_to:
            model = model.with_trap(None)
        if gamma is not None:
            model = model.with_dephasing(gamma)
        return model

    def rho0_for(self, model: NetworkModel) -> np.ndarray:
        n = model.n_sites
        return as_density_matrix(model, self.rho0[:n, :n] if model.trap is None else self.rho0)


DEFAULTS = {
    "basis": "site",
    "n": 4,
    "dt_grid_fs": {"start": 2, "stop": 600, "step": 2},
    "time_grid_fs": {"start": 0, "stop": 1000, "step": 1},
    "gamma_ps": [0.1, 1.0, 16.0, 100.0],
    "tau_d_fs": [20, 40, 200, 1000],
    "tau_trap_fs": 200,
    "apply_to": ["efficiency"],
    "precision": 12,
}


def parse_config(data, source: Optional[Path] = None, sha256: str = "") -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigInvalid([("", "configuration must be a mapping")])
    problems = schema_problems(data)
    if problems:
        raise ConfigInvalid(problems)
    errors, warnings = semantic_problems(data)
    if errors or warnings:
        raise ConfigInvalid(errors + warnings)

    m = data["model"]
    n = m["sites"]
    trap = None
    apply_to = frozenset(DEFAULTS["apply_to"])
    if "trap" in m:
        trap = Trap(m["trap"]["exit_site"] - 1, float(m["trap"]["k_trap_ps"]))
        apply_to = frozenset(m["trap"].get("apply_to", DEFAULTS["apply_to"]))
    model = NetworkModel(np.array(m["hamiltonian_cm1"], dtype=float), m.get("gamma_ps", 0.0), trap)

    init = data["initial_state"]
    if "site" in init:
        rho0 = site_state(model, init["site"] - 1)
    else:
        rho0 = as_density_matrix(model, _parse_matrix(init["density_matrix"]))

    hist = data.get("history", {})
    sweep = data.get("sweep", {})
    out = data.get("output", {})
    default_site = (trap.exit_site + 1) if trap else n
    return ExperimentConfig(
        model=model,
        rho0=rho0,
        basis=Basis(hist.get("basis", DEFAULTS["basis"])),
        n_projections=hist.get("n", DEFAULTS["n"]),
        dt_grid=grid_from(hist.get("dt_grid_fs", DEFAULTS["dt_grid_fs"])),
        time_grid=grid_from(data.get("evolve", {}).get("time_grid_fs", DEFAULTS["time_grid_fs"])),
        gammas=tuple(float(g) for g in sweep.get("gamma_ps", DEFAULTS["gamma_ps"])),
        tau_d=tuple(t * 1e-3 for t in sweep.get("tau_d_fs", DEFAULTS["tau_d_fs"])),
        tau_trap=sweep.get("tau_trap_fs", DEFAULTS["tau_trap_fs"]) * 1e-3,
        history_site=hist.get("site", default_site) - 1,
        interference_sites=tuple(s - 1 for s in sweep.get("interference_sites", range(1, n + 1))),
        trap_apply_to=apply_to,
        out_dir=Path(out.get("dir", "out")),
        precision=out.get("precision", DEFAULTS["precision"]),
        sha256=sha256,
        source=source,
        raw=data,
    )


def read_config_file(path) -> tuple[dict, str]:
    """Parse YAML; returns ``(data, sha256 of the file bytes)``.

    Raises ``FileNotFoundError`` or ``yaml.YAMLError``.
    """
    raw = Path(path).read_bytes()
    return yaml.safe_load(raw.decode("utf-8")), hashlib.sha256(raw).hexdigest()


def load_config(path) -> ExperimentConfig:
    data, digest = read_config_file(path)
    return parse_config(data, Path(path), digest)


def validate_config(path) -> tuple[list, list]:
    """Schema violations and physics warnings for the file at ``path``."""
    data, _ = read_config_file(path)
    if not isinstance(data, dict):
        return [("", "configuration must be a mapping")], []
    problems = schema_problems(data)
    if problems:
        return problems, []
    return semantic_problems(data)


def bundled_config(name: str) -> Path:
    """Path of a configuration shipped with the package (``trimer.cfg``, ``fmo7.cfg``)."""
    return Path(str(resources.files("dechist") / "data" / name))
