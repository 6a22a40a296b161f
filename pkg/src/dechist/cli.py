"""Command-line driver: ``dechist <command> --config <path> [overrides]``.

Each command writes one or more CSV files into the output directory.
Every CSV starts with a ``#`` comment line recording the package
version, the SHA-256 of the configuration file and the resolved
parameters, followed by a header row.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
import yaml

from . import __version__
from .config import COMMANDS, ExperimentConfig, bundled_config, load_config, validate_config
from .dynamics import delocalization, efficiency_trace, evolve, populations
from .errors import BudgetExceeded, ConfigInvalid, DechistError, NoTrap
from .histories import Basis
from .measures import (
    average_coherence_Q,
    average_interference,
    coherence_scan,
    efficiency_decomposition,
    interference_trace,
)
from .numerics import eig_hermitian

log = logging.getLogger("dechist")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_BUDGET = 0, 1, 2, 3


class CsvOut:
    def __init__(self, cfg: ExperimentConfig, command: str, params: dict):
        self.cfg = cfg
        self.command = command
        self.params = params
        self.fmt = f"{{:.{cfg.precision}g}}"

    def _cell(self, v):
        if isinstance(v, (float, np.floating)):
            return self.fmt.format(float(v))
        if isinstance(v, (np.integer,)):
            return str(int(v))
        return str(v)

    def write(self, name: str, header: list, rows: Iterable) -> Path:
        self.cfg.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.cfg.out_dir / name
        params = json.dumps(self.params, sort_keys=True, separators=(",", ":"))
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(
                f"# dechist {__version__} command={self.command} "
                f"config_sha256={self.cfg.sha256} params={params}\n"
            )
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([self._cell(v) for v in row])
        log.info("wrote %s", path)
        return path


def _fs(x) -> list:
    return [round(float(v) * 1e3, 9) for v in np.atleast_1d(x)]


def _base_params(cfg: ExperimentConfig, command: str) -> dict:
    trap = cfg.model.trap
    return {
        "sites": cfg.model.n_sites,
        "trap": None
        if trap is None or command not in cfg.trap_apply_to
        else {"exit_site": trap.exit_site + 1, "k_trap_ps": trap.rate},
    }


def cmd_eigen(cfg: ExperimentConfig, jobs: int) -> list:
    model = cfg.model
    w = eig_hermitian(model.hamiltonian).eigenvalues
    rows = [("energy_cm1", i + 1, "", e) for i, e in enumerate(w)]
    for i in range(len(w)):
        for j in range(i + 1, len(w)):
            gap = abs(w[j] - w[i])
            period = 2 * np.pi / (model.energy_to_angular * gap) if gap > 0 else float("inf")
            rows.append(("period_ps", i + 1, j + 1, period))
    out = CsvOut(cfg, "eigen", _base_params(cfg, "eigen"))
    return [out.write("eigen.csv", ["quantity", "exciton_i", "exciton_j", "value"], rows)]


def cmd_evolve(cfg: ExperimentConfig, jobs: int) -> list:
    params = _base_params(cfg, "evolve") | {"gamma_ps": list(cfg.gammas), "time_grid_fs": _fs(cfg.time_grid[[0, -1]])}
    rows = []
    header = None
    for g in cfg.gammas:
        model = cfg.model_for("evolve", g)
        rhos = evolve(model, cfg.rho0_for(model), cfg.time_grid)
        pops = populations(rhos)
        deloc = delocalization(rhos, model.n_sites)
        if header is None:
            header = ["gamma_ps", "t_ps"] + [f"p_{i + 1}" for i in range(model.n_sites)]
            header += ["p_sink"] if model.trap is not None else []
            header += ["delocalization"]
        for t, p, h in zip(cfg.time_grid, pops, deloc):
            rows.append([g, t, *p, h])
    return [CsvOut(cfg, "evolve", params).write("evolve.csv", header, rows)]


def _scans(cfg: ExperimentConfig, command: str, jobs: int, grid=None):
    grid = cfg.dt_grid if grid is None else grid
    for g in cfg.gammas:
        model = cfg.model_for(command, g)
        yield g, coherence_scan(model, cfg.rho0_for(model), cfg.basis, cfg.n_projections, grid, n_jobs=jobs)


def _covering_grid(grid: np.ndarray, end: float) -> np.ndarray:
    """Extend a uniform grid with its own spacing until it reaches ``end``."""
    if grid[-1] >= end - 1e-12 or grid.size < 2:
        return grid
    step = grid[1] - grid[0]
    extra = grid[-1] + step * np.arange(1, int(np.ceil((end - grid[-1]) / step - 1e-9)) + 1)
    return np.concatenate([grid, extra])


def _history_params(cfg: ExperimentConfig, command: str) -> dict:
    return _base_params(cfg, command) | {
        "basis": cfg.basis.value,
        "n": cfg.n_projections,
        "dt_grid_fs": _fs(cfg.dt_grid[[0, -1]]) + [len(cfg.dt_grid)],
        "gamma_ps": list(cfg.gammas),
    }


def cmd_coherence(cfg: ExperimentConfig, jobs: int) -> list:
    rows = []
    for g, scan in _scans(cfg, "coherence", jobs):
        rows += [[g, dt, c, cl, h, hc] for dt, c, cl, h, hc in zip(scan.dt, scan.C, scan.C_L, scan.h, scan.h_c)]
    out = CsvOut(cfg, "coherence", _history_params(cfg, "coherence"))
    return [out.write("coherence.csv", ["gamma_ps", "dt_ps", "C", "C_L", "h", "h_c"], rows)]


def cmd_qavg(cfg: ExperimentConfig, jobs: int) -> list:
    rows = []
    grid = _covering_grid(cfg.dt_grid, max(cfg.tau_d))
    for g, scan in _scans(cfg, "qavg", jobs, grid):
        rows += [[g, tau, average_coherence_Q(scan, tau)] for tau in cfg.tau_d]
    params = _history_params(cfg, "qavg") | {"tau_d_fs": _fs(cfg.tau_d), "dt_grid_fs": _fs(grid[[0, -1]]) + [len(grid)]}
    return [CsvOut(cfg, "qavg", params).write("qavg.csv", ["gamma_ps", "tau_d_ps", "Q"], rows)]


def cmd_interference(cfg: ExperimentConfig, jobs: int) -> list:
    traces, averages = [], []
    for g in cfg.gammas:
        model = cfg.model_for("interference", g)
        rho0 = cfg.rho0_for(model)
        for site in cfg.interference_sites:
            tr = interference_trace(model, rho0, site, cfg.n_projections, cfg.dt_grid, basis=cfg.basis, n_jobs=jobs)
            traces += [
                [g, site + 1, tau, i, w, p]
                for tau, i, w, p in zip(tr.tau, tr.interference, tr.weight_sum, tr.population)
            ]
            avg = average_interference(tr, cfg.tau_trap)
            averages.append([g, site + 1, cfg.tau_trap, avg.positive, avg.negative, avg.total])
    params = _history_params(cfg, "interference") | {"tau_trap_fs": _fs(cfg.tau_trap)[0]}
    out = CsvOut(cfg, "interference", params)
    return [
        out.write(
            "interference.csv", ["gamma_ps", "site", "tau_ps", "interference", "weight_sum", "population"], traces
        ),
        out.write(
            "interference_avg.csv", ["gamma_ps", "site", "tau_trap_ps", "positive", "negative", "total"], averages
        ),
    ]


def cmd_efficiency(cfg: ExperimentConfig, jobs: int) -> list:
    if cfg.model.trap is None:
        raise NoTrap("the efficiency command needs model.trap in the configuration")
    rows = []
    for g in cfg.gammas:
        model = cfg.model.with_dephasing(g)
        rho0 = cfg.rho0_for(model)
        dec = efficiency_decomposition(model, rho0, cfg.n_projections, cfg.dt_grid, n_jobs=jobs)
        fine_t, fine_eta, _ = efficiency_trace(model, rho0, float(dec.tau[-1]), step=1e-3)
        direct = np.interp(dec.tau, fine_t, fine_eta)
        rows += [
            [g, *vals]
            for vals in zip(dec.tau, dec.eta, dec.weights, dec.interference, direct, dec.sink_population)
        ]
    params = _history_params(cfg, "efficiency") | {
        "exit_site": cfg.model.trap.exit_site + 1,
        "k_trap_ps": cfg.model.trap.rate,
    }
    header = ["gamma_ps", "tau_ps", "eta", "W", "I", "eta_quadrature", "p_sink"]
    return [CsvOut(cfg, "efficiency", params).write("efficiency.csv", header, rows)]


HANDLERS = {
    "eigen": cmd_eigen,
    "evolve": cmd_evolve,
    "coherence": cmd_coherence,
    "qavg": cmd_qavg,
    "interference": cmd_interference,
    "efficiency": cmd_efficiency,
}


def _resolve_config(path: str) -> Path:
    p = Path(path)
    if not p.exists():
        bundled = bundled_config(p.name)
        if bundled.exists() and p.parent == Path("."):
            return bundled
    return p


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    changes = {}
    if args.gamma:
        changes["gammas"] = tuple(args.gamma)
    if args.n is not None:
        changes["n_projections"] = args.n
    if args.basis is not None:
        changes["basis"] = Basis(args.basis)
    if args.out is not None:
        changes["out_dir"] = Path(args.out)
    return replace(cfg, **changes) if changes else cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dechist", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"dechist {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML experiment file (or a bundled name, e.g. trimer.cfg)")
        p.add_argument("--gamma", type=float, action="append", help="dephasing rate in ps^-1; repeat for a sweep")
        p.add_argument("--n", type=int, help="number of projections per history")
        p.add_argument("--basis", choices=[b.value for b in Basis])
        p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
        p.add_argument("--out", help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")
    p = sub.add_parser("validate")
    p.add_argument("--config", required=True)
    return parser


def _report(problems, stream, label: str):
    for path, msg in problems:
        print(f"{label}: {path or '<root>'}: {msg}", file=stream)


def run_validate(path: str) -> int:
    try:
        errors, warnings = validate_config(_resolve_config(path))
    except FileNotFoundError as exc:
        print(f"error: FileNotFound: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except yaml.YAMLError as exc:
        print(f"error: ParseError: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _report(errors, sys.stdout, "error")
    _report(warnings, sys.stdout, "warning")
    if errors or warnings:
        return EXIT_CONFIG
    print(f"{path}: ok")
    return EXIT_OK


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        return run_validate(args.config)

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.n is not None and args.n < 1:
        print("error: --n must be a positive integer", file=sys.stderr)
        return EXIT_CONFIG
    if args.gamma and any(g < 0 for g in args.gamma):
        print("error: --gamma must be non-negative", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = _apply_overrides(load_config(_resolve_config(args.config)), args)
        for path in HANDLERS[args.command](cfg, max(1, args.jobs)):
            print(path)
    except ConfigInvalid as exc:
        _report(exc.problems, sys.stderr, "ConfigInvalid")
        return EXIT_CONFIG
    except (FileNotFoundError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoTrap as exc:
        print(f"NoTrap: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceeded as exc:
        print(f"BudgetExceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except DechistError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
