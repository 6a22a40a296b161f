"""Entropy-based coherence functionals and transport figures of merit.

All logarithms are natural.  Functionals that take a decoherence matrix
accept either a :class:`~dechist.histories.DecoherenceMatrix` or a plain
square array.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .dynamics import NetworkModel, as_density_matrix, evolve, populations
from .errors import GridTooCoarse, NoTrap, NotPSD
from .histories import (
    Basis,
    DecoherenceMatrix,
    HistorySpec,
    basis_vectors,
    block_weight_sum,
    build_decoherence_matrix,
    interference,
)
from .numerics import cumulative_trapezoid, trapezoid

EIG_CLIP = 1e-9
DEGENERATE_ENTROPY = 1e-12


def _eigenvalues(dm) -> np.ndarray:
    if isinstance(dm, DecoherenceMatrix):
        return dm.eigenvalues()
    a = np.asarray(dm)
    return np.linalg.eigvalsh(0.5 * (a + a.conj().T))


def _diag(dm) -> np.ndarray:
    if isinstance(dm, DecoherenceMatrix):
        return dm.diagonal()
    return np.real(np.diagonal(np.asarray(dm)))


def _xlogx(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)


def von_neumann_entropy(dm) -> float:
    """``-Tr[D log D]``; eigenvalues in ``[-1e-9, 0)`` count as zero."""
    lam = _eigenvalues(dm)
    if lam.size and lam[0] < -EIG_CLIP:
        raise NotPSD(f"smallest eigenvalue {lam[0]:.3g} below -{EIG_CLIP:g}")
    return float(-_xlogx(np.clip(lam, 0.0, None)).sum())


def shannon_entropy(w) -> float:
    w = np.asarray(w, dtype=float)
    if np.any(w < -EIG_CLIP):
        raise ValueError("weights must be non-negative")
    return float(-_xlogx(np.clip(w, 0.0, None)).sum())


@dataclass(frozen=True)
class Entropies:
    h: float
    h_c: float

    @property
    def coherence(self) -> float:
        if self.h_c < DEGENERATE_ENTROPY:
            return 0.0
        return (self.h_c - self.h) / self.h_c


def entropies(dm) -> Entropies:
    return Entropies(von_neumann_entropy(dm), shannon_entropy(_diag(dm)))


def coherence_C(dm) -> float:
    """``(h_c - h) / h_c``: relative gap between weight entropy and matrix entropy.

    Zero when the weights are (numerically) certain, i.e. ``h_c < 1e-12``.
    """
    return entropies(dm).coherence


def coherence_CL(dm) -> float:
    """Linear-entropy proxy of :func:`coherence_C`; needs no diagonalisation."""
    if isinstance(dm, DecoherenceMatrix):
        total = sum(float(np.sum(np.abs(b) ** 2)) for b in dm.blocks)
    else:
        total = float(np.sum(np.abs(np.asarray(dm)) ** 2))
    diag_sq = float(np.sum(_diag(dm) ** 2))
    denom = 1.0 - diag_sq
    if denom < DEGENERATE_ENTROPY:
        return 0.0
    return max(total - diag_sq, 0.0) / denom


def _map(func: Callable, items: Sequence, n_jobs: int = 1) -> list:
    if n_jobs == 1 or len(items) < 2:
        return [func(*it) for it in items]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(func, *zip(*items)))


def _with_gamma(model: NetworkModel, gamma) -> NetworkModel:
    return model if gamma is None else model.with_dephasing(gamma)


def _as_grid(dt_grid) -> np.ndarray:
    grid = np.asarray(dt_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a non-empty 1-D sequence")
    if grid[0] <= 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be positive and strictly ascending")
    return grid


def _coherence_point(model, rho0, spec):
    dm = build_decoherence_matrix(model, rho0, spec)
    ent = entropies(dm)
    return ent.coherence, coherence_CL(dm), ent.h, ent.h_c


@dataclass(frozen=True)
class CoherenceScan:
    gamma: Optional[float]
    basis: Basis
    n_projections: int
    dt: np.ndarray
    C: np.ndarray
    C_L: np.ndarray
    h: np.ndarray
    h_c: np.ndarray


def coherence_scan(
    model: NetworkModel,
    rho0,
    basis: Basis | str,
    n_projections: int,
    dt_grid,
    gamma: Optional[float] = None,
    n_jobs: int = 1,
) -> CoherenceScan:
    """``C`` and ``C_L`` versus projection spacing (``dt_grid`` in ps).

    ``gamma`` overrides the model's dephasing with a uniform rate.
    """
    model = _with_gamma(model, gamma)
    rho0 = as_density_matrix(model, rho0)
    grid = _as_grid(dt_grid)
    items = [(model, rho0, HistorySpec(basis, n_projections, float(dt))) for dt in grid]
    rows = np.array(_map(_coherence_point, items, n_jobs), dtype=float).reshape(-1, 4)
    return CoherenceScan(gamma, Basis(basis), int(n_projections), grid, *rows.T)


def _check_window(grid: np.ndarray, window: float, start_limit: Optional[float] = None):
    if not window > 0:
        raise ValueError("averaging window must be positive")
    if grid[-1] < window - 1e-12:
        raise GridTooCoarse(f"grid ends at {grid[-1]:g}, before the window end {window:g}")
    if start_limit is not None and grid[0] > start_limit + 1e-12:
        raise GridTooCoarse(f"grid starts at {grid[0]:g} > {start_limit:g}")
    pts = np.concatenate([[0.0], grid[grid <= window + 1e-12]])
    if np.max(np.diff(pts)) > window / 10 + 1e-12:
        raise GridTooCoarse(f"grid spacing {np.max(np.diff(pts)):g} exceeds window/10 = {window / 10:g}")


def _window_average(x: np.ndarray, y: np.ndarray, window: float) -> float:
    # x starts at 0; y is clipped at `window` with linear interpolation
    inside = x < window - 1e-12
    xs = np.concatenate([x[inside], [window]])
    ys = np.concatenate([y[inside], [np.interp(window, x, y)]])
    # integrating deviations from y[0] keeps constant input exact
    return float(ys[0] + trapezoid(xs, ys - ys[0]) / window)


def average_coherence_Q(scan: CoherenceScan, tau_d: float) -> float:
    """Mean of ``C`` over projection spacings in ``(0, tau_d]`` (ps).

    ``C`` at zero spacing is taken equal to its value at the first grid point.
    """
    grid = np.asarray(scan.dt, dtype=float)
    _check_window(grid, tau_d, start_limit=2e-3)
    x = np.concatenate([[0.0], grid])
    y = np.concatenate([[scan.C[0]], scan.C])
    return _window_average(x, y, tau_d)


def _interference_point(model, rho0, spec, final):
    dm = build_decoherence_matrix(model, rho0, spec)
    return interference(dm, final), block_weight_sum(dm, final)


@dataclass(frozen=True)
class InterferenceTrace:
    """Interference of histories ending at ``site`` versus ``tau = N dt``.

    Sample 0 is ``tau = 0``, where the interference vanishes identically.
    ``population`` is the site population from direct propagation.
    """

    site: int
    gamma: Optional[float]
    n_projections: int
    tau: np.ndarray
    interference: np.ndarray
    weight_sum: np.ndarray
    population: np.ndarray


def interference_trace(
    model: NetworkModel,
    rho0,
    site: int,
    n_projections: int,
    dt_grid,
    gamma: Optional[float] = None,
    basis: Basis | str = Basis.SITE,
    n_jobs: int = 1,
) -> InterferenceTrace:
    """Interference, summed weights and population for histories ending at ``site``."""
    model = _with_gamma(model, gamma)
    rho0 = as_density_matrix(model, rho0)
    grid = _as_grid(dt_grid)
    if not 0 <= site < model.dim:
        raise IndexError(f"site {site} outside 0..{model.dim - 1}")
    items = [(model, rho0, HistorySpec(basis, n_projections, float(dt)), site) for dt in grid]
    rows = np.array(_map(_interference_point, items, n_jobs), dtype=float).reshape(-1, 2)

    tau = np.concatenate([[0.0], n_projections * grid])
    rhos = evolve(model, rho0, tau)
    if Basis(basis) is Basis.SITE:
        pop = populations(rhos)[:, site]
    else:
        e = basis_vectors(model, basis)[:, site]
        pop = np.real(np.einsum("i,tij,j->t", e.conj(), rhos, e))
    inter = np.concatenate([[0.0], rows[:, 0]])
    wsum = np.concatenate([[pop[0]], rows[:, 1]])
    return InterferenceTrace(site, gamma, int(n_projections), tau, inter, wsum, pop)


@dataclass(frozen=True)
class InterferenceAverages:
    positive: float
    negative: float
    total: float


def average_interference(trace: InterferenceTrace, tau_trap: float = 0.2) -> InterferenceAverages:
    """Window averages of the positive part, negative part and full interference.

    The split is in time: ``I+ = max(I(tau), 0)`` and ``I- = min(I(tau), 0)``,
    each averaged over ``[0, tau_trap]`` (ps) by the trapezoidal rule.
    """
    tau = np.asarray(trace.tau, dtype=float)
    if tau[0] != 0.0:
        raise ValueError("trace must start at tau = 0")
    _check_window(tau[1:], tau_trap)
    vals = np.asarray(trace.interference, dtype=float)
    pos = _window_average(tau, np.maximum(vals, 0.0), tau_trap)
    neg = _window_average(tau, np.minimum(vals, 0.0), tau_trap)
    return InterferenceAverages(pos, neg, pos + neg)


@dataclass(frozen=True)
class EfficiencyDecomposition:
    """Running efficiency and its split into summed weights and interference.

    ``eta = weights + interference`` at every ``tau``;
    ``sink_population`` is the direct-propagation check on ``eta``.
    """

    gamma: Optional[float]
    tau: np.ndarray
    eta: np.ndarray
    weights: np.ndarray
    interference: np.ndarray
    sink_population: np.ndarray


def efficiency_decomposition(
    model: NetworkModel,
    rho0,
    n_projections: int,
    dt_grid,
    gamma: Optional[float] = None,
    n_jobs: int = 1,
) -> EfficiencyDecomposition:
    """``eta(t) = W(t) + I(t)`` on the ``tau = N dt`` grid for the model's exit site."""
    if model.trap is None:
        raise NoTrap("efficiency decomposition needs a model with a trap")
    trace = interference_trace(model, rho0, model.trap.exit_site, n_projections, dt_grid, gamma, n_jobs=n_jobs)
    k2 = 2.0 * model.trap.rate
    tau = trace.tau
    eta = k2 * cumulative_trapezoid(tau, trace.population)
    w = k2 * cumulative_trapezoid(tau, trace.weight_sum)
    i = k2 * cumulative_trapezoid(tau, trace.interference)
    sink = populations(evolve(_with_gamma(model, gamma), rho0, tau))[:, model.dim - 1]
    return EfficiencyDecomposition(gamma, tau, eta, w, i, sink)
