"""Haken-Strobl dynamics on a site network with an optional trap.

The master equation is

    drho/dt = -i kappa [H, rho]
              + sum_i gamma_i (2 L_i rho L_i^+ - {L_i^+ L_i, rho})
              + k_trap (2 L_t rho L_t^+ - {L_t^+ L_t, rho})

with ``L_i = |i><i|`` and ``L_t = |sink><exit|``.  The Hamiltonian is in
cm^-1, rates and times in ps^-1 and ps; ``kappa = 2 pi c`` converts
wavenumbers to angular frequency.  When a trap is present the sink is an
explicit extra basis state appended after the sites, so the trace over
sites plus sink is conserved.

Superoperators act on column-stacked (Fortran order) density matrices,
``vec(A X B) = (B^T kron A) vec(X)``.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidDensityMatrix, InvalidModel, NoTrap
from .numerics import cumulative_trapezoid, eig_hermitian, expm, is_hermitian

SPEED_OF_LIGHT_CM_PER_PS = 0.0299792458
KAPPA = 2.0 * np.pi * SPEED_OF_LIGHT_CM_PER_PS  # rad ps^-1 per cm^-1


@dataclass(frozen=True)
class Trap:
    exit_site: int  # 0-based site index
    rate: float  # k_trap in ps^-1


@dataclass(frozen=True, eq=False)
class NetworkModel:
    """Single-exciton network: Hamiltonian, local dephasing and optional trap.

    ``hamiltonian`` is a real symmetric ``d x d`` matrix in cm^-1 and
    ``dephasing_rates`` is either a scalar (same rate on every site) or a
    length-``d`` sequence in ps^-1.  Instances are immutable; use
    :meth:`with_dephasing` / :meth:`with_trap` to derive variants.
    """

    hamiltonian: np.ndarray
    dephasing_rates: np.ndarray = 0.0
    trap: Optional[Trap] = None
    energy_to_angular: float = KAPPA

    def __post_init__(self):
        h = np.array(self.hamiltonian, dtype=float)
        if h.ndim != 2 or h.shape[0] != h.shape[1] or h.shape[0] == 0:
            raise InvalidModel(f"hamiltonian must be a non-empty square matrix, got shape {h.shape}")
        if not np.all(np.isfinite(h)):
            raise InvalidModel("hamiltonian has non-finite entries")
        if not np.allclose(h, h.T, rtol=0.0, atol=1e-10 * max(1.0, np.abs(h).max())):
            raise InvalidModel("hamiltonian is not symmetric")
        d = h.shape[0]

        rates = np.array(self.dephasing_rates, dtype=float)
        if rates.ndim == 0:
            rates = np.full(d, float(rates))
        if rates.shape != (d,):
            raise InvalidModel(f"expected {d} dephasing rates, got shape {rates.shape}")
        if np.any(rates < 0) or not np.all(np.isfinite(rates)):
            raise InvalidModel("dephasing rates must be finite and non-negative")

        if self.trap is not None:
            if not 0 <= self.trap.exit_site < d:
                raise InvalidModel(f"exit site {self.trap.exit_site} outside 0..{d - 1}")
            if not (self.trap.rate >= 0 and np.isfinite(self.trap.rate)):
                raise InvalidModel("trap rate must be finite and non-negative")
        if not self.energy_to_angular > 0:
            raise InvalidModel("energy_to_angular must be positive")

        h.setflags(write=False)
        rates.setflags(write=False)
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "dephasing_rates", rates)

    @property
    def n_sites(self) -> int:
        return self.hamiltonian.shape[0]

    @property
    def dim(self) -> int:
        """Size of the state space: sites, plus the sink when trapped."""
        return self.n_sites + (self.trap is not None)

    @property
    def sink_index(self) -> Optional[int]:
        return self.n_sites if self.trap is not None else None

    @cached_property
    def key(self) -> tuple:
        trap = None if self.trap is None else (self.trap.exit_site, float(self.trap.rate))
        return (
            self.hamiltonian.tobytes(),
            self.n_sites,
            self.dephasing_rates.tobytes(),
            trap,
            float(self.energy_to_angular),
        )

    def with_dephasing(self, rates) -> "NetworkModel":
        return NetworkModel(self.hamiltonian, rates, self.trap, self.energy_to_angular)

    def with_trap(self, trap: Optional[Trap]) -> "NetworkModel":
        return NetworkModel(self.hamiltonian, self.dephasing_rates, trap, self.energy_to_angular)

    def __repr__(self) -> str:
        return (
            f"NetworkModel(n_sites={self.n_sites}, dephasing_rates={self.dephasing_rates.tolist()}, "
            f"trap={self.trap})"
        )


def _left(a):
    # vec(A X) = (I kron A) vec(X)
    return np.kron(np.eye(a.shape[0]), a)


def _right(b):
    # vec(X B) = (B^T kron I) vec(X)
    return np.kron(b.T, np.eye(b.shape[0]))


def _dissipator(jump: np.ndarray) -> np.ndarray:
    jd_j = jump.conj().T @ jump
    return 2.0 * np.kron(jump.conj(), jump) - _left(jd_j) - _right(jd_j)


def build_liouvillian(model: NetworkModel) -> np.ndarray:
    """Superoperator of the Haken-Strobl master equation, shape ``(dim^2, dim^2)``."""
    d, dim = model.n_sites, model.dim
    h = np.zeros((dim, dim), dtype=complex)
    h[:d, :d] = model.energy_to_angular * model.hamiltonian
    lv = -1j * (_left(h) - _right(h))

    for i, rate in enumerate(model.dephasing_rates):
        if rate:
            proj = np.zeros((dim, dim))
            proj[i, i] = 1.0
            lv += rate * _dissipator(proj)

    if model.trap is not None and model.trap.rate:
        jump = np.zeros((dim, dim))
        jump[model.sink_index, model.trap.exit_site] = 1.0
        lv += model.trap.rate * _dissipator(jump)
    return lv


@dataclass(frozen=True, eq=False)
class Propagator:
    """``exp(L dt)`` acting on column-stacked density matrices."""

    matrix: np.ndarray
    step: float
    model: NetworkModel = field(repr=False)

    @property
    def dim(self) -> int:
        return self.model.dim

    def apply(self, rho: np.ndarray) -> np.ndarray:
        n = self.dim
        out = self.matrix @ np.asarray(rho, dtype=complex).reshape(-1, order="F")
        return out.reshape((n, n), order="F")

    def __matmul__(self, other: "Propagator") -> "Propagator":
        if other.model.key != self.model.key:
            raise ValueError("cannot compose propagators of different models")
        return Propagator(self.matrix @ other.matrix, self.step + other.step, self.model)


class _PropagatorCache:
    """Bounded LRU map ``(model.key, dt) -> Propagator``, safe under threads."""

    def __init__(self, maxsize: int = 512):
        self.maxsize = maxsize
        self._data: OrderedDict = OrderedDict()
        self._lock = threading.Lock()

    def get_or_build(self, model: NetworkModel, dt: float) -> Propagator:
        key = (model.key, float(dt))
        with self._lock:
            hit = self._data.get(key)
            if hit is not None:
                self._data.move_to_end(key)
                return hit
        # Built outside the lock; a concurrent duplicate build is harmless.
        prop = Propagator(expm(build_liouvillian(model) * dt), float(dt), model)
        with self._lock:
            prop = self._data.setdefault(key, prop)
            self._data.move_to_end(key)
            while len(self._data) > self.maxsize:
                self._data.popitem(last=False)
        return prop

    def clear(self):
        with self._lock:
            self._data.clear()

    def __len__(self):
        return len(self._data)


propagator_cache = _PropagatorCache()


def make_propagator(model: NetworkModel, dt: float) -> Propagator:
    if not dt > 0:
        raise ValueError(f"propagation step must be positive, got {dt}")
    return propagator_cache.get_or_build(model, dt)


def site_state(model: NetworkModel, site: int) -> np.ndarray:
    """Density matrix of an exciton localised on ``site`` (0-based)."""
    if not 0 <= site < model.n_sites:
        raise IndexError(f"site {site} outside 0..{model.n_sites - 1}")
    rho = np.zeros((model.dim, model.dim), dtype=complex)
    rho[site, site] = 1.0
    return rho


def as_density_matrix(model: NetworkModel, rho) -> np.ndarray:
    """Validate ``rho`` and embed a site-only matrix into the sink-extended space."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidDensityMatrix(f"density matrix must be square, got shape {rho.shape}")
    if rho.shape[0] == model.n_sites and model.dim != model.n_sites:
        full = np.zeros((model.dim, model.dim), dtype=complex)
        full[: model.n_sites, : model.n_sites] = rho
        rho = full
    if rho.shape[0] != model.dim:
        raise InvalidDensityMatrix(f"density matrix has size {rho.shape[0]}, model needs {model.dim}")
    if not is_hermitian(rho):
        raise InvalidDensityMatrix("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > 1e-9:
        raise InvalidDensityMatrix(f"density matrix trace is {np.trace(rho).real:.12g}, expected 1")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0] < -1e-10:
        raise InvalidDensityMatrix("density matrix has negative eigenvalues")
    return rho


def evolve(model: NetworkModel, rho0, times: Sequence[float]) -> np.ndarray:
    """Density matrices at each time in ``times`` (ps), shape ``(len(times), dim, dim)``.

    Consecutive steps reuse cached propagators, so uniform grids cost a
    single matrix exponential.
    """
    rho = as_density_matrix(model, rho0)
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a non-empty 1-D sequence")
    if times[0] < 0 or np.any(np.diff(times) < 0):
        raise ValueError("times must be ascending and non-negative")

    out = np.empty((times.size, model.dim, model.dim), dtype=complex)
    vec = rho.reshape(-1, order="F")
    t_prev = 0.0
    for k, t in enumerate(times):
        # rounding keeps grids built by accumulation on a single cache entry
        step = round(t - t_prev, 12)
        if step > 0:
            vec = make_propagator(model, step).matrix @ vec
        out[k] = vec.reshape((model.dim, model.dim), order="F")
        t_prev = t
    return out


def populations(rho) -> np.ndarray:
    """Diagonal of one density matrix, or of each matrix in a stack."""
    return np.real(np.diagonal(np.asarray(rho), axis1=-2, axis2=-1)).copy()


def delocalization(rho, n_sites: Optional[int] = None):
    """Shannon entropy (natural log) of the site populations.

    Only the first ``n_sites`` populations enter (the sink is excluded and
    the remainder is not renormalised).  Accepts a stack of matrices.
    """
    p = populations(rho)
    if n_sites is not None:
        p = p[..., :n_sites]
    p = np.clip(p, 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    return -terms.sum(axis=-1)


def efficiency_trace(model: NetworkModel, rho0, t: float, step: float = 1e-3):
    """Time grid and running efficiency ``2 k_trap int_0^t p_exit``.

    Returns ``(times, eta, p_sink)``; ``p_sink`` comes from the same
    propagation and serves as an independent check of the quadrature.
    """
    if model.trap is None:
        raise NoTrap("efficiency needs a model with a trap")
    if t < 0:
        raise ValueError("t must be non-negative")
    if not step > 0:
        raise ValueError("quadrature step must be positive")
    n = max(1, int(np.ceil(t / step - 1e-9)))
    times = np.linspace(0.0, t, n + 1)
    rhos = evolve(model, rho0, times)
    pops = populations(rhos)
    eta = 2.0 * model.trap.rate * cumulative_trapezoid(times, pops[:, model.trap.exit_site])
    return times, eta, pops[:, model.sink_index]


def efficiency(model: NetworkModel, rho0, t: float, step: float = 1e-3) -> float:
    """Transport efficiency at time ``t`` (ps) by trapezoidal quadrature with ``step`` (ps)."""
    if model.trap is None:
        raise NoTrap("efficiency needs a model with a trap")
    if t == 0:
        return 0.0
    times, eta, _ = efficiency_trace(model, rho0, t, step)
    return float(eta[-1])


def unitary_evolution(model: NetworkModel, rho0, t: float) -> np.ndarray:
    """Closed-system evolution ``V exp(-i kappa Lambda t) V^+ rho0 (...)^+`` on the site block.

    Uses the Hamiltonian eigenbasis only; kept separate from the
    Liouvillian path so each can check the other.
    """
    w, v = eig_hermitian(model.hamiltonian)
    u_site = (v * np.exp(-1j * model.energy_to_angular * w * t)) @ v.conj().T
    u = np.eye(model.dim, dtype=complex)
    u[: model.n_sites, : model.n_sites] = u_site
    rho = as_density_matrix(model, rho0)
    return u @ rho @ u.conj().T


__all__ = [
    "KAPPA",
    "NetworkModel",
    "Propagator",
    "Trap",
    "as_density_matrix",
    "build_liouvillian",
    "delocalization",
    "efficiency",
    "efficiency_trace",
    "evolve",
    "make_propagator",
    "populations",
    "propagator_cache",
    "site_state",
    "unitary_evolution",
]
