"""Decoherence matrices over equally spaced projector histories.

A history ``j = (j_1, ..., j_N)`` records which basis projector fired at
times ``dt, 2 dt, ..., N dt``.  With reduced (Markovian) propagator ``K``,

    D[j, k] = Tr[P_jN K[P_j(N-1) ... K[rho0] ... P_k(N-1)] P_kN]

Every projector used here is rank one, ``P_j = |e_j><e_j|``, so each
projected branch operator is a scalar multiple of ``|e_j><e_k|`` and the
entry factorises into a product of pair-transfer amplitudes

    G[(a, b), (j, k)] = <e_a| K[|e_j><e_k|] |e_b>,

    D[j, k] = <e_j1|K[rho0]|e_k1> * prod_l G[(j_l, k_l), (j_l-1, k_l-1)] * delta(j_N, k_N).

The matrix is built one final-index block at a time, so peak memory is a
single ``d_b^(N-1) x d_b^(N-1)`` block plus the prefix amplitudes.

History indices are 0-based.  Flattened indices are row-major in
``(j_1, ..., j_N)``, i.e. ``j_1`` is the most significant digit.
"""

from __future__ import annotations

import enum
import itertools
import struct
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .dynamics import NetworkModel, as_density_matrix, make_propagator
from .errors import BudgetExceeded, IndexOutOfRange
from .numerics import eig_hermitian

DEFAULT_ENTRY_CAP = 10**8


class Basis(str, enum.Enum):
    SITE = "site"
    EXCITON = "exciton"


@dataclass(frozen=True)
class HistorySpec:
    """Projections in ``basis`` at times ``step, 2 step, ..., n_projections * step`` (ps)."""

    basis: Basis = Basis.SITE
    n_projections: int = 4
    step: float = 0.08
    include_sink_projector: bool = False

    def __post_init__(self):
        object.__setattr__(self, "basis", Basis(self.basis))
        if int(self.n_projections) != self.n_projections or self.n_projections < 1:
            raise ValueError(f"n_projections must be a positive integer, got {self.n_projections}")
        object.__setattr__(self, "n_projections", int(self.n_projections))
        if not self.step > 0:
            raise ValueError(f"step must be positive, got {self.step}")

    def for_model(self, model: NetworkModel) -> "HistorySpec":
        """Copy with the sink projector forced on when the model has a trap."""
        want = model.trap is not None
        if self.include_sink_projector == want:
            return self
        return HistorySpec(self.basis, self.n_projections, self.step, want)


def basis_vectors(model: NetworkModel, basis: Basis | str) -> np.ndarray:
    """Columns are the orthonormal vectors ``e_j`` spanning the model's state space.

    The exciton basis is ordered by ascending energy; the sink, when
    present, is always the last vector.
    """
    basis = Basis(basis)
    dim, d = model.dim, model.n_sites
    vecs = np.eye(dim, dtype=complex)
    if basis is Basis.EXCITON:
        vecs[:d, :d] = eig_hermitian(model.hamiltonian).eigenvectors
    return vecs


def projector_family(model: NetworkModel, basis: Basis | str) -> list:
    """Rank-one projectors resolving the identity on the model's state space.

    A model with a trap gets the sink projector appended, otherwise the
    family would not be exhaustive.
    """
    vecs = basis_vectors(model, basis)
    return [np.outer(vecs[:, j], vecs[:, j].conj()) for j in range(vecs.shape[1])]


def _operator_basis(vecs: np.ndarray) -> np.ndarray:
    # column j*n + k holds vec_F(|e_j><e_k|)
    n = vecs.shape[1]
    ops = np.empty((vecs.shape[0] ** 2, n * n), dtype=complex)
    for j in range(n):
        for k in range(n):
            ops[:, j * n + k] = np.outer(vecs[:, j], vecs[:, k].conj()).reshape(-1, order="F")
    return ops


def pair_transfer_amplitudes(model: NetworkModel, vecs: np.ndarray, dt: float) -> np.ndarray:
    """``G[a, b, j, k] = <e_a| K_dt[|e_j><e_k|] |e_b>``."""
    n = vecs.shape[1]
    ops = _operator_basis(vecs)
    prop = make_propagator(model, dt).matrix
    # <e_a|Y|e_b> = Tr[(|e_a><e_b|)^+ Y] = vec(|e_a><e_b|)^H vec(Y)
    g = ops.conj().T @ (prop @ ops)
    return g.reshape(n, n, n, n)


class DecoherenceMatrix:
    """Block-diagonal decoherence matrix, stored as one block per final index.

    ``blocks[f]`` is the ``d_b^(N-1) x d_b^(N-1)`` matrix over history
    prefixes ``(j_1, ..., j_(N-1))`` of histories ending in ``f``.
    """

    def __init__(self, spec: HistorySpec, blocks: Sequence[np.ndarray], n_basis: Optional[int] = None):
        self.spec = spec
        self.blocks = tuple(np.asarray(b) for b in blocks)
        self.n_basis = len(self.blocks) if n_basis is None else n_basis
        if len(self.blocks) != self.n_basis:
            raise ValueError("need exactly one block per basis state")
        side = self.n_basis ** (spec.n_projections - 1)
        for b in self.blocks:
            if b.shape != (side, side):
                raise ValueError(f"block shape {b.shape} != {(side, side)}")
            b.setflags(write=False)

    @property
    def n_projections(self) -> int:
        return self.spec.n_projections

    @property
    def n_histories(self) -> int:
        return self.n_basis**self.n_projections

    @property
    def shape(self) -> tuple:
        return (self.n_histories, self.n_histories)

    def __repr__(self) -> str:
        return f"DecoherenceMatrix(basis={self.spec.basis.value}, N={self.n_projections}, dt={self.spec.step}, d_b={self.n_basis})"

    def history_index(self, history: Sequence[int]) -> int:
        history = tuple(int(x) for x in history)
        if len(history) != self.n_projections or any(not 0 <= x < self.n_basis for x in history):
            raise IndexOutOfRange(f"history {history} not in {self.n_basis}^{self.n_projections}")
        flat = 0
        for x in history:
            flat = flat * self.n_basis + x
        return flat

    def history(self, flat: int) -> tuple:
        if not 0 <= flat < self.n_histories:
            raise IndexOutOfRange(f"flat index {flat} out of range")
        digits = []
        for _ in range(self.n_projections):
            flat, r = divmod(flat, self.n_basis)
            digits.append(r)
        return tuple(reversed(digits))

    def histories(self) -> Iterable[tuple]:
        return itertools.product(range(self.n_basis), repeat=self.n_projections)

    def entry(self, j: Sequence[int], k: Sequence[int]) -> complex:
        fj, fk = self.history_index(j), self.history_index(k)
        if fj % self.n_basis != fk % self.n_basis:
            return 0j
        return complex(self.blocks[fj % self.n_basis][fj // self.n_basis, fk // self.n_basis])

    def to_dense(self) -> np.ndarray:
        n, db = self.n_histories, self.n_basis
        dense = np.zeros((n, n), dtype=complex)
        for f, b in enumerate(self.blocks):
            dense[f::db, f::db] = b
        return dense

    def diagonal(self) -> np.ndarray:
        """History weights in flat order."""
        out = np.empty(self.n_histories)
        for f, b in enumerate(self.blocks):
            out[f :: self.n_basis] = np.real(np.diagonal(b))
        return out

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues of the whole matrix (union over blocks), ascending."""
        vals = [np.linalg.eigvalsh(0.5 * (b + b.conj().T)) for b in self.blocks]
        return np.sort(np.concatenate(vals))

    def trace(self) -> float:
        return float(sum(np.trace(b).real for b in self.blocks))


def build_decoherence_matrix(
    model: NetworkModel,
    rho0,
    spec: HistorySpec,
    entry_cap: int = DEFAULT_ENTRY_CAP,
) -> DecoherenceMatrix:
    """Decoherence matrix of ``spec``'s history set for evolution from ``rho0``."""
    spec = spec.for_model(model)
    rho = as_density_matrix(model, rho0)
    vecs = basis_vectors(model, spec.basis)
    db, n_proj = vecs.shape[1], spec.n_projections
    if float(db) ** (2 * n_proj) > entry_cap:
        raise BudgetExceeded(
            f"{db}^{2 * n_proj} = {db ** (2 * n_proj):.3g} decoherence-matrix entries exceed the cap of {entry_cap:.3g}"
        )

    first = vecs.conj().T @ make_propagator(model, spec.step).apply(rho) @ vecs
    if n_proj == 1:
        return DecoherenceMatrix(spec, [np.array([[first[f, f]]]) for f in range(db)], db)

    g = pair_transfer_amplitudes(model, vecs, spec.step)  # [a, b, j, k]
    # amp[J, j, K, k]: prefix amplitudes with the last projector indices split out
    amp = first.reshape(1, db, 1, db)
    for _ in range(n_proj - 2):
        nj, nk = amp.shape[0] * db, amp.shape[2] * db
        amp = np.einsum("pjqk,abjk->pjaqkb", amp, g, optimize=True).reshape(nj, db, nk, db)

    side = amp.shape[0] * db
    blocks = []
    for f in range(db):
        blk = amp * g[f, f][None, :, None, :]
        blk = blk.reshape(side, side)
        blocks.append(0.5 * (blk + blk.conj().T))
    return DecoherenceMatrix(spec, blocks, db)


def weights(dm: DecoherenceMatrix) -> np.ndarray:
    """History weights ``w_j = D[j, j]`` in flat order."""
    return dm.diagonal()


def coarse_grain_weight(dm: DecoherenceMatrix, histories: Iterable[Sequence[int]]) -> float:
    """Weight of the coarse-grained history formed by merging ``histories``.

    Equal to the sum of the sub-block of ``D`` over the given histories.
    """
    flat = sorted({dm.history_index(h) for h in histories})
    if not flat:
        raise ValueError("need at least one history")
    total = 0j
    idx = np.array(flat)
    for f in range(dm.n_basis):
        sel = idx[idx % dm.n_basis == f] // dm.n_basis
        if sel.size:
            total += dm.blocks[f][np.ix_(sel, sel)].sum()
    return float(total.real)


def _check_final(dm: DecoherenceMatrix, final: int) -> int:
    if not 0 <= final < dm.n_basis:
        raise IndexOutOfRange(f"final index {final} outside 0..{dm.n_basis - 1}")
    return int(final)


def final_site_block(dm: DecoherenceMatrix, final: int) -> np.ndarray:
    """Block of histories whose last projection is onto ``final``."""
    return dm.blocks[_check_final(dm, final)]


def interference(dm: DecoherenceMatrix, final: int) -> float:
    """Summed interference among histories ending in ``final``.

    ``p_final(N dt) = sum of block diagonal + interference``; this is the
    sum of the block's off-diagonal entries.
    """
    blk = dm.blocks[_check_final(dm, final)]
    return float((blk.sum() - np.trace(blk)).real)


def block_weight_sum(dm: DecoherenceMatrix, final: int) -> float:
    return float(np.trace(dm.blocks[_check_final(dm, final)]).real)


@dataclass(frozen=True)
class DecoherenceReport:
    medium: bool
    weak: bool
    max_offdiag: float


def decoherence_check(dm: DecoherenceMatrix, tol: float) -> DecoherenceReport:
    """Medium (all off-diagonals vanish) and weak (real parts vanish) decoherence tests."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    max_abs = max_re = 0.0
    for b in dm.blocks:
        off = b - np.diag(np.diagonal(b))
        if off.size:
            max_abs = max(max_abs, float(np.abs(off).max()))
            max_re = max(max_re, float(np.abs(off.real).max()))
    return DecoherenceReport(max_abs < tol, max_re < tol, max_abs)


_HEADER = struct.Struct("<QQd")


def save_blocks(dm: DecoherenceMatrix, path) -> None:
    """Write the blocks as raw little-endian float64 pairs (re, im), row-major.

    Header: ``N`` (uint64), ``d_b`` (uint64), ``dt`` in ps (float64).
    """
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(dm.n_projections, dm.n_basis, dm.spec.step))
        for b in dm.blocks:
            fh.write(np.ascontiguousarray(b, dtype="<c16").tobytes())


def load_blocks(path, basis: Basis | str = Basis.SITE) -> DecoherenceMatrix:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    n_proj, db, dt = _HEADER.unpack_from(raw)
    side = db ** (n_proj - 1)
    body = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size)
    if body.size != db * side * side:
        raise ValueError(f"{path}: expected {db * side * side} entries, found {body.size}")
    blocks = [b.reshape(side, side).astype(complex) for b in body.reshape(db, side * side)]
    return DecoherenceMatrix(HistorySpec(basis, n_proj, dt), blocks, db)
