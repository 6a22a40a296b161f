"""Decoherent-histories analysis of Markovian exciton transport."""

from .dynamics import (
    KAPPA,
    NetworkModel,
    Trap,
    build_liouvillian,
    delocalization,
    efficiency,
    evolve,
    make_propagator,
    populations,
    site_state,
)
from .histories import (
    Basis,
    DecoherenceMatrix,
    HistorySpec,
    build_decoherence_matrix,
    coarse_grain_weight,
    decoherence_check,
    final_site_block,
    interference,
    projector_family,
    weights,
)
from .measures import (
    average_coherence_Q,
    average_interference,
    coherence_C,
    coherence_CL,
    coherence_scan,
    efficiency_decomposition,
    interference_trace,
    shannon_entropy,
    von_neumann_entropy,
)

__version__ = "0.1.0"
