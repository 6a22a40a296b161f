"""Reference computations that share no code with the package internals.

They are deliberately slow and literal: explicit chain operators,
element-by-element Liouvillians, depth-first branch recursion.
"""

import itertools

import numpy as np
import scipy.linalg

KAPPA = 2 * np.pi * 0.0299792458

H_TRIMER = np.array(
    [
        [215.0, -104.1, 5.1],
        [-104.1, 220.0, 32.6],
        [5.1, 32.6, 0.0],
    ]
)


def lindblad_rhs(h_ang, jumps, rates, rho):
    """Right-hand side -i[H, rho] + sum r (2 L rho L^+ - {L^+ L, rho})."""
    out = -1j * (h_ang @ rho - rho @ h_ang)
    for rate, lop in zip(rates, jumps):
        ld = lop.conj().T
        out += rate * (2 * lop @ rho @ ld - ld @ lop @ rho - rho @ ld @ lop)
    return out


def reference_superop(hamiltonian, gammas, trap=None, kappa=KAPPA):
    """Liouvillian assembled column by column from the matrix-form right-hand side.

    ``trap`` is ``(exit_site, rate)`` with a 0-based site; the sink is appended last.
    """
    d = hamiltonian.shape[0]
    dim = d + (trap is not None)
    h = np.zeros((dim, dim), dtype=complex)
    h[:d, :d] = kappa * hamiltonian
    jumps, rates = [], []
    for i, g in enumerate(np.broadcast_to(gammas, (d,))):
        lop = np.zeros((dim, dim))
        lop[i, i] = 1
        jumps.append(lop)
        rates.append(g)
    if trap is not None:
        lop = np.zeros((dim, dim))
        lop[d, trap[0]] = 1
        jumps.append(lop)
        rates.append(trap[1])
    sup = np.zeros((dim * dim, dim * dim), dtype=complex)
    for col in range(dim * dim):
        e = np.zeros(dim * dim)
        e[col] = 1
        sup[:, col] = lindblad_rhs(h, jumps, rates, e.reshape(dim, dim, order="F")).reshape(-1, order="F")
    return sup


def reference_channel(hamiltonian, gammas, dt, trap=None):
    sup = scipy.linalg.expm(reference_superop(hamiltonian, gammas, trap) * dt)
    dim = int(round(np.sqrt(sup.shape[0])))

    def apply(rho):
        return (sup @ rho.reshape(-1, order="F")).reshape(dim, dim, order="F")

    return apply


def dfs_decoherence(channel, projectors, rho0, n):
    """Dense D by depth-first recursion over pairs of history prefixes."""
    db = len(projectors)
    size = db**n
    dense = np.zeros((size, size), dtype=complex)

    def recurse(x, level, fj, fk):
        y = channel(x)
        for a in range(db):
            for b in range(db):
                z = projectors[a] @ y @ projectors[b]
                nj, nk = fj * db + a, fk * db + b
                if level == n:
                    dense[nj, nk] = np.trace(z)
                else:
                    recurse(z, level + 1, nj, nk)

    recurse(np.asarray(rho0, dtype=complex), 1, 0, 0)
    return dense


def chain_decoherence(hamiltonian, projectors, rho0, n, dt, kappa=KAPPA):
    """Closed-system D from explicit chain operators C_j = P_jN U ... P_j1 U."""
    u = scipy.linalg.expm(-1j * kappa * hamiltonian * dt)
    db = len(projectors)
    chains = []
    for hist in itertools.product(range(db), repeat=n):
        c = np.eye(hamiltonian.shape[0], dtype=complex)
        for j in hist:
            c = projectors[j] @ u @ c
        chains.append(c)
    size = len(chains)
    dense = np.empty((size, size), dtype=complex)
    for a, ca in enumerate(chains):
        left = ca @ rho0
        for b, cb in enumerate(chains):
            dense[a, b] = np.trace(left @ cb.conj().T)
    return dense


def site_projectors(dim):
    out = []
    for i in range(dim):
        p = np.zeros((dim, dim), dtype=complex)
        p[i, i] = 1
        out.append(p)
    return out


def random_density(rng, dim, rank=None):
    rank = dim if rank is None else rank
    a = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def random_hamiltonian(rng, d, scale=150.0):
    a = rng.normal(scale=scale, size=(d, d))
    return (a + a.T) / 2
