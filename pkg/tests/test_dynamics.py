import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from dechist.dynamics import (
    KAPPA,
    NetworkModel,
    Trap,
    as_density_matrix,
    build_liouvillian,
    delocalization,
    efficiency,
    efficiency_trace,
    evolve,
    make_propagator,
    populations,
    propagator_cache,
    site_state,
    unitary_evolution,
)
from dechist.errors import InvalidDensityMatrix, InvalidModel, NoTrap
from oracles import H_TRIMER, random_density, random_hamiltonian, reference_superop


def test_kappa_value():
    assert KAPPA == pytest.approx(0.1883651567, abs=1e-10)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(hamiltonian=[[0, 1], [2, 0]]),
        dict(hamiltonian=[[0, 1, 2]]),
        dict(hamiltonian=[[0.0, 1.0], [1.0, 0.0]], dephasing_rates=-1.0),
        dict(hamiltonian=[[0.0, 1.0], [1.0, 0.0]], dephasing_rates=[1.0, 2.0, 3.0]),
        dict(hamiltonian=[[0.0, 1.0], [1.0, 0.0]], trap=Trap(2, 1.0)),
        dict(hamiltonian=[[0.0, 1.0], [1.0, 0.0]], trap=Trap(0, -1.0)),
        dict(hamiltonian=[[np.nan]]),
    ],
)
def test_invalid_models(kwargs):
    with pytest.raises(InvalidModel):
        NetworkModel(**kwargs)


def test_model_is_immutable(trimer):
    with pytest.raises(ValueError):
        trimer.hamiltonian[0, 0] = 1.0
    assert trimer.dim == 3
    assert trimer.with_trap(Trap(2, 5.0)).dim == 4
    assert trimer.with_trap(Trap(2, 5.0)).sink_index == 3


def test_single_site_liouvillian_is_zero():
    assert np.all(build_liouvillian(NetworkModel([[3.0]])) == 0)


@pytest.mark.parametrize("gamma", [0.0, 16.0])
@pytest.mark.parametrize("trap", [None, Trap(2, 5.0), Trap(0, 1.5)])
def test_liouvillian_matches_reference(gamma, trap):
    model = NetworkModel(H_TRIMER, gamma, trap)
    ref = reference_superop(H_TRIMER, gamma, None if trap is None else (trap.exit_site, trap.rate))
    np.testing.assert_allclose(build_liouvillian(model), ref, atol=1e-12)


def test_liouvillian_per_site_rates():
    rates = [0.5, 3.0, 20.0]
    np.testing.assert_allclose(
        build_liouvillian(NetworkModel(H_TRIMER, rates)), reference_superop(H_TRIMER, np.array(rates)), atol=1e-12
    )


def test_propagator_matches_scipy_expm(trapped_trimer):
    model = trapped_trimer.with_dephasing(16.0)
    ref = scipy.linalg.expm(reference_superop(H_TRIMER, 16.0, (2, 5.0)) * 0.123)
    np.testing.assert_allclose(make_propagator(model, 0.123).matrix, ref, atol=1e-11)


def test_propagator_rejects_non_positive_step(trimer):
    with pytest.raises(ValueError):
        make_propagator(trimer, 0.0)


def test_propagator_cache_reuses_equal_models():
    propagator_cache.clear()
    a = make_propagator(NetworkModel(H_TRIMER, 1.0), 0.01)
    b = make_propagator(NetworkModel(H_TRIMER.copy(), 1.0), 0.01)
    assert a is b


def test_semigroup_property(trapped_trimer):
    model = trapped_trimer.with_dephasing(3.0)
    both = make_propagator(model, 0.03) @ make_propagator(model, 0.05)
    np.testing.assert_allclose(both.matrix, make_propagator(model, 0.08).matrix, atol=1e-12)
    assert both.step == pytest.approx(0.08)


def test_channel_is_completely_positive(trapped_trimer):
    model = trapped_trimer.with_dephasing(7.0)
    k = make_propagator(model, 0.04)
    dim = model.dim
    choi = np.zeros((dim * dim, dim * dim), dtype=complex)
    for i in range(dim):
        for j in range(dim):
            e = np.zeros((dim, dim))
            e[i, j] = 1
            choi += np.kron(e, k.apply(e))
    assert np.linalg.eigvalsh(choi)[0] > -1e-10


def test_analytic_dephasing_two_sites():
    g1, g2 = 1.3, 4.2
    model = NetworkModel(np.zeros((2, 2)), [g1, g2])
    rho0 = np.array([[0.5, 0.3 - 0.2j], [0.3 + 0.2j, 0.5]])
    times = np.linspace(0, 1, 101)
    rhos = evolve(model, rho0, times)
    np.testing.assert_allclose(rhos[:, 0, 1], rho0[0, 1] * np.exp(-(g1 + g2) * times), atol=1e-8)
    np.testing.assert_allclose(populations(rhos), 0.5, atol=1e-12)


def test_maximally_mixed_is_fixed_point(rng):
    model = NetworkModel(random_hamiltonian(rng, 4), rng.uniform(0, 30, 4))
    rhos = evolve(model, np.eye(4) / 4, [0.0, 0.1, 2.0])
    np.testing.assert_allclose(rhos, np.broadcast_to(np.eye(4) / 4, rhos.shape), atol=1e-12)


def test_identity_spans_the_kernel(trimer):
    lv = build_liouvillian(trimer.with_dephasing(16.0))
    np.testing.assert_allclose(lv @ np.eye(3).reshape(-1), 0, atol=1e-12)
    rates = np.sort(-np.linalg.eigvals(lv).real)
    assert abs(rates[0]) < 1e-12 and rates[1] > 1.0


def test_relaxes_to_identity(trimer, rho_site1):
    # the slowest mode decays at ~1.88 / ps, so 1e-6 is reached only after ~7.4 ps
    rho = evolve(trimer.with_dephasing(16.0), rho_site1, [10.0])[0]
    assert np.max(np.abs(rho - np.eye(3) / 3)) < 1e-6


def test_closed_evolution_matches_unitary_oracle(trimer, rho_site1):
    for t in [0.0, 0.013, 0.163, 0.5, 1.7]:
        np.testing.assert_allclose(evolve(trimer, rho_site1, [t])[0], unitary_evolution(trimer, rho_site1, t), atol=1e-8)


def test_unitary_oracle_against_direct_exponential(rho_site1):
    t = 0.211
    u = scipy.linalg.expm(-1j * KAPPA * H_TRIMER * t)
    expected = u @ rho_site1 @ u.conj().T
    np.testing.assert_allclose(unitary_evolution(NetworkModel(H_TRIMER), rho_site1, t), expected, atol=1e-12)


def test_site1_population_recurs(trimer, rho_site1):
    # the dominant +- beat brings the exciton back towards site 1
    w = np.linalg.eigvalsh(H_TRIMER)
    period = 2 * np.pi / (KAPPA * (w[2] - w[1]))
    p = populations(evolve(trimer, rho_site1, [period / 2, period]))
    assert p[1, 0] > p[0, 0]


def test_trace_conserved_with_trap(trapped_trimer, rho_site1):
    model = trapped_trimer.with_dephasing(16.0)
    rhos = evolve(model, as_density_matrix(model, rho_site1[:3, :3]), np.linspace(0, 2, 41))
    np.testing.assert_allclose(np.trace(rhos, axis1=1, axis2=2), 1.0, atol=1e-12)
    assert np.all(np.diff(populations(rhos)[:, 3]) >= -1e-12)


def test_evolve_argument_errors(trimer, rho_site1):
    with pytest.raises(ValueError):
        evolve(trimer, rho_site1, [0.2, 0.1])
    with pytest.raises(ValueError):
        evolve(trimer, rho_site1, [])


@pytest.mark.parametrize(
    "rho",
    [
        np.eye(2) / 2,
        np.array([[1.0, 1.0, 0], [0, 0, 0], [0, 0, 0]]),
        np.eye(3),
        np.diag([1.5, -0.5, 0.0]),
    ],
)
def test_invalid_density_matrices(trimer, rho):
    with pytest.raises(InvalidDensityMatrix):
        as_density_matrix(trimer, rho)


def test_site_state_range(trimer):
    with pytest.raises(IndexError):
        site_state(trimer, 3)


def test_delocalization_bounds(trimer, rho_site1):
    times = np.linspace(0, 1, 201)
    h = delocalization(evolve(trimer.with_dephasing(0.1), rho_site1, times))
    assert h[0] == 0
    assert np.all(h <= np.log(3) + 1e-12)
    assert delocalization(np.eye(3) / 3) == pytest.approx(np.log(3))


def test_delocalization_at_40fs(trimer, rho_site1):
    h = delocalization(evolve(trimer, rho_site1, [0.04])[0])
    assert h == pytest.approx(0.75, abs=0.03)


def test_delocalization_approaches_ln3(trimer, rho_site1):
    h = delocalization(evolve(trimer.with_dephasing(16.0), rho_site1, [3.0, 10.0]))
    assert h[0] == pytest.approx(np.log(3), abs=1e-5)
    assert h[1] == pytest.approx(np.log(3), abs=1e-12)


def test_efficiency_needs_trap(trimer, rho_site1):
    with pytest.raises(NoTrap):
        efficiency(trimer, rho_site1, 1.0)


def test_efficiency_zero_rate():
    model = NetworkModel(H_TRIMER, 1.0, Trap(2, 0.0))
    assert efficiency(model, site_state(model, 0), 1.0) == 0.0


@pytest.mark.parametrize("gamma", [0.1, 16.0, 60.0])
def test_efficiency_matches_sink_population(trapped_trimer, gamma):
    model = trapped_trimer.with_dephasing(gamma)
    _, eta, sink = efficiency_trace(model, site_state(model, 0), 2.0)
    assert np.max(np.abs(eta - sink)) < 1e-4
    assert np.all(np.diff(eta) >= 0)


def test_efficiency_enaqt_ordering(trapped_trimer):
    rho0 = site_state(trapped_trimer, 0)
    eta = {g: efficiency(trapped_trimer.with_dephasing(g), rho0, 1.0) for g in (0.1, 16.0, 60.0)}
    assert eta[16.0] > eta[0.1]
    assert eta[16.0] > eta[60.0]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.booleans())
def test_random_models_preserve_density_matrices(seed, d, trapped):
    rng = np.random.default_rng(seed)
    trap = Trap(int(rng.integers(d)), float(rng.uniform(0, 10))) if trapped else None
    model = NetworkModel(random_hamiltonian(rng, d), rng.uniform(0, 100, d), trap)
    rho0 = as_density_matrix(model, random_density(rng, d))
    for rho in evolve(model, rho0, np.linspace(0, 0.5, 6)):
        assert abs(np.trace(rho) - 1) < 1e-10
        assert np.allclose(rho, rho.conj().T, atol=1e-12)
        assert np.linalg.eigvalsh(rho)[0] > -1e-10
