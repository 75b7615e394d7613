import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from topdown.errors import (AnnihilatedStateError, UnderdeterminedError,
                            UnsupportedDimensionError)
from topdown.gates import build_gate
from topdown.metrics import as_density, pure_fidelity, uhlmann_fidelity
from topdown.quantum import (CoincidenceTable, all_mubs, apply_local_gate, basis_correlation,
                             maximally_entangled, maximally_mixed, mub_basis, mub_fidelity,
                             output_state, partial_trace_alice, partial_trace_bob,
                             project_to_density, pure_state, simulate_coincidences,
                             tomography, two_basis_fidelity_bound, witness_dimension)

seeds = st.integers(0, 2 ** 32 - 1)


def _random_bipartite(rng, d, rank):
    a = rng.standard_normal((d * d, rank)) + 1j * rng.standard_normal((d * d, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def _phi_plus(d):
    return np.eye(d).reshape(d * d) / np.sqrt(d)


@pytest.mark.parametrize("d", [2, 3, 5, 7])
def test_mubs_orthonormal_and_unbiased(d):
    bases = all_mubs(d)
    assert len(bases) == d + 1
    for b in bases:
        assert np.allclose(b.conj().T @ b, np.eye(d), atol=1e-12)
    for b1, b2 in itertools.combinations(bases, 2):
        assert np.allclose(np.abs(b1.conj().T @ b2) ** 2, 1 / d, atol=1e-12)


def test_mub_first_bases():
    assert np.allclose(mub_basis(5, 0), np.eye(5))
    assert np.allclose(mub_basis(5, 1), build_gate("fourier", 5))


@pytest.mark.parametrize("d", [1, 4, 6, 9])
def test_mub_unsupported_dimensions(d):
    with pytest.raises(UnsupportedDimensionError):
        mub_basis(d, 1)


def test_mub_index_range():
    with pytest.raises(ValueError):
        mub_basis(3, 4)
    with pytest.raises(ValueError):
        mub_basis(2, 3)


@pytest.mark.parametrize("d", [2, 3, 5])
def test_phi_plus_fully_correlated_in_every_basis(d):
    table = simulate_coincidences(maximally_entangled(d), d)
    for mu in range(d + 1):
        assert basis_correlation(table, mu) == pytest.approx(1, abs=1e-12)
        # mismatched bases are uniformly random
        if mu > 0:
            assert np.allclose(table.block(0, mu), 1 / d ** 2)
    assert mub_fidelity(table) == pytest.approx(1, abs=1e-12)


def test_states_and_partial_traces():
    d = 3
    phi = maximally_entangled(d)
    as_density(phi)
    assert np.allclose(partial_trace_bob(phi, d), np.eye(d) / d)
    assert np.allclose(partial_trace_alice(phi, d), np.eye(d) / d)
    assert np.allclose(maximally_mixed(d), np.eye(9) / 9)
    rho = pure_state(np.arange(4) + 1j)
    assert np.trace(rho).real == pytest.approx(1)
    a, b = np.diag([0.2, 0.8]), np.array([[0.5, 0.5j], [-0.5j, 0.5]])
    joint = np.kron(a, b)
    assert np.allclose(partial_trace_bob(joint, 2), a)
    assert np.allclose(partial_trace_alice(joint, 2), b)


@given(seeds, st.sampled_from([2, 3, 5]), st.integers(1, 4))
def test_mub_fidelity_equals_phi_plus_overlap(seed, d, rank):
    rho = _random_bipartite(np.random.default_rng(seed), d, rank)
    phi = _phi_plus(d)
    table = simulate_coincidences(rho, d)
    assert mub_fidelity(table) == pytest.approx(np.real(phi.conj() @ rho @ phi), abs=1e-10)


@given(seeds, st.sampled_from([2, 3, 5]), st.integers(1, 25))
def test_two_basis_bound_is_a_lower_bound(seed, d, rank):
    rho = _random_bipartite(np.random.default_rng(seed), d, min(rank, d * d))
    phi = _phi_plus(d)
    table = simulate_coincidences(rho, d, alice_bases=(0, 1))
    assert two_basis_fidelity_bound(table) <= np.real(phi.conj() @ rho @ phi) + 1e-10


def test_two_basis_bound_tight_on_phi_plus_and_trivial_on_mixed():
    d = 5
    table = simulate_coincidences(maximally_entangled(d), d, alice_bases=(0, 1))
    assert two_basis_fidelity_bound(table) == pytest.approx(1)
    table = simulate_coincidences(maximally_mixed(d), d, alice_bases=(0, 1))
    assert two_basis_fidelity_bound(table) == 0


@given(seeds, st.sampled_from([2, 3]))
def test_channel_state_duality(seed, d):
    # the state (1 x T)|Phi+> has fidelity with (1 x T')|Phi+> equal to the channel fidelity
    rng = np.random.default_rng(seed)
    t = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    target = build_gate("random:%d" % (seed % 1000), d)
    rho = output_state(maximally_entangled(d), t)
    ideal = output_state(maximally_entangled(d), target)
    assert uhlmann_fidelity(rho, ideal) == pytest.approx(pure_fidelity(t, target), abs=1e-8)


def test_apply_local_gate_annihilation():
    with pytest.raises(AnnihilatedStateError):
        apply_local_gate(maximally_entangled(2), np.zeros((2, 2)))
    out, norm = apply_local_gate(maximally_entangled(2), 0.5 * np.eye(2))
    assert norm == pytest.approx(0.25)
    assert np.allclose(out, maximally_entangled(2))


@given(seeds, st.integers(2, 6))
def test_project_to_density(seed, k):
    rng = np.random.default_rng(seed)
    h = rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k))
    h = h + h.conj().T
    rho = project_to_density(h)
    as_density(rho, tol=1e-9)
    # projection is idempotent
    assert np.allclose(project_to_density(rho), rho, atol=1e-10)


@pytest.mark.parametrize("d", [2, 3])
def test_tomography_noiseless_random_states(d):
    rng = np.random.default_rng(d)
    for rank in (1, 2, d * d):
        rho = _random_bipartite(rng, d, rank)
        rec = tomography(simulate_coincidences(rho, d, rate=5000.0))
        assert uhlmann_fidelity(rec, rho) >= 0.999


def test_tomography_needs_full_set():
    table = simulate_coincidences(maximally_entangled(3), 3, alice_bases=(0, 1))
    with pytest.raises(UnderdeterminedError):
        tomography(table)


def test_tomography_with_detector_efficiency():
    d = 2
    eff = {(mu, a): 0.5 + 0.1 * a for mu in range(3) for a in range(2)}
    rho = _random_bipartite(np.random.default_rng(1), d, 2)
    table = simulate_coincidences(rho, d, efficiency=eff, rate=100.0)
    rec = tomography(table, efficiency=eff)
    assert uhlmann_fidelity(rec, rho) >= 0.999


def test_poisson_counts_are_seeded_integers():
    a = simulate_coincidences(maximally_entangled(2), 2, rate=1000.0, poisson_seed=4)
    b = simulate_coincidences(maximally_entangled(2), 2, rate=1000.0, poisson_seed=4)
    assert np.array_equal(a.counts, b.counts)
    assert np.all(a.counts == np.round(a.counts))


def test_csv_round_trip():
    table = simulate_coincidences(maximally_entangled(3), 3, rate=10.0, poisson_seed=1)
    text = table.to_csv()
    assert text.splitlines()[0] == "mu,nu,a,b,count"
    back = CoincidenceTable.from_csv(text, 3)
    assert np.array_equal(back.counts, table.counts)
    assert back.alice_bases == table.alice_bases
    with pytest.raises(UnderdeterminedError):
        CoincidenceTable.from_csv("\n".join(text.splitlines()[:-1]), 3)


def test_witness_arithmetic():
    assert witness_dimension(0.689, 5) == 4
    assert witness_dimension(0.838, 5) == 5
    assert witness_dimension(1 / 3, 3) == 1
    assert witness_dimension(0.34, 3) == 2
    assert witness_dimension(1.0, 7) == 7
    assert witness_dimension(0.0, 4) == 1
    with pytest.raises(ValueError):
        witness_dimension(1.2, 3)


@given(st.floats(0, 1), st.integers(2, 12))
def test_witness_is_tight_bound(f, d):
    k = witness_dimension(f, d)
    assert 1 <= k <= d
    # certified k means F exceeds the Schmidt-number (k-1) bound, but not the k bound
    assert k == 1 or f > (k - 1) / d
    assert k == d or f <= k / d
