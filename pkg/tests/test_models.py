import numpy as np
import pytest
import scipy.linalg

from dqs.models import (LRI, EvolutionConfig, Schwinger, apply_hamiltonian, exact_evolve,
                        hamiltonian, model_from_dict, trotter_params)
from dqs.rewards import fidelity_reward
from dqs.statevec import all_up, basis_state, neel_state, run_circuit

import oracles


def test_lri_single_site_expectations():
    H = hamiltonian(LRI(1))
    assert abs(H.expectation(basis_state(1, "u")) - 2.0) < 1e-14
    assert abs(H.expectation(basis_state(1, "d")) + 2.0) < 1e-14


def test_lri_two_sites_all_up_energy():
    # <XX> and <X> vanish on |uu>, leaving 2 m_z
    assert abs(hamiltonian(LRI(2)).expectation(all_up(2)) - 4.0) < 1e-13


@pytest.mark.parametrize("N", [2, 3, 4])
def test_lri_matches_kron_oracle(N):
    spec = LRI(N, J=0.7, m_x=1.3, m_z=-0.4, alpha=1.5)
    ref = oracles.lri_dense(N, spec.J, spec.m_x, spec.m_z, spec.alpha)
    np.testing.assert_allclose(hamiltonian(spec).dense(), ref.real, atol=1e-12)
    assert np.abs(ref.imag).max() < 1e-14


@pytest.mark.parametrize("N", [2, 3, 4, 5])
def test_schwinger_matches_literal_oracle(N):
    spec = Schwinger(N, w=0.8, J=1.3, m=0.6)
    np.testing.assert_allclose(hamiltonian(spec).dense(),
                               oracles.schwinger_dense(N, spec.w, spec.J, spec.m).real, atol=1e-12)


@pytest.mark.parametrize("spec", [LRI(5), Schwinger(5)])
def test_matrix_free_apply_matches_dense(rng, spec):
    psi = oracles.random_state(rng, 5)
    np.testing.assert_allclose(apply_hamiltonian(spec, psi), hamiltonian(spec).dense() @ psi,
                               atol=1e-12)


@pytest.mark.parametrize("spec", [LRI(4), Schwinger(4), Schwinger(6)])
def test_hamiltonian_is_symmetric(spec):
    H = hamiltonian(spec).dense()
    np.testing.assert_allclose(H, H.T, atol=1e-14)


def test_schwinger_neel_energy_is_mass_only():
    # the bare vacuum has zero electric field on every link
    spec = Schwinger(4)
    expected = 0.5 * spec.m * sum((-1) ** j * -((-1) ** j) for j in range(1, 5))
    assert abs(hamiltonian(spec).expectation(neel_state(4)) - expected) < 1e-12


def test_gauge_expansion_reproduces_squares():
    spec = Schwinger(5, J=0.9)
    K, h, c = spec.gauge_expansion()
    for bits in range(32):
        z = np.array([1 - 2 * ((bits >> a) & 1) for a in range(5)], dtype=float)
        literal = sum(0.5 * spec.J * sum(z[l - 1] + (-1) ** l for l in range(1, j + 1)) ** 2
                      for j in range(1, 5))
        assert abs(z @ K @ z + h @ z + c - literal) < 1e-12


def test_schwinger_rejects_one_site():
    with pytest.raises(ValueError):
        Schwinger(1)


@pytest.mark.parametrize("spec", [LRI(4), Schwinger(4)])
def test_exact_evolve_matches_expm(rng, spec):
    psi = oracles.random_state(rng, 4)
    ref = scipy.linalg.expm(-1j * 0.8 * hamiltonian(spec).dense()) @ psi
    np.testing.assert_allclose(exact_evolve(spec, psi, EvolutionConfig(0.8)), ref, atol=1e-11)


@pytest.mark.parametrize("spec", [LRI(6), Schwinger(6)])
def test_krylov_agrees_with_dense(spec):
    psi0 = spec.initial_state()
    dense = exact_evolve(spec, psi0, EvolutionConfig(2.0, method="dense"))
    kry = exact_evolve(spec, psi0, EvolutionConfig(2.0, method="krylov", krylov_dim=12))
    assert np.abs(dense - kry).max() < 1e-8


def test_tau_zero_returns_copy(rng):
    psi = oracles.random_state(rng, 3)
    out = exact_evolve(LRI(3), psi, EvolutionConfig(0.0))
    np.testing.assert_array_equal(out, psi)
    assert out is not psi


def test_evolution_composes(rng):
    spec, psi = LRI(4), oracles.random_state(rng, 4)
    half = exact_evolve(spec, psi, EvolutionConfig(0.6))
    np.testing.assert_allclose(exact_evolve(spec, half, EvolutionConfig(0.6)),
                               exact_evolve(spec, psi, EvolutionConfig(1.2)), atol=1e-11)


@pytest.mark.parametrize("spec", [LRI(5), Schwinger(6)])
def test_energy_and_norm_conserved(spec):
    psi0 = spec.initial_state()
    H = hamiltonian(spec)
    for tau in (0.5, 2.0, 4.0):
        psi = exact_evolve(spec, psi0, EvolutionConfig(tau))
        assert abs(np.linalg.norm(psi) - 1) < 1e-10
        assert abs(H.expectation(psi) - H.expectation(psi0)) < 1e-8


def test_evolution_config_validation():
    with pytest.raises(ValueError):
        EvolutionConfig(-1.0)
    with pytest.raises(ValueError):
        EvolutionConfig(1.0, method="magic")
    with pytest.raises(ValueError):
        exact_evolve(LRI(3), all_up(4), EvolutionConfig(1.0))


def test_dense_refused_above_limit():
    with pytest.raises(ValueError):
        exact_evolve(LRI(4), all_up(4), EvolutionConfig(1.0, method="dense", dense_max_N=3))


def test_trotter_angles():
    params = trotter_params(LRI(3), 1.0, 4)
    assert params.n == 4 and params.alpha == 3.0
    step = params.steps[0]
    assert step.theta_xx == 0.25
    np.testing.assert_allclose(step.theta_z, 0.5)
    np.testing.assert_allclose(step.theta_x, 0.5)


def test_trotter_converges_monotonically():
    spec = LRI(4)
    psi0 = spec.initial_state()
    target = exact_evolve(spec, psi0, EvolutionConfig(0.5))
    infid = [1 - fidelity_reward(run_circuit(psi0, trotter_params(spec, 0.5, n)), target)
             for n in (4, 8, 16, 32, 64)]
    assert all(a > b for a, b in zip(infid, infid[1:]))
    assert infid[-1] < 1e-3


def test_trotter_refuses_schwinger():
    with pytest.raises(ValueError):
        trotter_params(Schwinger(4), 1.0, 3)


def test_model_from_dict():
    assert model_from_dict({"name": "LRI", "N": 3, "alpha": 1.0}) == LRI(3, alpha=1.0)
    assert model_from_dict({"name": "schwinger", "N": 4}) == Schwinger(4)
    with pytest.raises(ValueError):
        model_from_dict({"name": "heisenberg", "N": 4})
    with pytest.raises(ValueError):
        model_from_dict({"name": "lri", "N": 3, "gamma": 2})


def test_hamiltonian_cache_shares_instances():
    assert hamiltonian(LRI(3)) is hamiltonian(LRI(3))
    assert hamiltonian(LRI(3)) is not hamiltonian(LRI(3, alpha=1.0))
