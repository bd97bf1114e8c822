import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dqs.statevec import (CircuitParams, StepAngles, apply_rx, apply_rz, apply_step, apply_xx,
                          basis_state, fwht, neel_state, overlap, run_circuit)

import oracles

angles = st.floats(-2 * np.pi, 2 * np.pi, allow_nan=False)


def test_basis_state_up_up():
    psi = basis_state(2, "uu")
    assert psi[0] == 1 and np.count_nonzero(psi) == 1


def test_basis_state_single_down():
    np.testing.assert_array_equal(basis_state(1, ["d"]), [0, 1])


def test_neel_n4_sites_1_and_3_up():
    psi = neel_state(4)
    # site j on bit j-1, down = 1: sites 2 and 4 set
    assert psi[0b1010] == 1 and np.linalg.norm(psi) == 1


def test_basis_state_length_mismatch():
    with pytest.raises(ValueError):
        basis_state(3, [0, 1])


def test_rx_zero_is_identity(rng):
    psi = oracles.random_state(rng, 3)
    np.testing.assert_allclose(apply_rx(psi, 2, 0.0), psi, atol=1e-15)


def test_rx_half_pi_flips_with_phase():
    out = apply_rx(basis_state(1, "u"), 1, np.pi / 2)
    np.testing.assert_allclose(out, [0, -1j], atol=1e-15)


def test_rz_on_up_is_phase():
    theta = 0.731
    out = apply_rz(basis_state(1, "u"), 1, theta)
    np.testing.assert_allclose(out, [np.exp(-1j * theta), 0], atol=1e-15)
    assert abs(abs(overlap(out, basis_state(1, "u"))) ** 2 - 1) < 1e-15


@pytest.mark.parametrize("gate,dense", [(apply_rx, oracles.rx_dense), (apply_rz, oracles.rz_dense)])
def test_single_qubit_gates_match_dense(rng, gate, dense):
    for _ in range(10):
        psi = oracles.random_state(rng, 3)
        j, theta = int(rng.integers(1, 4)), rng.uniform(-np.pi, np.pi)
        np.testing.assert_allclose(gate(psi, j, theta), dense(theta, j, 3) @ psi, atol=1e-10)


def test_site_out_of_range():
    with pytest.raises(ValueError):
        apply_rx(basis_state(2, "uu"), 3, 0.1)
    with pytest.raises(ValueError):
        apply_rz(basis_state(2, "uu"), 0, 0.1)


def test_xx_two_sites_analytic():
    theta = 0.4
    for alpha in (0.0, 1.0, 3.0):
        out = apply_xx(basis_state(2, "uu"), theta, alpha)
        expected = np.array([np.cos(theta), 0, 0, -1j * np.sin(theta)])
        np.testing.assert_allclose(out, expected, atol=1e-14)


def test_xx_matches_dense_n4(rng):
    for _ in range(5):
        psi = oracles.random_state(rng, 4)
        theta = rng.uniform(-np.pi, np.pi)
        np.testing.assert_allclose(apply_xx(psi, theta, 3.0),
                                   oracles.xx_dense(theta, 4, 3.0) @ psi, atol=1e-9)


def test_xx_needs_two_qubits():
    with pytest.raises(ValueError):
        apply_xx(basis_state(1, "u"), 0.1, 1.0)


@settings(max_examples=40, deadline=None)
@given(angles, angles, st.sampled_from([0.0, 1.0, 3.0]))
def test_xx_additive_in_angle(t1, t2, alpha):
    psi = oracles.random_state(np.random.default_rng(7), 4)
    np.testing.assert_allclose(apply_xx(apply_xx(psi, t1, alpha), t2, alpha),
                               apply_xx(psi, t1 + t2, alpha), atol=1e-10)


def test_fwht_is_unitary_involution(rng):
    psi = oracles.random_state(rng, 5)
    np.testing.assert_allclose(fwht(fwht(psi)), psi, atol=1e-13)
    assert abs(np.linalg.norm(fwht(psi)) - 1) < 1e-13


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), angles, st.sampled_from([0.5, 1.0, 3.0]), st.integers(0, 2 ** 32 - 1))
def test_gates_are_linear(j, theta, alpha, seed):
    rng = np.random.default_rng(seed)
    a, b = oracles.random_state(rng, 4), oracles.random_state(rng, 4)
    c1, c2 = rng.normal(size=2) + 1j * rng.normal(size=2)
    for gate in (lambda s: apply_rx(s, j, theta), lambda s: apply_rz(s, j, theta),
                 lambda s: apply_xx(s, theta, alpha)):
        np.testing.assert_allclose(gate(c1 * a + c2 * b), c1 * gate(a) + c2 * gate(b), atol=1e-12)


def test_gates_do_not_modify_input(rng):
    psi = oracles.random_state(rng, 3)
    keep = psi.copy()
    apply_rx(psi, 1, 0.3)
    apply_rz(psi, 2, 0.3)
    apply_xx(psi, 0.3, 1.0)
    np.testing.assert_array_equal(psi, keep)


def _random_step(rng, N, alpha=3.0):
    return StepAngles(rng.uniform(-1, 1), rng.uniform(-1, 1, N), rng.uniform(-1, 1, N), alpha)


def test_step_zero_is_identity(rng):
    psi = oracles.random_state(rng, 3)
    np.testing.assert_allclose(apply_step(psi, StepAngles.zeros(3)), psi, atol=1e-14)


def test_step_single_qubit_has_no_entangler():
    step = StepAngles(0.7, [0.0], [np.pi / 2])
    np.testing.assert_allclose(apply_step(basis_state(1, "u"), step), [0, -1j], atol=1e-15)


def test_step_matches_composed_dense(rng):
    for _ in range(5):
        step = _random_step(rng, 3)
        psi = oracles.random_state(rng, 3)
        U = oracles.step_dense(step.theta_xx, step.theta_z, step.theta_x, step.alpha)
        np.testing.assert_allclose(apply_step(psi, step), U @ psi, atol=1e-10)


def test_step_dimension_mismatch(rng):
    with pytest.raises(ValueError):
        apply_step(oracles.random_state(rng, 3), StepAngles.zeros(4))


def test_run_circuit_zero_angles(rng):
    psi = oracles.random_state(rng, 4)
    params = CircuitParams([StepAngles.zeros(4) for _ in range(3)])
    np.testing.assert_allclose(run_circuit(psi, params), psi, atol=1e-14)


def test_run_circuit_single_step_equals_apply_step(rng):
    step = _random_step(rng, 4)
    psi = oracles.random_state(rng, 4)
    np.testing.assert_allclose(run_circuit(psi, CircuitParams([step])), apply_step(psi, step),
                               atol=1e-15)


def test_run_circuit_leaves_input_alone(rng):
    psi = oracles.random_state(rng, 3)
    keep = psi.copy()
    run_circuit(psi, CircuitParams([_random_step(rng, 3)]))
    np.testing.assert_array_equal(psi, keep)


def test_circuit_params_roundtrip(rng):
    params = CircuitParams([_random_step(rng, 3, alpha=1.0) for _ in range(2)])
    back = CircuitParams.from_dict(params.to_dict())
    assert back.n == 2 and back.N == 3 and back.alpha == 1.0
    for a, b in zip(params.steps, back.steps):
        assert a.theta_xx == b.theta_xx
        np.testing.assert_array_equal(a.theta_z, b.theta_z)


def test_circuit_params_rejects_mixed_steps():
    with pytest.raises(ValueError):
        CircuitParams([StepAngles.zeros(3), StepAngles.zeros(4)])
    with pytest.raises(ValueError):
        CircuitParams([])


def test_overlap_properties(rng):
    a, b = oracles.random_state(rng, 3), oracles.random_state(rng, 3)
    assert abs(overlap(a, a) - 1) < 1e-14
    assert overlap(basis_state(2, "uu"), basis_state(2, "ud")) == 0
    assert abs(overlap(a, b) - np.conj(overlap(b, a))) < 1e-15
    with pytest.raises(ValueError):
        overlap(a, oracles.random_state(rng, 2))
