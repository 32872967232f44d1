import unittest

import numpy as np
from numpy.testing import assert_allclose

from qdesk.core import (DensityMatrix, DimensionError, GateError, HermitianOperator, StateVector,
                        StateValidationError, apply_unitary, circuit_matrix, dense_exponential, embed_operator,
                        expectation_value, gershgorin_bounds, measure_qubit, new_basis_state, partial_trace,
                        pauli_operator, random_density, random_hermitian, random_state, standard_gate,
                        state_metrics, trace_norm)
from qdesk.utils import rng_stream


class TestStates(unittest.TestCase):
    def test_basis_state(self):
        state = new_basis_state(3, 5)
        self.assertEqual(state.n_qubits, 3)
        self.assertEqual(state.amplitudes[5], 1.0)
        self.assertAlmostEqual(state.norm(), 1.0)

    def test_basis_index_out_of_range(self):
        with self.assertRaises(DimensionError):
            new_basis_state(2, 4)

    def test_unnormalized_rejected(self):
        with self.assertRaises(StateValidationError):
            StateVector([1.0, 1.0])
        state = StateVector([1.0, 1.0], normalize=True)
        assert_allclose(state.probabilities(), [0.5, 0.5])

    def test_non_power_of_two(self):
        with self.assertRaises(DimensionError):
            StateVector([1.0, 0.0, 0.0], normalize=True)

    def test_append_register_places_other_high(self):
        low = new_basis_state(1, 1)
        high = new_basis_state(2, 2)
        combined = low.append_register(high)
        self.assertEqual(combined.n_qubits, 3)
        self.assertEqual(int(np.argmax(np.abs(combined.amplitudes))), (2 << 1) | 1)

    def test_density_matrix_validation(self):
        with self.assertRaises(StateValidationError):
            DensityMatrix(np.diag([0.7, 0.7]))
        with self.assertRaises(StateValidationError):
            DensityMatrix(np.diag([1.2, -0.2]))
        rho = DensityMatrix.maximally_mixed(2)
        self.assertAlmostEqual(rho.trace(), 1.0)
        assert_allclose(rho.populations(), [0.25] * 4)


class TestGates(unittest.TestCase):
    def test_unknown_gate(self):
        with self.assertRaises(GateError):
            standard_gate("T")

    def test_missing_parameter(self):
        with self.assertRaises(GateError):
            standard_gate("Rx")
        with self.assertRaises(GateError):
            standard_gate("Rz", float('nan'))

    def test_r_k_needs_positive_integer(self):
        with self.assertRaises(GateError):
            standard_gate("R_k", 0)
        assert_allclose(standard_gate("R_k", 2).matrix, np.diag([1.0, -1j]), atol=1e-15)

    def test_hadamard_on_zero(self):
        state = apply_unitary(new_basis_state(1, 0), standard_gate("H"), [0])
        assert_allclose(state.amplitudes, [1 / np.sqrt(2), 1 / np.sqrt(2)])

    def test_cnot_control_is_gate_bit_one(self):
        # qubit 1 set, CNOT with targets [target=0, control=1]
        state = apply_unitary(new_basis_state(2, 2), standard_gate("CNOT"), [0, 1])
        self.assertAlmostEqual(abs(state.amplitudes[3]), 1.0)

    def test_controlled_gate_matches_cnot(self):
        controlled = circuit_matrix([(standard_gate("X"), [0], [1])], 2)
        plain = circuit_matrix([(standard_gate("CNOT"), [0, 1], [])], 2)
        assert_allclose(controlled, plain)

    def test_control_values(self):
        state = apply_unitary(new_basis_state(2, 0), standard_gate("X"), [0], [1], control_values=[0])
        self.assertAlmostEqual(abs(state.amplitudes[1]), 1.0)

    def test_overlapping_placement(self):
        with self.assertRaises(GateError):
            apply_unitary(new_basis_state(2, 0), standard_gate("X"), [0], [0])
        with self.assertRaises(GateError):
            apply_unitary(new_basis_state(2, 0), standard_gate("X"), [2])

    def test_arity_mismatch(self):
        with self.assertRaises(GateError):
            apply_unitary(new_basis_state(2, 0), standard_gate("CNOT"), [0])

    def test_rotation_matches_exponential(self):
        theta = 0.37
        expected = dense_exponential(pauli_operator("X"), -0.5j * theta)
        assert_allclose(standard_gate("Rx", theta).matrix, expected, atol=1e-12)

    def test_embedded_gate_matches_kron(self):
        Z = standard_gate("Z").matrix
        assert_allclose(embed_operator(Z, [1], 2), np.kron(Z, np.eye(2)))


class TestMeasurement(unittest.TestCase):
    def test_collapse(self):
        plus = apply_unitary(new_basis_state(2, 0), standard_gate("H"), [1])
        outcome, state, probability = measure_qubit(plus, 1, 0.9)
        self.assertEqual(outcome, 1)
        self.assertAlmostEqual(probability, 0.5)
        self.assertAlmostEqual(abs(state.amplitudes[2]), 1.0)

    def test_certain_outcome(self):
        outcome, _, probability = measure_qubit(new_basis_state(1, 1), 0, 0.0)
        self.assertEqual(outcome, 1)
        self.assertAlmostEqual(probability, 1.0)

    def test_bad_sample(self):
        with self.assertRaises(ValueError):
            measure_qubit(new_basis_state(1, 0), 0, 1.0)


class TestOperators(unittest.TestCase):
    def setUp(self):
        self.rng = rng_stream(11, 0)

    def test_pauli_letter_order(self):
        # letters[q] acts on qubit q
        ZI = pauli_operator("ZI")
        assert_allclose(np.diag(ZI.matrix).real, [1, -1, 1, -1])

    def test_not_hermitian(self):
        with self.assertRaises(StateValidationError):
            HermitianOperator([[0, 1], [0, 0]])

    def test_expectation_value(self):
        self.assertAlmostEqual(expectation_value(new_basis_state(1, 1), pauli_operator("Z")), -1.0)
        rho = DensityMatrix.maximally_mixed(1)
        self.assertAlmostEqual(expectation_value(rho, pauli_operator("Z")), 0.0)

    def test_dense_exponential_unitary(self):
        H = random_hermitian(3, self.rng)
        U = dense_exponential(H, -0.8j)
        assert_allclose(U.conj().T @ U, np.eye(8), atol=1e-12)

    def test_gershgorin_encloses_spectrum(self):
        H = random_hermitian(3, self.rng, norm=2.0)
        lower, upper = gershgorin_bounds(H)
        values = H.eigenvalues()
        self.assertLessEqual(lower, values[0] + 1e-12)
        self.assertGreaterEqual(upper, values[-1] - 1e-12)

    def test_random_hermitian_norm(self):
        self.assertAlmostEqual(random_hermitian(2, self.rng, norm=3.0).norm(), 3.0)

    def test_partial_trace_of_product(self):
        a = random_state(1, self.rng)
        b = random_state(2, self.rng)
        reduced = partial_trace(a.append_register(b), [0])
        assert_allclose(reduced.matrix, a.to_density_matrix().matrix, atol=1e-12)
        mixed = partial_trace(a.append_register(b).to_density_matrix(), [1, 2])
        assert_allclose(mixed.matrix, b.to_density_matrix().matrix, atol=1e-12)

    def test_state_metrics(self):
        a = new_basis_state(1, 0)
        b = new_basis_state(1, 1)
        metrics = state_metrics(a, b)
        self.assertAlmostEqual(metrics.fidelity, 0.0)
        self.assertAlmostEqual(metrics.trace_distance, 1.0)
        rho = random_density(2, self.rng)
        self.assertAlmostEqual(state_metrics(rho, rho).fidelity, 1.0, places=8)

    def test_trace_norm(self):
        self.assertAlmostEqual(trace_norm(np.diag([1.0, -2.0])), 3.0)

    def test_dense_guard(self):
        with self.assertRaises(DimensionError):
            circuit_matrix([], 40)


if __name__ == '__main__':
    unittest.main()
