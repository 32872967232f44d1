import unittest

import numpy as np
from numpy.testing import assert_allclose

from qdesk.core import (HermitianOperator, StateVector, apply_matrix_inplace, circuit_matrix, new_basis_state,
                        random_state)
from qdesk.spectral import (DensePowerApplier, PhaseEstimationError, RepeatedPowerApplier, SpectralEncoding,
                            ancilla_budget, dft_matrix, hamiltonian_power_applier, inverse_qft, pea_distribution,
                            phase_estimation, phase_kernel_distribution, project_ground_state, qft,
                            qft_circuit)
from qdesk.utils import rng_stream


def phase_applier(phase: float) -> DensePowerApplier:
    return DensePowerApplier(np.diag([1.0, np.exp(2j * np.pi * phase)]))


class TestQFT(unittest.TestCase):
    def test_matches_dft(self):
        for n in range(1, 6):
            assert_allclose(circuit_matrix(qft_circuit(range(n)), n), dft_matrix(n), atol=1e-12)

    def test_gate_count(self):
        for n in range(1, 8):
            self.assertLessEqual(len(qft_circuit(range(n))), n * (n + 1) // 2 + n)

    def test_inverse(self):
        state = random_state(4, rng_stream(3, 0))
        back = inverse_qft(qft(state, range(4)), range(4))
        assert_allclose(back.amplitudes, state.amplitudes, atol=1e-12)

    def test_sub_register(self):
        # QFT on qubits 1..2 of a three-qubit register leaves qubit 0 alone
        state = random_state(3, rng_stream(3, 1))
        full = np.kron(dft_matrix(2), np.eye(2))
        assert_allclose(qft(state, [1, 2]).amplitudes, full @ state.amplitudes, atol=1e-12)

    def test_duplicate_qubits(self):
        with self.assertRaises(PhaseEstimationError):
            qft_circuit([0, 0])


class TestPhaseEstimation(unittest.TestCase):
    def test_ancilla_budget(self):
        self.assertEqual(ancilla_budget(3, 0.125), 3 + 3)
        self.assertEqual(ancilla_budget(5, 0.0625), 5 + 4)
        with self.assertRaises(ValueError):
            ancilla_budget(3, 0.0)
        with self.assertRaises(ValueError):
            ancilla_budget(0, 0.1)

    def test_exact_phase_is_certain(self):
        m = 5
        distribution = pea_distribution(phase_applier(11 / 32), new_basis_state(1, 1), m)
        self.assertAlmostEqual(distribution[11], 1.0, places=10)

    def test_distribution_matches_kernel(self):
        m = 4
        phase = 0.3141
        distribution = pea_distribution(phase_applier(phase), new_basis_state(1, 1), m)
        assert_allclose(distribution, phase_kernel_distribution(phase, m), atol=1e-12)
        self.assertAlmostEqual(float(np.sum(distribution)), 1.0)

    def test_estimate_leaves_eigenstate(self):
        estimate, register = phase_estimation(phase_applier(0.25), new_basis_state(1, 1), 3, rng_stream(1, 0))
        self.assertEqual(estimate.register_outcome, 2)
        self.assertAlmostEqual(estimate.phase, 0.25)
        self.assertAlmostEqual(abs(register.amplitudes[1]), 1.0)

    def test_repeated_applier_agrees_with_dense(self):
        U = np.diag([1.0, np.exp(2j * np.pi * 0.3)])

        def step(amplitudes, n_qubits, control):
            apply_matrix_inplace(amplitudes, n_qubits, U, [0], [control])
            return amplitudes

        dense = pea_distribution(DensePowerApplier(U), new_basis_state(1, 1), 4)
        repeated = pea_distribution(RepeatedPowerApplier(step), new_basis_state(1, 1), 4)
        assert_allclose(repeated, dense, atol=1e-12)

    def test_non_unitary_callback(self):
        def shrink(amplitudes, n_qubits, control, j):
            return 0.5 * amplitudes

        with self.assertRaises(PhaseEstimationError):
            pea_distribution(shrink, new_basis_state(1, 0), 2)


class TestSpectralEncoding(unittest.TestCase):
    def test_round_trip(self):
        encoding = SpectralEncoding(-2.0, 3.0, 6)
        for energy in (-2.0, 0.5, 3.0):
            self.assertAlmostEqual(encoding.energy_of(encoding.phase_of(energy)), energy)
        self.assertLess(encoding.phase_of(3.0), 1.0)
        self.assertAlmostEqual(encoding.resolution, 5.0 / 63)

    def test_energy_readout(self):
        H = HermitianOperator(np.diag([-1.0, 0.0, 0.5, 2.0]))
        m = 6
        encoding = SpectralEncoding(-1.0, 2.0, m)
        applier, _ = hamiltonian_power_applier(H, m, encoding)
        distribution = pea_distribution(applier, new_basis_state(2, 0), m)
        self.assertAlmostEqual(distribution[0], 1.0, places=10)
        distribution = pea_distribution(applier, new_basis_state(2, 3), m)
        self.assertAlmostEqual(distribution[(1 << m) - 1], 1.0, places=10)

    def test_projection_accepts_ground(self):
        H = HermitianOperator(np.diag([0.0, 2.0, 3.0, 5.0]))
        m = 3
        encoding = SpectralEncoding(0.0, 7.0, m)
        applier, _ = hamiltonian_power_applier(H, m, encoding)
        trial = StateVector([0.8, 0.6, 0.0, 0.0])
        accepted_count = 0
        for index in range(50):
            accepted, state, energy = project_ground_state(applier, trial, m, encoding, 0.0, 0.5,
                                                           rng_stream(9, index))
            if accepted:
                accepted_count += 1
                self.assertAlmostEqual(abs(state.amplitudes[0]), 1.0)
                self.assertAlmostEqual(energy, 0.0)
        self.assertGreater(accepted_count, 0)
        self.assertLess(accepted_count, 50)

    def test_empty_window(self):
        encoding = SpectralEncoding(0.0, 7.0, 3)
        applier = phase_applier(0.0)
        with self.assertRaises(PhaseEstimationError):
            project_ground_state(applier, new_basis_state(1, 0), 3, encoding, 0.5, 0.1, rng_stream(0, 0))


class TestProjectionStatistics(unittest.TestCase):
    """Random 2-qubit H with integer levels; trial weight 0.7 on the ground state"""

    def setUp(self):
        rng = rng_stream(51, 0)
        z = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        self.Q, _ = np.linalg.qr(z)
        H = HermitianOperator((self.Q * np.array([0.0, 2.0, 3.0, 5.0])) @ self.Q.conj().T)
        self.m = 3
        self.encoding = SpectralEncoding(0.0, 7.0, self.m)
        self.applier, _ = hamiltonian_power_applier(H, self.m, self.encoding)
        self.overlap = 0.7
        self.trial = StateVector(np.sqrt(0.7) * self.Q[:, 0] + np.sqrt(0.3) * self.Q[:, 2])

    def _attempt(self, seed: int, index: int) -> bool:
        accepted, _, _ = project_ground_state(self.applier, self.trial, self.m, self.encoding, 0.0, 0.5,
                                              rng_stream(seed, index))
        return accepted

    def test_acceptance_frequency_matches_overlap(self):
        trials = 2000
        frequency = float(np.mean([self._attempt(52, i) for i in range(trials)]))
        sigma = np.sqrt(self.overlap * (1.0 - self.overlap) / trials)
        self.assertLessEqual(abs(frequency - self.overlap), 3.0 * sigma)

    def test_mean_trials_to_acceptance(self):
        counts, index = [], 0
        for _ in range(600):
            attempts = 0
            while True:
                attempts += 1
                index += 1
                if self._attempt(53, index):
                    break
            counts.append(attempts)
        expected = 1.0 / self.overlap
        self.assertLess(abs(float(np.mean(counts)) - expected), 0.1 * expected)


if __name__ == '__main__':
    unittest.main()
