import unittest

import numpy as np
from numpy.testing import assert_allclose

from qdesk.core import DensityMatrix, dense_exponential, new_basis_state, pauli_operator
from qdesk.openquantum import (SIGMA_MINUS, SIGMA_Z, ChannelMatrix, LindbladError, LindbladModel, build_lindbladian,
                               decay_model, dephasing_model, exact_channel, lindblad_trajectory, propagate_exact,
                               split_model, splitting_convergence, trajectory_columns, trotterized_channel,
                               unvectorize, vectorize)
from qdesk.utils import loglog_slope, rng_stream


def plus_state() -> DensityMatrix:
    return DensityMatrix(np.full((2, 2), 0.5))


class TestVectorization(unittest.TestCase):
    def test_column_stacking(self):
        rng = rng_stream(50, 0)
        A, X, B = (rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)) for _ in range(3))
        assert_allclose(vectorize(A @ X @ B), np.kron(B.T, A) @ vectorize(X), atol=1e-12)
        assert_allclose(unvectorize(vectorize(X), 3), X)


class TestModel(unittest.TestCase):
    def test_operator_must_be_traceless(self):
        with self.assertRaises(LindbladError):
            LindbladModel(np.zeros((2, 2)), [[1.0]], [np.eye(2)])

    def test_rates_must_be_psd(self):
        with self.assertRaises(LindbladError):
            LindbladModel(np.zeros((2, 2)), [[-1.0]], [SIGMA_MINUS])
        with self.assertRaises(LindbladError):
            LindbladModel(np.zeros((2, 2)), [[1.0, 1.0j], [1.0j, 1.0]], [SIGMA_MINUS, SIGMA_Z])

    def test_shapes(self):
        with self.assertRaises(LindbladError):
            LindbladModel(np.zeros((2, 2)), [[1.0, 0.0], [0.0, 1.0]], [SIGMA_MINUS])
        with self.assertRaises(LindbladError):
            LindbladModel(np.zeros((2, 2)), [[1.0]], [np.zeros((4, 4))])

    def test_closed_model(self):
        self.assertTrue(LindbladModel(pauli_operator("X")).is_closed)
        self.assertFalse(decay_model(0.1).is_closed)

    def test_split_preserves_generator(self):
        model = decay_model(0.3, pauli_operator("X").matrix)
        coherent, dissipative = split_model(model)
        assert_allclose(build_lindbladian(coherent) + build_lindbladian(dissipative), build_lindbladian(model),
                        atol=1e-14)


class TestExactPropagation(unittest.TestCase):
    def test_amplitude_damping(self):
        gamma, t = 0.4, 1.5
        rho = propagate_exact(decay_model(gamma), new_basis_state(1, 1).to_density_matrix(), t)
        self.assertAlmostEqual(rho.populations()[1], np.exp(-2.0 * gamma * t), places=10)
        self.assertAlmostEqual(rho.trace(), 1.0, places=12)

    def test_decay_reaches_ground(self):
        rho = propagate_exact(decay_model(1.0), plus_state(), 20.0)
        assert_allclose(rho.matrix, np.diag([1.0, 0.0]), atol=1e-8)

    def test_dephasing(self):
        rate, t = 0.25, 2.0
        rho = propagate_exact(dephasing_model(rate), plus_state(), t)
        self.assertAlmostEqual(abs(rho.matrix[0, 1]), 0.5 * np.exp(-2.0 * rate * t), places=10)
        assert_allclose(rho.populations(), [0.5, 0.5], atol=1e-12)

    def test_closed_evolution_is_unitary(self):
        H = pauli_operator("X", 0.7)
        rho0 = new_basis_state(1, 0).to_density_matrix()
        U = dense_exponential(H, -1.2j)
        expected = U @ rho0.matrix @ U.conj().T
        assert_allclose(propagate_exact(LindbladModel(H), rho0, 1.2).matrix, expected, atol=1e-12)

    def test_channel_is_physical(self):
        model = LindbladModel(pauli_operator("X", 0.5), np.diag([0.3, 0.1]), [SIGMA_MINUS, SIGMA_Z / np.sqrt(2.0)])
        checks = exact_channel(model, 0.8).checks()
        self.assertTrue(checks['trace_preserving'])
        self.assertTrue(checks['completely_positive'])

    def test_zero_time(self):
        rho = plus_state()
        assert_allclose(propagate_exact(decay_model(1.0), rho, 0.0).matrix, rho.matrix)

    def test_dimension_checks(self):
        with self.assertRaises(LindbladError):
            propagate_exact(decay_model(1.0), DensityMatrix.maximally_mixed(2), 1.0)
        with self.assertRaises(LindbladError):
            exact_channel(LindbladModel(np.zeros((64, 64))), 1.0)

    def test_channel_shape(self):
        with self.assertRaises(LindbladError):
            ChannelMatrix(np.eye(3))
        with self.assertRaises(LindbladError):
            ChannelMatrix.identity(2).then(ChannelMatrix.identity(3))


class TestSplitting(unittest.TestCase):
    def setUp(self):
        self.model = decay_model(0.5, pauli_operator("X").matrix)

    def test_commuting_parts_are_exact(self):
        model = dephasing_model(0.3, pauli_operator("Z").matrix)
        channel = trotterized_channel(split_model(model), 0.25, 4)
        self.assertLess(channel.distance(exact_channel(model, 1.0)), 1e-12)

    def test_first_order_convergence(self):
        steps = [16, 32, 64]
        rows = splitting_convergence(self.model, 1.0, steps)
        slope = loglog_slope([row['dt'] for row in rows], [row['distance'] for row in rows])
        self.assertTrue(0.8 <= slope <= 1.2, f"slope {slope}")
        for row in rows:
            self.assertLess(row['trace_deviation'], 1e-10)
            self.assertGreater(row['min_choi_eigenvalue'], -1e-8)

    def test_strang_convergence(self):
        steps = [16, 32, 64]
        rows = splitting_convergence(self.model, 1.0, steps, strang=True)
        slope = loglog_slope([row['dt'] for row in rows], [row['distance'] for row in rows])
        self.assertTrue(1.8 <= slope <= 2.2, f"slope {slope}")

    def test_invalid_split(self):
        with self.assertRaises(LindbladError):
            trotterized_channel([], 0.1, 1)
        with self.assertRaises(LindbladError):
            trotterized_channel(split_model(self.model), 0.0, 1)
        with self.assertRaises(LindbladError):
            trotterized_channel([self.model, LindbladModel(np.zeros((4, 4)))], 0.1, 1)


class TestTrajectory(unittest.TestCase):
    def test_columns_and_trace(self):
        times = [0.0, 0.5, 1.0]
        rows = lindblad_trajectory(decay_model(0.2), plus_state(), times)
        self.assertEqual(list(rows[0].keys()), ['time', 'trace', 'population_0', 'coherence_0_1', 'population_1'])
        self.assertEqual(set(trajectory_columns(2)), set(rows[0].keys()))
        for row in rows:
            self.assertAlmostEqual(row['trace'], 1.0, places=12)
        self.assertLess(rows[-1]['population_1'], rows[0]['population_1'])


if __name__ == '__main__':
    unittest.main()
