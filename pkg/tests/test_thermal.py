import unittest

import numpy as np
from numpy.testing import assert_allclose

from qdesk.core import DensityMatrix, DimensionError, HermitianOperator, pauli_operator, random_hermitian
from qdesk.thermal import (ThermalContext, ThermalError, chain_update, dephase, exact_thermal, perturbative_update,
                           product_thermal, stochastic_dephase, thermal_distance, verify_trace_norm_bound)
from qdesk.utils import rng_stream


def two_site(H1: HermitianOperator, H2: HermitianOperator, h: HermitianOperator) -> HermitianOperator:
    return HermitianOperator(np.kron(np.eye(2), H1.matrix) + np.kron(H2.matrix, np.eye(2)) + h.matrix)


class TestExactThermal(unittest.TestCase):
    def test_infinite_temperature(self):
        ctx = exact_thermal(pauli_operator("ZX"), 0.0)
        assert_allclose(ctx.rho.matrix, np.eye(4) / 4, atol=1e-14)

    def test_boltzmann_populations(self):
        H = HermitianOperator(np.diag([0.0, 1.0, 2.0, 5.0]))
        populations = exact_thermal(H, 0.7).rho.populations()
        weights = np.exp(-0.7 * np.array([0.0, 1.0, 2.0, 5.0]))
        assert_allclose(populations, weights / weights.sum(), atol=1e-14)

    def test_low_temperature_is_ground_state(self):
        H = pauli_operator("X", -1.0)
        rho = exact_thermal(H, 60.0).rho
        ground = H.ground_state().to_density_matrix()
        assert_allclose(rho.matrix, ground.matrix, atol=1e-12)

    def test_large_energies_do_not_overflow(self):
        rho = exact_thermal(HermitianOperator(np.diag([1000.0, 1001.0])), 50.0).rho
        self.assertTrue(np.all(np.isfinite(rho.matrix)))
        self.assertAlmostEqual(rho.trace(), 1.0)

    def test_negative_beta(self):
        with self.assertRaises(ThermalError):
            exact_thermal(pauli_operator("Z"), -1.0)

    def test_context_dimension(self):
        with self.assertRaises(DimensionError):
            ThermalContext(pauli_operator("ZZ"), 1.0, DensityMatrix.maximally_mixed(1))

    def test_product_of_independent_subsystems(self):
        H1, H2 = pauli_operator("X", 0.4), pauli_operator("Z", -0.9)
        rho = product_thermal([exact_thermal(H1, 1.3), exact_thermal(H2, 1.3)])
        joint = two_site(H1, H2, HermitianOperator(np.zeros((4, 4))))
        self.assertLess(thermal_distance(rho, joint, 1.3), 1e-12)


class TestDephasing(unittest.TestCase):
    def setUp(self):
        plus = np.full((2, 2), 0.5)
        self.rho = DensityMatrix(plus)

    def test_dephase_removes_coherence(self):
        out = dephase(self.rho, pauli_operator("Z"))
        assert_allclose(out.matrix, np.diag([0.5, 0.5]), atol=1e-14)

    def test_dephase_keeps_degenerate_block(self):
        out = dephase(self.rho, HermitianOperator(np.eye(2)))
        assert_allclose(out.matrix, self.rho.matrix, atol=1e-14)

    def test_stochastic_dephasing(self):
        out = stochastic_dephase(self.rho, pauli_operator("Z"), 100.0, rng_stream(6, 0))
        self.assertAlmostEqual(out.trace(), 1.0)
        assert_allclose(out.populations(), [0.5, 0.5], atol=1e-12)
        self.assertLess(abs(out.matrix[0, 1]), 0.25)

    def test_stochastic_arguments(self):
        with self.assertRaises(ThermalError):
            stochastic_dephase(self.rho, pauli_operator("Z"), 0.0, rng_stream(6, 0))


class TestPerturbativeUpdate(unittest.TestCase):
    def test_step_size_precondition(self):
        ctx = exact_thermal(pauli_operator("Z"), 2.0)
        with self.assertRaises(ThermalError):
            perturbative_update(ctx, pauli_operator("X"), 0.5)

    def test_small_step_tracks_thermal_state(self):
        beta, epsilon = 1.0, 0.01
        H = HermitianOperator(np.diag([0.0, 0.5, 1.0, 2.0]))
        h = HermitianOperator(np.diag([1.0, -1.0, 0.5, 0.0]))
        outcome = perturbative_update(exact_thermal(H, beta), h, epsilon)
        self.assertLess(thermal_distance(outcome.rho_next, outcome.context.H, beta), 1e-4)
        self.assertAlmostEqual(outcome.exact_success, outcome.first_order_success, delta=1e-3)

    def test_stochastic_mode_needs_stream(self):
        ctx = exact_thermal(pauli_operator("Z"), 1.0)
        with self.assertRaises(ThermalError):
            perturbative_update(ctx, pauli_operator("X"), 0.1, stochastic=True)
        outcome = perturbative_update(ctx, pauli_operator("X"), 0.1, stochastic=True, mean_time=50.0,
                                      rng=rng_stream(6, 1))
        self.assertAlmostEqual(outcome.rho_next.trace(), 1.0)


class TestChain(unittest.TestCase):
    def test_commuting_chain_is_accurate(self):
        H1, H2, h = pauli_operator("Z"), pauli_operator("Z", 0.5), pauli_operator("ZZ", 0.5)
        result = chain_update(H1, H2, h, 1.0, 0.05)
        self.assertEqual(len(result.steps), 20)
        self.assertAlmostEqual(result.steps[-1]['coupling'], 1.0)
        self.assertLess(thermal_distance(result.rho, two_site(H1, H2, h), 1.0), 1e-3)
        self.assertAlmostEqual(result.cumulative_success,
                               float(np.prod([row['exact_success'] for row in result.steps])))

    def test_distance_shrinks_with_step(self):
        H1, H2, h = pauli_operator("X", 0.8), pauli_operator("X", -0.6), pauli_operator("ZZ", 0.5)
        joint = two_site(H1, H2, h)
        coarse = thermal_distance(chain_update(H1, H2, h, 1.0, 0.1).rho, joint, 1.0)
        fine = thermal_distance(chain_update(H1, H2, h, 1.0, 0.025).rho, joint, 1.0)
        self.assertLess(fine, coarse)
        self.assertLess(coarse, 0.1)

    def test_last_increment_completes_coupling(self):
        result = chain_update(pauli_operator("Z"), pauli_operator("Z"), pauli_operator("ZZ", 0.2), 1.0, 0.3)
        self.assertEqual(len(result.steps), 4)
        self.assertAlmostEqual(result.steps[-1]['coupling'], 1.0)

    def test_monte_carlo_restarts(self):
        result = chain_update(pauli_operator("Z"), pauli_operator("Z"), pauli_operator("ZZ", 0.5), 1.0, 0.25,
                              monte_carlo=True, rng=rng_stream(12, 0))
        self.assertGreaterEqual(result.total_steps, len(result.steps))
        self.assertGreaterEqual(result.restarts, 0)

    def test_overlapping_supports(self):
        with self.assertRaises(ThermalError):
            chain_update(pauli_operator("Z"), pauli_operator("Z"), pauli_operator("ZZ"), 1.0, 0.5,
                         supports=([0], [0]))

    def test_invalid_fraction(self):
        with self.assertRaises(ThermalError):
            chain_update(pauli_operator("Z"), pauli_operator("Z"), pauli_operator("ZZ"), 1.0, 0.0)


class TestTraceNormBound(unittest.TestCase):
    def test_random_draws_respect_bound(self):
        for index in range(5):
            rng = rng_stream(21, index)
            H = random_hermitian(2, rng)
            h = random_hermitian(2, rng)
            check = verify_trace_norm_bound(H, h, 0.1, 2.0)
            self.assertTrue(check.holds)
            self.assertLessEqual(check.lhs, check.rhs + 1e-10)
            self.assertLessEqual(check.dyson_first_order_lhs, check.rhs + 1e-10)

    def test_zero_perturbation(self):
        H = pauli_operator("XZ")
        check = verify_trace_norm_bound(H, HermitianOperator(np.zeros((4, 4))), 0.1, 1.0)
        self.assertAlmostEqual(check.lhs, 0.0)
        self.assertAlmostEqual(check.rhs, 0.0)


if __name__ == '__main__':
    unittest.main()
