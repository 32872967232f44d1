import unittest

import numpy as np
from numpy.testing import assert_allclose

from qdesk.core import dense_exponential, pauli_operator, random_state
from qdesk.trotter import (HamiltonianTerm, TrotterError, build_plan, execute_plan, exponential_count, plan_error,
                           plan_unitary, random_two_local_terms, select_order, suzuki_z, total_hamiltonian)
from qdesk.utils import loglog_slope, rng_stream


class TestPlans(unittest.TestCase):
    def test_first_order_sequence(self):
        plan = build_plan(range(3), 1.0, 1, 2)
        self.assertEqual(plan.term_sequence(), [0, 1, 2, 0, 1, 2])
        assert_allclose(plan.durations_by_term(), [1.0, 1.0, 1.0])

    def test_second_order_merges_slices(self):
        plan = build_plan(range(3), 1.0, 2, 2)
        self.assertEqual(plan.exponential_count, 9)
        self.assertEqual(plan.term_sequence(), [0, 1, 2, 1, 0, 1, 2, 1, 0])
        assert_allclose(plan.durations_by_term(), [1.0, 1.0, 1.0])

    def test_exponential_counts(self):
        for m in range(1, 6):
            for k in range(1, 4):
                for slices in (1, 3):
                    plan = build_plan(range(m), 0.7, 2 * k, slices)
                    self.assertEqual(plan.exponential_count, exponential_count(m, k, slices))

    def test_suzuki_durations_sum_to_time(self):
        plan = build_plan(range(4), 2.5, 6, 3)
        assert_allclose(plan.durations_by_term(), [2.5] * 4, atol=1e-12)

    def test_suzuki_coefficient(self):
        self.assertAlmostEqual(suzuki_z(2), 1.0 / (4.0 - 4.0 ** (1.0 / 3.0)))
        with self.assertRaises(TrotterError):
            suzuki_z(1)

    def test_invalid_plans(self):
        with self.assertRaises(TrotterError):
            build_plan(range(2), 1.0, 3, 1)
        with self.assertRaises(TrotterError):
            build_plan(range(2), 1.0, 2, 0)
        with self.assertRaises(TrotterError):
            build_plan([], 1.0, 2, 1)

    def test_bad_term_support(self):
        with self.assertRaises(TrotterError):
            HamiltonianTerm([0, 0], pauli_operator("ZZ"))
        with self.assertRaises(TrotterError):
            HamiltonianTerm([0], pauli_operator("ZZ"))


class TestExecution(unittest.TestCase):
    def setUp(self):
        self.terms = random_two_local_terms(3, rng_stream(5, 0))

    def test_single_term_is_exact(self):
        term = [HamiltonianTerm([0, 1], pauli_operator("XY"))]
        plan = build_plan(term, 0.9, 2, 1)
        self.assertLess(plan_error(term, 0.9, plan), 1e-12)

    def test_commuting_terms_are_exact(self):
        terms = [HamiltonianTerm([0, 1], pauli_operator("ZZ")), HamiltonianTerm([1, 2], pauli_operator("ZZ", 0.5))]
        plan = build_plan(terms, 1.3, 1, 1)
        self.assertLess(plan_error(terms, 1.3, plan), 1e-12)

    def test_execute_matches_unitary(self):
        plan = build_plan(self.terms, 0.5, 2, 3)
        state = random_state(3, rng_stream(5, 1))
        expected = plan_unitary(self.terms, plan) @ state.amplitudes
        assert_allclose(execute_plan(state, plan, self.terms).amplitudes, expected, atol=1e-12)

    def test_symmetric_formula_is_time_reversible(self):
        forward = plan_unitary(self.terms, build_plan(self.terms, 0.4, 2, 1))
        backward = plan_unitary(self.terms, build_plan(self.terms, -0.4, 2, 1))
        assert_allclose(backward @ forward, np.eye(8), atol=1e-12)

    def test_converges_to_exact(self):
        plan = build_plan(self.terms, 1.0, 4, 64)
        exact = dense_exponential(total_hamiltonian(self.terms), -1j)
        assert_allclose(plan_unitary(self.terms, plan), exact, atol=1e-8)

    def test_error_order(self):
        slices = [8, 16, 32]
        for order, (low, high) in ((1, (0.8, 1.2)), (2, (1.8, 2.2))):
            errors = [plan_error(self.terms, 1.0, build_plan(self.terms, 1.0, order, n)) for n in slices]
            slope = loglog_slope([1.0 / n for n in slices], errors)
            self.assertTrue(low <= slope <= high, f"order {order} slope {slope}")

    def test_select_order_meets_target(self):
        selection = select_order(self.terms, 1.0, 1e-4)
        self.assertLessEqual(selection.error, 1e-4)
        self.assertEqual(selection.order, 2 * selection.k)
        self.assertEqual(selection.exponential_budget, exponential_count(len(self.terms), selection.k, selection.slices))

    def test_random_terms_need_two_qubits(self):
        with self.assertRaises(TrotterError):
            random_two_local_terms(1, rng_stream(0, 0))


if __name__ == '__main__':
    unittest.main()
