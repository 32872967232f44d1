import unittest

import numpy as np
from numpy.testing import assert_allclose

from qdesk.firstq import (AncillaError, Grid1D, GridError, Particle, ParticleSystem, PotentialSpec, attach_ancillas,
                          coulomb_potential, detach_ancillas, evolve_split_operator, exact_grid_evolution,
                          gaussian_packet, grid_hamiltonian, harmonic_potential, momentum_means, position_means,
                          potential_phase_step, product_state, split_operator_trajectory, trajectory_columns)


def fidelity(a, b) -> float:
    return abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2


class TestGrid(unittest.TestCase):
    def test_coordinates_and_momenta(self):
        grid = Grid1D(3, -4.0, 4.0)
        self.assertEqual(grid.points, 8)
        self.assertAlmostEqual(grid.spacing, 1.0)
        assert_allclose(grid.coordinates(), np.arange(-4.0, 4.0))
        p = grid.momenta()
        self.assertAlmostEqual(p[1], 2 * np.pi / 8)
        self.assertAlmostEqual(p[-1], -2 * np.pi / 8)

    def test_invalid_grid(self):
        with self.assertRaises(GridError):
            Grid1D(0, 0.0, 1.0)
        with self.assertRaises(GridError):
            Grid1D(2, 1.0, 1.0)
        with self.assertRaises(GridError):
            Particle(0.0, 1.0, Grid1D(2, 0.0, 1.0))

    def test_particle_registers(self):
        grid = Grid1D(2, 0.0, 4.0)
        system = ParticleSystem([Particle(1.0, 1.0, grid), Particle(1.0, -1.0, grid)])
        self.assertEqual(system.n_qubits, 4)
        self.assertEqual(system.particle_qubits(1), [2, 3])
        x0, x1 = system.coordinate_arrays()
        # basis index 6 = particle 1 at index 1, particle 0 at index 2
        self.assertEqual((x0[6], x1[6]), (2.0, 1.0))


class TestPotentials(unittest.TestCase):
    def setUp(self):
        self.grid = Grid1D(5, -8.0, 8.0)
        self.system = ParticleSystem([Particle(1.0, 0.0, self.grid)])

    def test_quantization_error(self):
        V = harmonic_potential(self.system, 1.0, m_V=8)
        q = V.quantized()
        self.assertGreaterEqual(q.min(), 0)
        self.assertLessEqual(q.max(), 255)
        step = (V.v_max - V.v_min) / 255
        self.assertLessEqual(float(np.max(np.abs(V.dequantized() - V.values))), step / 2 + 1e-12)

    def test_phase_integers_wrap(self):
        V = PotentialSpec(np.array([0.0, 1.0, 2.0, 3.0]), m_V=4)
        w = V.phase_integers(np.pi)
        self.assertTrue(np.all((w >= 0) & (w < 16)))
        # V dt = pi is half a turn
        self.assertEqual(int(w[1]), 8)

    def test_phase_integers_round_once(self):
        V = harmonic_potential(self.system, 1.0, m_V=16)
        dt = 0.37
        w = V.phase_integers(dt)
        exact = np.mod((V.values - V.v_min) * dt, 2.0 * np.pi)
        gap = np.angle(np.exp(1j * (2.0 * np.pi * w / V.levels - exact)))
        self.assertLessEqual(float(np.max(np.abs(gap))), np.pi / V.levels + 1e-12)

    def test_bad_potential(self):
        with self.assertRaises(GridError):
            PotentialSpec(np.ones(3))
        with self.assertRaises(GridError):
            PotentialSpec(np.array([0.0, np.inf]))

    def test_coulomb_is_symmetric(self):
        grid = Grid1D(2, 0.0, 4.0)
        system = ParticleSystem([Particle(1.0, 1.0, grid), Particle(1.0, 1.0, grid)])
        V = coulomb_potential(system, softening=0.5).values.reshape(4, 4)
        assert_allclose(V, V.T)
        self.assertAlmostEqual(V[0, 0], 2.0)

    def test_oscillator_ground_energy(self):
        grid = Grid1D(6, -10.0, 10.0)
        system = ParticleSystem([Particle(1.0, 0.0, grid)])
        H = grid_hamiltonian(system, harmonic_potential(system, 1.0))
        self.assertAlmostEqual(float(H.eigenvalues()[0]), 0.5, places=6)


class TestEvolution(unittest.TestCase):
    def setUp(self):
        self.grid = Grid1D(6, -10.0, 10.0)
        self.system = ParticleSystem([Particle(1.0, 0.0, self.grid)])
        self.V = harmonic_potential(self.system, 1.0, m_V=12)
        self.psi = gaussian_packet(self.grid, 1.5, 0.5, 1.0 / np.sqrt(2.0))

    def test_packet_moments(self):
        self.assertAlmostEqual(position_means(self.psi, self.system)[0], 1.5, places=6)
        self.assertAlmostEqual(momentum_means(self.psi, self.system)[0], 0.5, places=6)

    def test_split_operator_matches_exact(self):
        split = evolve_split_operator(self.psi, self.system, self.V, 1.0, 64)
        exact = exact_grid_evolution(self.psi, self.system, self.V, 1.0)
        self.assertGreater(fidelity(split, exact), 1.0 - 1e-5)
        self.assertAlmostEqual(split.norm(), 1.0, places=12)

    def test_higher_order_is_more_accurate(self):
        exact = exact_grid_evolution(self.psi, self.system, self.V, 1.0)
        second = evolve_split_operator(self.psi, self.system, self.V, 1.0, 16, order=2)
        fourth = evolve_split_operator(self.psi, self.system, self.V, 1.0, 16, order=4)
        self.assertLess(1.0 - fidelity(fourth, exact), 1.0 - fidelity(second, exact))

    def test_circuit_modes_match_direct(self):
        grid = Grid1D(4, -6.0, 6.0)
        system = ParticleSystem([Particle(1.0, 0.0, grid)])
        V = harmonic_potential(system, 1.0, m_V=12)
        psi = gaussian_packet(grid, 1.0, 0.0, 1.0 / np.sqrt(2.0))
        direct = evolve_split_operator(psi, system, V, 0.2, 4)
        for mode in ("kickback", "rk_ladder"):
            combined = evolve_split_operator(attach_ancillas(psi, V, mode), system, V, 0.2, 4, mode=mode)
            state, restoration = detach_ancillas(combined, V, mode)
            self.assertAlmostEqual(restoration, 1.0, places=10)
            self.assertGreater(fidelity(state, direct), 1.0 - 1e-4, mode)

    def test_full_period_modes_agree(self):
        grid = Grid1D(4, -6.0, 6.0)
        system = ParticleSystem([Particle(1.0, 0.0, grid)])
        V = harmonic_potential(system, 1.0, m_V=16)
        psi = gaussian_packet(grid, 2.0, 0.0, 1.0 / np.sqrt(2.0))
        period = 2.0 * np.pi
        direct = evolve_split_operator(psi, system, V, period, 8)
        for mode in ("kickback", "rk_ladder"):
            combined = evolve_split_operator(attach_ancillas(psi, V, mode), system, V, period, 8, mode=mode)
            state, restoration = detach_ancillas(combined, V, mode)
            self.assertAlmostEqual(restoration, 1.0, places=10)
            self.assertGreaterEqual(fidelity(state, direct), 1.0 - 1e-6, mode)

    def test_circuit_mode_needs_ancillas(self):
        with self.assertRaises(AncillaError):
            potential_phase_step(self.psi, self.V, 0.1, "kickback")
        with self.assertRaises(GridError):
            potential_phase_step(self.psi, self.V, 0.1, "teleport")

    def test_trajectory(self):
        final, rows = split_operator_trajectory(self.psi, self.system, self.V, 1.0, 32, record_every=8)
        self.assertEqual([row['step'] for row in rows], [0, 8, 16, 24, 32])
        self.assertEqual(list(rows[0].keys()), trajectory_columns(self.system))
        energies = [row['energy'] for row in rows]
        self.assertLess(max(energies) - min(energies), 1e-2)
        self.assertAlmostEqual(rows[-1]['norm'], 1.0, places=12)

    def test_energy_conserved_over_period(self):
        psi = gaussian_packet(self.grid, 2.0, 0.0, 1.0 / np.sqrt(2.0))
        period = 2.0 * np.pi

        def relative_drift(slices):
            _, rows = split_operator_trajectory(psi, self.system, self.V, period, slices, order=2)
            e0 = rows[0]['energy']
            return max(abs(row['energy'] - e0) for row in rows) / abs(e0)

        fine = relative_drift(512)
        coarse = relative_drift(256)
        self.assertLess(fine, 1e-4)
        # second order: halving the step quarters the drift
        self.assertGreater(coarse / fine, 3.0)
        self.assertLess(coarse / fine, 5.0)

    def test_two_particle_product(self):
        grid = Grid1D(3, -4.0, 4.0)
        a = gaussian_packet(grid, -1.0, 0.0, 0.8)
        b = gaussian_packet(grid, 1.0, 0.0, 0.8)
        system = ParticleSystem([Particle(1.0, 0.0, grid), Particle(1.0, 0.0, grid)])
        means = position_means(product_state([a, b]), system)
        self.assertAlmostEqual(means[0], position_means(a, ParticleSystem([Particle(1.0, 0.0, grid)]))[0])
        self.assertAlmostEqual(means[1], position_means(b, ParticleSystem([Particle(1.0, 0.0, grid)]))[0])


if __name__ == '__main__':
    unittest.main()
