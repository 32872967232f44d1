"""
First-quantized grid dynamics of a few particles

Each particle owns m consecutive qubits (particle 0 on the lowest qubits) that
encode its position on a periodic grid. Time steps alternate a diagonal
potential phase with a kinetic phase applied in the momentum basis reached by
the QFT. The potential phase can be applied directly, by phase kickback
against an ancilla register in a Fourier eigenstate, or by writing the phase
into a zeroed ancilla register, applying R_k gates and uncomputing.
"""
import logging
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .core import (HermitianOperator, SimulationError, StateVector, apply_matrix_inplace, check_dense_size,
                   dense_exponential, embed_operator, expectation_value, new_basis_state, standard_gate)
from .spectral import dft_matrix, inverse_qft_circuit, qft, qft_circuit
from .trotter import build_plan

logger = logging.getLogger(__name__)

DEFAULT_POTENTIAL_BITS = 16
MODES = ("direct", "kickback", "rk_ladder")


class GridError(SimulationError, ValueError):
    """Custom exception for invalid grids, particles or potentials"""
    pass


class AncillaError(SimulationError, ValueError):
    """Raised when a circuit-mode step is missing its ancilla register"""
    pass


class Grid1D:
    """Periodic grid of 2^m points x_j = x_min + j dx on [x_min, x_max)"""

    def __init__(self, m_qubits: int, x_min: float, x_max: float):
        if m_qubits < 1:
            raise GridError(f"Grid needs at least one qubit, got {m_qubits}")
        if not x_max > x_min:
            raise GridError(f"Grid bounds must satisfy x_max > x_min, got [{x_min}, {x_max}]")
        self.m_qubits = m_qubits
        self.x_min = float(x_min)
        self.x_max = float(x_max)

    @property
    def points(self) -> int:
        return 1 << self.m_qubits

    @property
    def spacing(self) -> float:
        return (self.x_max - self.x_min) / self.points

    def coordinates(self) -> np.ndarray:
        return self.x_min + self.spacing * np.arange(self.points)

    def momenta(self) -> np.ndarray:
        """Signed momentum of each Fourier index: 2 pi (k - N[k >= N/2]) / (N dx)"""
        k = np.arange(self.points)
        signed = k - self.points * (k >= self.points // 2)
        return 2.0 * np.pi * signed / (self.points * self.spacing)

    def __repr__(self):
        return f"Grid1D(m={self.m_qubits}, [{self.x_min}, {self.x_max}))"


class Particle:
    def __init__(self, mass: float, charge: float, grid: Grid1D):
        if mass <= 0:
            raise GridError(f"Particle mass must be positive, got {mass}")
        self.mass = float(mass)
        self.charge = float(charge)
        self.grid = grid


class ParticleSystem:
    """Particles on their own grids; particle i occupies the qubits after particle i-1"""

    def __init__(self, particles: Sequence[Particle]):
        if len(particles) == 0:
            raise GridError("A particle system needs at least one particle")
        self.particles = list(particles)
        self.offsets = []
        offset = 0
        for particle in self.particles:
            self.offsets.append(offset)
            offset += particle.grid.m_qubits
        self.n_qubits = offset

    @property
    def count(self) -> int:
        return len(self.particles)

    def particle_qubits(self, i: int) -> List[int]:
        start = self.offsets[i]
        return list(range(start, start + self.particles[i].grid.m_qubits))

    def grid_indices(self) -> List[np.ndarray]:
        """Per particle, its grid index at every basis index of the register"""
        basis = np.arange(1 << self.n_qubits)
        return [(basis >> self.offsets[i]) & (p.grid.points - 1) for i, p in enumerate(self.particles)]

    def coordinate_arrays(self) -> Tuple[np.ndarray, ...]:
        return tuple(p.grid.coordinates()[idx] for p, idx in zip(self.particles, self.grid_indices()))

    def momentum_arrays(self) -> Tuple[np.ndarray, ...]:
        return tuple(p.grid.momenta()[idx] for p, idx in zip(self.particles, self.grid_indices()))


class PotentialSpec:
    """
    Real diagonal energy over a register, plus its m_V-bit quantization

    Quantized values are integers in [0, 2^m_V - 1] from a linear rescale of
    [V_min, V_max].
    """

    def __init__(self, values, m_V: int = DEFAULT_POTENTIAL_BITS, label: str = "V"):
        values = np.asarray(values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(values)):
            raise GridError(f"Potential {label} has non-finite values")
        n = values.size.bit_length() - 1
        if (1 << n) != values.size:
            raise GridError(f"Potential {label} has {values.size} values, not a power of two")
        if m_V < 1:
            raise GridError(f"Quantization needs at least one bit, got {m_V}")
        self.values = values
        self.n_qubits = n
        self.m_V = m_V
        self.label = label
        self.v_min = float(values.min())
        self.v_max = float(values.max())

    @classmethod
    def from_callback(cls, system: ParticleSystem, fn: Callable[..., np.ndarray],
                      m_V: int = DEFAULT_POTENTIAL_BITS, label: str = "V") -> "PotentialSpec":
        """fn receives one coordinate array per particle and returns energies elementwise"""
        coords = system.coordinate_arrays()
        values = np.broadcast_to(np.asarray(fn(*coords), dtype=float), coords[0].shape)
        return cls(values, m_V=m_V, label=label)

    @property
    def levels(self) -> int:
        return 1 << self.m_V

    def quantized(self) -> np.ndarray:
        span = self.v_max - self.v_min
        if span == 0.0:
            return np.zeros(self.values.size, dtype=np.int64)
        scaled = np.rint((self.values - self.v_min) / span * (self.levels - 1))
        return np.clip(scaled, 0, self.levels - 1).astype(np.int64)

    def dequantized(self) -> np.ndarray:
        span = self.v_max - self.v_min
        return self.v_min + self.quantized() * (span / (self.levels - 1))

    def phase_integers(self, dt: float) -> np.ndarray:
        """
        w(x) with 2 pi w / 2^m_V = (V(x) - V_min) dt modulo 2 pi

        The step-scaled potential is rounded once onto the m_V-bit phase grid,
        so each step is off by at most pi / 2^m_V per amplitude.
        """
        turns = (self.values - self.v_min) * dt / (2.0 * np.pi)
        return np.mod(np.rint(turns * self.levels), self.levels).astype(np.int64)


def coulomb_potential(system: ParticleSystem, softening: Optional[float] = None,
                      m_V: int = DEFAULT_POTENTIAL_BITS) -> PotentialSpec:
    """
    Softened pairwise Coulomb energy sum_{i<j} q_i q_j / sqrt((x_i - x_j)^2 + a^2)

    Args:
        system: Particles
        softening: a > 0 (defaults to the first particle's grid spacing)
        m_V: Quantization bits
    """
    a = system.particles[0].grid.spacing if softening is None else float(softening)
    if a <= 0:
        raise GridError(f"Softening must be positive, got {a}")
    coords = system.coordinate_arrays()
    values = np.zeros(1 << system.n_qubits)
    for i in range(system.count):
        for j in range(i + 1, system.count):
            qq = system.particles[i].charge * system.particles[j].charge
            values += qq / np.sqrt((coords[i] - coords[j]) ** 2 + a ** 2)
    return PotentialSpec(values, m_V=m_V, label="coulomb")


def harmonic_potential(system: ParticleSystem, omega: float, center: float = 0.0,
                       m_V: int = DEFAULT_POTENTIAL_BITS) -> PotentialSpec:
    """sum_i M_i omega^2 (x_i - center)^2 / 2"""
    coords = system.coordinate_arrays()
    values = np.zeros(1 << system.n_qubits)
    for particle, x in zip(system.particles, coords):
        values += 0.5 * particle.mass * omega ** 2 * (x - center) ** 2
    return PotentialSpec(values, m_V=m_V, label="harmonic")


def kinetic_spec(system: ParticleSystem, m_V: int = DEFAULT_POTENTIAL_BITS) -> PotentialSpec:
    """sum_i p_i^2 / 2 M_i over the momentum-basis register"""
    values = np.zeros(1 << system.n_qubits)
    for particle, p in zip(system.particles, system.momentum_arrays()):
        values += p ** 2 / (2.0 * particle.mass)
    return PotentialSpec(values, m_V=m_V, label="kinetic")


def gaussian_packet(grid: Grid1D, x0: float, p0: float, sigma: float) -> StateVector:
    """Normalized exp(-(x - x0)^2 / 4 sigma^2 + i p0 x) sampled on the grid"""
    if sigma <= 0:
        raise GridError(f"Packet width must be positive, got {sigma}")
    x = grid.coordinates()
    return StateVector(np.exp(-((x - x0) ** 2) / (4.0 * sigma ** 2) + 1j * p0 * x), normalize=True)


def product_state(packets: Sequence[StateVector]) -> StateVector:
    """Particle 0's packet on the lowest qubits"""
    state = packets[0]
    for packet in packets[1:]:
        state = state.append_register(packet)
    return state


def ancilla_state(V: PotentialSpec, mode: str) -> StateVector:
    """Prepared ancilla register: QFT|1> for kickback, |0> for rk_ladder"""
    if mode == "kickback":
        return qft(new_basis_state(V.m_V, 1), range(V.m_V))
    if mode == "rk_ladder":
        return new_basis_state(V.m_V, 0)
    raise AncillaError(f"Mode {mode} uses no ancilla register")


def attach_ancillas(state: StateVector, V: PotentialSpec, mode: str) -> StateVector:
    return state.append_register(ancilla_state(V, mode))


def detach_ancillas(combined: StateVector, V: PotentialSpec, mode: str) -> Tuple[StateVector, float]:
    """
    Project the ancillas back onto their prepared state

    Returns:
        (system state, fidelity of the ancilla register with its prepared state)
    """
    prepared = ancilla_state(V, mode)
    n_sys = combined.n_qubits - V.m_V
    if n_sys < 0:
        raise AncillaError(f"State of {combined.n_qubits} qubits cannot hold {V.m_V} ancillas")
    table = combined.amplitudes.reshape(V.levels, 1 << n_sys)
    system = prepared.amplitudes.conj() @ table
    restoration = float(np.vdot(system, system).real)
    return StateVector(system, normalize=True), restoration


def _add_modular(table: np.ndarray, shift: np.ndarray) -> np.ndarray:
    """|s>|x> -> |s + shift(x) mod M>|x> on an (M, 2^n) amplitude table"""
    levels = table.shape[0]
    rows = np.mod(np.arange(levels)[:, None] - shift[None, :], levels)
    cols = np.broadcast_to(np.arange(table.shape[1])[None, :], rows.shape)
    return table[rows, cols]


def _circuit_phase_step(amplitudes: np.ndarray, n_sys: int, V: PotentialSpec, dt: float, mode: str) -> np.ndarray:
    table = amplitudes.reshape(V.levels, 1 << n_sys)
    shift = V.phase_integers(dt)

    if mode == "kickback":
        table = _add_modular(table, shift)
    else:
        table = np.ascontiguousarray(_add_modular(table, shift))
        flat = table.reshape(-1)
        n = n_sys + V.m_V
        for k in range(1, V.m_V + 1):
            apply_matrix_inplace(flat, n, standard_gate("R_k", k).matrix, [n_sys + V.m_V - k])
        table = _add_modular(flat.reshape(V.levels, 1 << n_sys), -shift)

    return np.exp(-1j * V.v_min * dt) * table.reshape(-1)


def potential_phase_step(state: StateVector, V: PotentialSpec, dt: float, mode: str = "direct") -> StateVector:
    """
    Multiply each position amplitude by exp(-i V(x) dt)

    Args:
        state: Grid register, followed by m_V ancillas in the circuit modes
        V: Potential
        dt: Time step
        mode: direct, kickback or rk_ladder

    Returns:
        New state of the same size

    Raises:
        AncillaError: Circuit mode without the ancilla register
    """
    if mode not in MODES:
        raise GridError(f"Unknown phase mode {mode!r} (expected one of {', '.join(MODES)})")

    if mode == "direct":
        if state.n_qubits != V.n_qubits:
            raise GridError(f"State has {state.n_qubits} qubits, potential is defined on {V.n_qubits}")
        return StateVector(state.amplitudes * np.exp(-1j * V.values * dt))

    if state.n_qubits != V.n_qubits + V.m_V:
        raise AncillaError(
            f"Mode {mode} needs {V.n_qubits} grid qubits plus {V.m_V} ancillas, state has {state.n_qubits}")
    return StateVector(_circuit_phase_step(state.amplitudes, V.n_qubits, V, dt, mode))


def kinetic_phase_step(state: StateVector, system: ParticleSystem, dt: float, mode: str = "direct",
                       m_V: int = DEFAULT_POTENTIAL_BITS) -> StateVector:
    """QFT each particle register, apply exp(-i p^2/2M dt), inverse QFT"""
    if state.n_qubits not in (system.n_qubits, system.n_qubits + m_V):
        raise GridError(f"State has {state.n_qubits} qubits, system register has {system.n_qubits}")
    T = kinetic_spec(system, m_V=m_V)

    amps = state.amplitudes.copy()
    for i in range(system.count):
        for gate, targets, controls in qft_circuit(system.particle_qubits(i)):
            apply_matrix_inplace(amps, state.n_qubits, gate.matrix, targets, controls)
    amps = potential_phase_step(StateVector(amps), T, dt, mode).amplitudes.copy()
    for i in range(system.count):
        for gate, targets, controls in inverse_qft_circuit(system.particle_qubits(i)):
            apply_matrix_inplace(amps, state.n_qubits, gate.matrix, targets, controls)
    return StateVector(amps)


def evolve_split_operator(state: StateVector, system: ParticleSystem, V: PotentialSpec, t: float, slices: int,
                          order: int = 2, mode: str = "direct") -> StateVector:
    """
    Split-operator evolution; order 1 alternates V then T, order 2 is V/2 T V/2,
    higher even orders follow the Suzuki recursion over the (V, T) pair
    """
    plan = build_plan(("V", "T"), t, order, slices)
    for index, duration in plan.steps:
        if index == 0:
            state = potential_phase_step(state, V, duration, mode)
        else:
            state = kinetic_phase_step(state, system, duration, mode, m_V=V.m_V)
    return state


def grid_hamiltonian(system: ParticleSystem, V: PotentialSpec) -> HermitianOperator:
    """Dense discretized Hamiltonian diag(V) + sum_i QFT^dag diag(p^2/2M) QFT"""
    check_dense_size(system.n_qubits, "grid Hamiltonian")
    H = np.diag(V.values).astype(np.complex128)
    for i, particle in enumerate(system.particles):
        F = dft_matrix(particle.grid.m_qubits)
        kinetic = F.conj().T @ np.diag(particle.grid.momenta() ** 2 / (2.0 * particle.mass)) @ F
        H += embed_operator(kinetic, system.particle_qubits(i), system.n_qubits)
    return HermitianOperator(H, label="H_grid")


def exact_grid_evolution(state: StateVector, system: ParticleSystem, V: PotentialSpec, t: float) -> StateVector:
    """Dense propagator exp(-i H_grid t) applied to the state"""
    U = dense_exponential(grid_hamiltonian(system, V), -1j * t)
    return StateVector(U @ state.amplitudes, normalize=True)


def position_means(state: StateVector, system: ParticleSystem) -> List[float]:
    probs = state.probabilities()
    return [float(np.dot(probs, x)) for x in system.coordinate_arrays()]


def momentum_means(state: StateVector, system: ParticleSystem) -> List[float]:
    """<p_i> from the numpy FFT of each particle axis (exp(i p x) has positive p)"""
    shape = [p.grid.points for p in reversed(system.particles)]
    psi = state.amplitudes.reshape(shape)
    means = []
    for i, particle in enumerate(system.particles):
        axis = system.count - 1 - i
        phi = np.fft.fft(psi, axis=axis, norm="ortho")
        weights = np.sum(np.abs(phi) ** 2, axis=tuple(a for a in range(system.count) if a != axis))
        p = 2.0 * np.pi * np.fft.fftfreq(particle.grid.points, d=particle.grid.spacing)
        means.append(float(np.dot(weights, p)))
    return means


def split_operator_trajectory(state: StateVector, system: ParticleSystem, V: PotentialSpec, t: float, slices: int,
                              order: int = 2, record_every: int = 1,
                              mode: str = "direct") -> Tuple[StateVector, List[dict]]:
    """
    Evolve slice by slice and record the trajectory

    Returns:
        (final state, rows with step, time, mean_x_i, mean_p_i, norm, energy)
    """
    if record_every < 1:
        raise GridError(f"record_every must be >= 1, got {record_every}")
    H_grid = grid_hamiltonian(system, V)
    dt = t / slices
    rows = []

    def record(step: int, current: StateVector):
        row = {'step': step, 'time': step * dt}
        for i, value in enumerate(position_means(current, system)):
            row[f'mean_x_{i}'] = value
        for i, value in enumerate(momentum_means(current, system)):
            row[f'mean_p_{i}'] = value
        row['norm'] = current.norm()
        row['energy'] = expectation_value(current, H_grid)
        rows.append(row)

    record(0, state)
    for step in range(1, slices + 1):
        state = evolve_split_operator(state, system, V, dt, 1, order, mode)
        if step % record_every == 0 or step == slices:
            record(step, state)
    logger.info(f"Split-operator trajectory: {slices} slices, order {order}, final norm {state.norm():.12f}")
    return state, rows


def trajectory_columns(system: ParticleSystem) -> List[str]:
    return (['step', 'time'] + [f'mean_x_{i}' for i in range(system.count)]
            + [f'mean_p_{i}' for i in range(system.count)] + ['norm', 'energy'])
