"""
Quantum Fourier transform, phase estimation and PEA ground-state projection

Power appliers are callables (amplitudes, n_qubits, control, j) -> amplitudes
that apply controlled-W^(2^j) to the register held on qubits [0, n_register)
of a combined amplitude array.
"""
import logging
import math
import threading
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .core import (GateMatrix, HermitianOperator, SimulationError, StateVector, check_placement,
                   apply_matrix_inplace, check_dense_size, dense_exponential, gershgorin_bounds,
                   standard_gate)
from .models import PhaseEstimate

logger = logging.getLogger(__name__)

NORM_DRIFT_LIMIT = 1e-8

PowerApplier = Callable[[np.ndarray, int, int, int], np.ndarray]
Operation = Tuple[GateMatrix, List[int], List[int]]


class PhaseEstimationError(SimulationError):
    """Custom exception for phase estimation errors"""
    pass


def qft_circuit(qubits: Sequence[int]) -> List[Operation]:
    """
    Gate list of the QFT on a sub-register (qubits[0] is its least-significant bit)

    Hadamards and controlled phase rotations followed by the qubit reversal.
    """
    qubits = list(qubits)
    if len(set(qubits)) != len(qubits):
        raise PhaseEstimationError(f"Duplicate qubits in QFT register: {qubits}")
    n = len(qubits)
    hadamard = standard_gate("H")
    swap = standard_gate("SWAP")
    operations: List[Operation] = []
    for j in range(n - 1, -1, -1):
        operations.append((hadamard, [qubits[j]], []))
        for k in range(j - 1, -1, -1):
            operations.append((standard_gate("R_k", j - k + 1).dagger(), [qubits[j]], [qubits[k]]))
    for i in range(n // 2):
        operations.append((swap, [qubits[i], qubits[n - 1 - i]], []))
    return operations


def inverse_qft_circuit(qubits: Sequence[int]) -> List[Operation]:
    return [(gate.dagger(), targets, controls) for gate, targets, controls in reversed(qft_circuit(qubits))]


def _run_circuit(amplitudes: np.ndarray, n_qubits: int, operations: List[Operation]):
    for gate, targets, controls in operations:
        apply_matrix_inplace(amplitudes, n_qubits, gate.matrix, targets, controls)


def qft(state: StateVector, qubits: Sequence[int]) -> StateVector:
    """|x> -> (1/sqrt N) sum_k exp(2 pi i x k / N) |k> on the given sub-register"""
    qubits = list(qubits)
    check_placement(state.n_qubits, qubits, ())
    amps = state.amplitudes.copy()
    _run_circuit(amps, state.n_qubits, qft_circuit(qubits))
    return StateVector(amps)


def inverse_qft(state: StateVector, qubits: Sequence[int]) -> StateVector:
    qubits = list(qubits)
    check_placement(state.n_qubits, qubits, ())
    amps = state.amplitudes.copy()
    _run_circuit(amps, state.n_qubits, inverse_qft_circuit(qubits))
    return StateVector(amps)


def dft_matrix(n_qubits: int) -> np.ndarray:
    """DFT matrix with entries exp(2 pi i x k / N) / sqrt N"""
    dim = 1 << n_qubits
    x = np.arange(dim)
    return np.exp(2j * np.pi * np.outer(x, x) / dim) / np.sqrt(dim)


def ancilla_budget(p: int, epsilon: float) -> int:
    """
    Ancilla count for p-bit precision with failure probability at most epsilon

    Returns:
        p + ceil(log2(2 + 1/(2 epsilon)))
    """
    if p < 1:
        raise ValueError(f"Precision must be at least 1 bit, got {p}")
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"Failure probability must lie in (0, 1), got {epsilon}")
    return p + int(math.ceil(math.log2(2.0 + 1.0 / (2.0 * epsilon))))


class DensePowerApplier:
    """Controlled-W^(2^j) from a dense W, powers built by repeated squaring"""

    def __init__(self, unitary: np.ndarray):
        unitary = np.asarray(unitary, dtype=np.complex128)
        self.n_register = GateMatrix(unitary, label="W").arity
        self._powers = [unitary]
        self._lock = threading.Lock()

    def power(self, j: int) -> np.ndarray:
        with self._lock:
            while len(self._powers) <= j:
                last = self._powers[-1]
                self._powers.append(last @ last)
            return self._powers[j]

    def __call__(self, amplitudes: np.ndarray, n_qubits: int, control: int, j: int) -> np.ndarray:
        apply_matrix_inplace(amplitudes, n_qubits, self.power(j), list(range(self.n_register)), [control])
        return amplitudes


class RepeatedPowerApplier:
    """Controlled-W^(2^j) as 2^j applications of a controlled step"""

    def __init__(self, controlled_step: Callable[[np.ndarray, int, int], np.ndarray]):
        """
        Args:
            controlled_step: (amplitudes, n_qubits, control) -> amplitudes applying controlled-W once
        """
        self.controlled_step = controlled_step

    def __call__(self, amplitudes: np.ndarray, n_qubits: int, control: int, j: int) -> np.ndarray:
        for _ in range(1 << j):
            amplitudes = self.controlled_step(amplitudes, n_qubits, control)
        return amplitudes


def _pea_amplitudes(applier: PowerApplier, register: StateVector, m: int) -> np.ndarray:
    """Ancilla-by-register amplitude table after the PEA circuit, shape (2^m, 2^n)"""
    if m < 1:
        raise ValueError(f"Phase estimation needs at least one ancilla, got {m}")
    n_reg = register.n_qubits
    n = n_reg + m
    ancillas = np.zeros(1 << m, dtype=np.complex128)
    ancillas[0] = 1.0
    amps = np.ascontiguousarray(np.kron(ancillas, register.amplitudes))

    hadamard = standard_gate("H").matrix
    for j in range(m):
        apply_matrix_inplace(amps, n, hadamard, [n_reg + j])

    for j in range(m):
        amps = np.ascontiguousarray(applier(amps, n, n_reg + j, j))
        drift = abs(float(np.linalg.norm(amps)) - 1.0)
        if drift > NORM_DRIFT_LIMIT:
            raise PhaseEstimationError(f"Controlled power 2^{j} is not unitary (norm drift {drift:.3e})")

    _run_circuit(amps, n, inverse_qft_circuit(range(n_reg, n)))
    return amps.reshape(1 << m, 1 << n_reg)


def pea_distribution(applier: PowerApplier, register: StateVector, m: int) -> np.ndarray:
    """Exact probability of each m-bit ancilla outcome"""
    table = _pea_amplitudes(applier, register, m)
    return np.sum(np.abs(table) ** 2, axis=1)


def phase_kernel_distribution(phase: float, m: int) -> np.ndarray:
    """Outcome distribution of m-ancilla PEA on an eigenstate with the given phase"""
    size = 1 << m
    x = np.arange(size)
    return np.abs(np.fft.fft(np.exp(2j * np.pi * x * phase) / size)) ** 2


def phase_estimation(applier: PowerApplier, eigen_register: StateVector, m: int,
                     rng: np.random.Generator) -> Tuple[PhaseEstimate, StateVector]:
    """
    Run PEA and measure all ancillas at once

    Args:
        applier: Controlled-power callback
        eigen_register: Register state (left untouched)
        m: Ancilla count
        rng: Random stream for the measurement

    Returns:
        (PhaseEstimate, post-measurement register state)

    Raises:
        PhaseEstimationError: The callback changed the norm by more than 1e-8
    """
    table = _pea_amplitudes(applier, eigen_register, m)
    probabilities = np.sum(np.abs(table) ** 2, axis=1)
    total = float(np.sum(probabilities))
    cumulative = np.cumsum(probabilities)
    outcome = int(np.searchsorted(cumulative, rng.random() * total, side='right'))
    outcome = min(outcome, (1 << m) - 1)
    probability = float(probabilities[outcome] / total)

    register = StateVector(table[outcome], normalize=True)
    estimate = PhaseEstimate(register_outcome=outcome, phase=outcome / (1 << m),
                             probability=min(1.0, probability))
    logger.debug(f"PEA outcome {outcome:0{m}b} (phase {estimate.phase:.6f}, p={probability:.4f})")
    return estimate, register


class SpectralEncoding:
    """
    Map between energies in [e_min, e_max] and PEA phases in [0, 1 - 2^-m]

    The evolver is W = exp(+i (H - e_min) tau) with tau = 2 pi (1 - 2^-m)/(e_max - e_min),
    so phase = (E - e_min) tau / 2 pi never wraps.
    """

    def __init__(self, e_min: float, e_max: float, m: int):
        if m < 1:
            raise ValueError(f"Encoding needs at least one ancilla, got {m}")
        if e_max < e_min:
            raise ValueError(f"Energy bounds reversed: [{e_min}, {e_max}]")
        if e_max - e_min < 1e-12:
            e_max = e_min + 1.0
        self.e_min = float(e_min)
        self.e_max = float(e_max)
        self.m = m
        self.tau = 2.0 * np.pi * (1.0 - 2.0 ** (-m)) / (self.e_max - self.e_min)

    @classmethod
    def from_hamiltonian(cls, H: HermitianOperator, m: int) -> "SpectralEncoding":
        lower, upper = gershgorin_bounds(H)
        return cls(lower, upper, m)

    @property
    def resolution(self) -> float:
        """Energy spacing between adjacent outcomes"""
        return (self.e_max - self.e_min) / ((1 << self.m) - 1)

    @property
    def spectral_range(self) -> float:
        return self.e_max - self.e_min

    def phase_of(self, energy: float) -> float:
        return (energy - self.e_min) * self.tau / (2.0 * np.pi)

    def energy_of(self, phase: float) -> float:
        return self.e_min + 2.0 * np.pi * phase / self.tau

    def evolver_unitary(self, H: HermitianOperator) -> np.ndarray:
        check_dense_size(H.n_qubits, "PEA evolver")
        return dense_exponential(H.shifted(-self.e_min), 1j * self.tau)


def hamiltonian_power_applier(H: HermitianOperator, m: int,
                              encoding: Optional[SpectralEncoding] = None) -> Tuple[DensePowerApplier, SpectralEncoding]:
    """Dense controlled-power callback for H under the energy-to-phase map"""
    encoding = encoding or SpectralEncoding.from_hamiltonian(H, m)
    return DensePowerApplier(encoding.evolver_unitary(H)), encoding


def project_ground_state(applier: PowerApplier, trial: StateVector, m: int, encoding: SpectralEncoding,
                         target_energy: float, energy_window: float,
                         rng: np.random.Generator) -> Tuple[bool, StateVector, float]:
    """
    PEA projection of a trial state onto the targeted eigenspace

    Args:
        applier: Controlled-power callback for the encoded evolver
        trial: Trial state
        m: Ancilla count
        encoding: Energy-to-phase map the applier was built with
        target_energy: Energy of the targeted (ground) level
        energy_window: Accept outcomes whose energy is within this distance of the target
        rng: Random stream

    Returns:
        (accepted, post-measurement state, decoded energy)

    Raises:
        PhaseEstimationError: The window contains no outcome energy
    """
    if energy_window <= 0:
        raise PhaseEstimationError(f"Energy window must be positive, got {energy_window}")
    grid = np.array([encoding.energy_of(a / (1 << m)) for a in range(1 << m)])
    if not np.any(np.abs(grid - target_energy) <= energy_window):
        raise PhaseEstimationError(
            f"Window {target_energy} +/- {energy_window} contains no outcome energy (resolution {encoding.resolution:.3e})")

    estimate, state = phase_estimation(applier, trial, m, rng)
    energy = encoding.energy_of(estimate.phase)
    accepted = abs(energy - target_energy) <= energy_window
    return accepted, state, energy
