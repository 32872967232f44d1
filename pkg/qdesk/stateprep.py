"""
Amplitude encoding of real profiles by recursive controlled rotations

Qubit n-1 is split first: the rotation at each node of the binary tree sends
the block's mass to its left (bit 0) and right (bit 1) halves in proportion to
the summed f^2 over each half. Negative values are encoded by magnitude and
their signs applied afterwards as pi phases.
"""
import logging
from typing import Callable, List, Sequence, Tuple, Union

import numpy as np

from .core import GateMatrix, SimulationError, StateVector, apply_matrix_inplace, new_basis_state, standard_gate

logger = logging.getLogger(__name__)

# (gate, targets, controls, control_values)
MultiplexedOperation = Tuple[GateMatrix, List[int], List[int], List[int]]


class EncodingError(SimulationError, ValueError):
    """Custom exception for invalid amplitude profiles"""
    pass


class AmplitudeProfile:
    """Real values f(x) over x in [0, 2^n) with prefix sums of f^2"""

    def __init__(self, values):
        values = np.asarray(values, dtype=float).reshape(-1)
        n = values.size.bit_length() - 1
        if values.size < 2 or (1 << n) != values.size:
            raise EncodingError(f"Profile needs 2^n >= 2 values, got {values.size}")
        if not np.all(np.isfinite(values)):
            raise EncodingError("Profile has non-finite values")
        if not np.any(values != 0.0):
            raise EncodingError("Profile is identically zero")
        self.n_qubits = n
        self.values = values
        self.prefix = np.concatenate([[0.0], np.cumsum(values ** 2)])

    @classmethod
    def from_function(cls, f: Callable[[np.ndarray], np.ndarray], n_qubits: int,
                      x_min: float = 0.0, x_max: float = 1.0) -> "AmplitudeProfile":
        """Sample f at x_min + (x_max - x_min) j / 2^n"""
        x = x_min + (x_max - x_min) * np.arange(1 << n_qubits) / (1 << n_qubits)
        return cls(np.broadcast_to(np.asarray(f(x), dtype=float), x.shape))

    def block_mass(self, level: int, prefix: int) -> float:
        """Sum of f^2 over indices whose top `level` bits equal prefix"""
        size = 1 << (self.n_qubits - level)
        return float(self.prefix[(prefix + 1) * size] - self.prefix[prefix * size])

    def target_amplitudes(self) -> np.ndarray:
        return self.values / np.sqrt(self.prefix[-1])

    def signs(self) -> np.ndarray:
        return np.where(self.values < 0.0, -1.0, 1.0)


def rotation_angles(profile: AmplitudeProfile) -> List[np.ndarray]:
    """
    Angle tree, one array per level

    angles[l][b] is theta for the block with top-bit prefix b (l bits), with
    cos^2 theta = left-half mass / block mass and theta = 0 on empty blocks.
    """
    tree = []
    for level in range(profile.n_qubits):
        thetas = np.zeros(1 << level)
        for prefix in range(1 << level):
            total = profile.block_mass(level, prefix)
            if total <= 0.0:
                continue
            left = profile.block_mass(level + 1, 2 * prefix)
            thetas[prefix] = np.arccos(np.sqrt(min(1.0, max(0.0, left / total))))
        tree.append(thetas)
    return tree


def encoding_circuit(profile: AmplitudeProfile) -> List[MultiplexedOperation]:
    """Multiplexed Ry(2 theta) rotations; empty blocks and zero angles are skipped"""
    n = profile.n_qubits
    operations: List[MultiplexedOperation] = []
    for level, thetas in enumerate(rotation_angles(profile)):
        target = n - 1 - level
        controls = list(range(n - 1, n - 1 - level, -1))
        for prefix, theta in enumerate(thetas):
            if theta == 0.0:
                continue
            values = [(prefix >> (level - 1 - i)) & 1 for i in range(level)]
            operations.append((standard_gate("Ry", 2.0 * theta), [target], controls, values))
    return operations


def apply_phase_profile(state: StateVector, phases: Union[Sequence[float], Callable[[np.ndarray], np.ndarray]]) -> StateVector:
    """Multiply amplitude x by exp(i phi(x)); phi is an array or a function of the index array"""
    if callable(phases):
        phases = phases(np.arange(state.dimension))
    phases = np.asarray(phases, dtype=float).reshape(-1)
    if phases.size != state.dimension:
        raise EncodingError(f"Phase profile has {phases.size} values for dimension {state.dimension}")
    return StateVector(state.amplitudes * np.exp(1j * phases))


def amplitude_encode(profile: AmplitudeProfile) -> StateVector:
    """
    Prepare sum_x f(x)/|f| |x> from |0...0>

    Returns:
        Normalized StateVector (uses at most 2^n - 1 controlled rotations)
    """
    n = profile.n_qubits
    amps = new_basis_state(n, 0).amplitudes.copy()
    operations = encoding_circuit(profile)
    for gate, targets, controls, values in operations:
        apply_matrix_inplace(amps, n, gate.matrix, targets, controls, values)
    logger.debug(f"Encoded {1 << n}-point profile with {len(operations)} rotations")

    state = StateVector(amps, normalize=True)
    if np.any(profile.values < 0.0):
        state = apply_phase_profile(state, np.where(profile.values < 0.0, np.pi, 0.0))
    return state


def block_probabilities(state: StateVector, level: int) -> np.ndarray:
    """Probability of each value of the top `level` qubits"""
    return state.probabilities().reshape(1 << level, -1).sum(axis=1)
