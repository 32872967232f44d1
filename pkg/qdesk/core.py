"""
Dense state-vector simulation core

Qubit 0 is the least-significant bit of a basis index. Amplitudes live in one
contiguous complex128 array; a k-qubit gate is applied by viewing the array as
an n-axis tensor (axis n-1-q holds qubit q) and contracting the gate against
the target axes, with controls selected by slicing.
"""
import logging
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from .config import get_settings
from .models import StateMetrics

logger = logging.getLogger(__name__)

NORM_TOLERANCE = 1e-10
DENSITY_TOLERANCE = 1e-10
HERMITIAN_TOLERANCE = 1e-12
UNITARY_TOLERANCE = 1e-10
IMAGINARY_RESIDUE = 1e-10

PAULI = {
    'I': np.eye(2, dtype=np.complex128),
    'X': np.array([[0, 1], [1, 0]], dtype=np.complex128),
    'Y': np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    'Z': np.array([[1, 0], [0, -1]], dtype=np.complex128),
}


class SimulationError(Exception):
    """Base exception for simulator errors"""
    pass


class DimensionError(SimulationError, ValueError):
    """Raised when sizes, indices or the dense guard do not fit"""
    pass


class GateError(SimulationError, ValueError):
    """Raised for unknown gates, bad parameters or bad gate placement"""
    pass


class MeasurementError(SimulationError):
    """Raised when a zero-probability branch is selected"""
    pass


class StateValidationError(SimulationError, ValueError):
    """Raised when an array is not a valid state or operator"""
    pass


def _qubits_for_dimension(dimension: int) -> int:
    n = dimension.bit_length() - 1
    if dimension < 1 or (1 << n) != dimension:
        raise DimensionError(f"Dimension {dimension} is not a power of two")
    return n


def dense_qubit_limit() -> int:
    """Largest register a dense oracle may be built for"""
    return get_settings().max_dense_qubits


def check_dense_size(n_qubits: int, what: str = "dense operator"):
    limit = dense_qubit_limit()
    if n_qubits > limit:
        raise DimensionError(f"{what} on {n_qubits} qubits exceeds the dense limit of {limit} qubits")


class StateVector:
    """Normalized pure state over 2^n computational basis states"""

    def __init__(self, amplitudes, normalize: bool = False):
        amps = np.array(amplitudes, dtype=np.complex128).reshape(-1)
        n_qubits = _qubits_for_dimension(amps.size)
        norm = float(np.linalg.norm(amps))
        if normalize:
            if norm == 0.0:
                raise StateValidationError("Cannot normalize an all-zero amplitude vector")
            amps /= norm
        elif abs(norm ** 2 - 1.0) > NORM_TOLERANCE:
            raise StateValidationError(f"State norm^2 is {norm ** 2:.3e}, expected 1")
        self.n_qubits = n_qubits
        self.amplitudes = amps

    @property
    def dimension(self) -> int:
        return self.amplitudes.size

    def copy(self) -> "StateVector":
        return StateVector(self.amplitudes)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def inner(self, other: "StateVector") -> complex:
        """<self|other>"""
        if other.n_qubits != self.n_qubits:
            raise DimensionError(f"Cannot compare {self.n_qubits}- and {other.n_qubits}-qubit states")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def append_register(self, other: "StateVector") -> "StateVector":
        """Product state with self on the low qubits and other above it"""
        return StateVector(np.kron(other.amplitudes, self.amplitudes))

    def to_density_matrix(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))

    def __repr__(self):
        return f"StateVector(n_qubits={self.n_qubits})"


class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite matrix"""

    def __init__(self, matrix, validate: bool = True):
        m = np.array(matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise StateValidationError(f"Density matrix must be square, got shape {m.shape}")
        n_qubits = _qubits_for_dimension(m.shape[0])
        if validate:
            asym = float(np.max(np.abs(m - m.conj().T)))
            if asym > DENSITY_TOLERANCE:
                raise StateValidationError(f"Density matrix not Hermitian (deviation {asym:.3e})")
            m = 0.5 * (m + m.conj().T)
            trace = float(np.real(np.trace(m)))
            if abs(trace - 1.0) > DENSITY_TOLERANCE:
                raise StateValidationError(f"Density matrix trace is {trace:.12f}, expected 1")
            lowest = float(np.linalg.eigvalsh(m)[0])
            if lowest < -DENSITY_TOLERANCE:
                raise StateValidationError(f"Density matrix has negative eigenvalue {lowest:.3e}")
        self.n_qubits = n_qubits
        self.matrix = m

    @classmethod
    def from_state(cls, state: StateVector) -> "DensityMatrix":
        return state.to_density_matrix()

    @classmethod
    def maximally_mixed(cls, n_qubits: int) -> "DensityMatrix":
        dim = 1 << n_qubits
        return cls(np.eye(dim, dtype=np.complex128) / dim)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.matrix)).copy()

    def kron(self, high: "DensityMatrix") -> "DensityMatrix":
        """Product state with self on the low qubits and high above it"""
        return DensityMatrix(np.kron(high.matrix, self.matrix))

    def __repr__(self):
        return f"DensityMatrix(n_qubits={self.n_qubits})"


class GateMatrix:
    """Unitary acting on `arity` qubits; row/column bit b belongs to targets[b]"""

    def __init__(self, matrix, label: str = "U", check: bool = True):
        m = np.array(matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise GateError(f"Gate matrix must be square, got shape {m.shape}")
        self.arity = _qubits_for_dimension(m.shape[0])
        if check:
            deviation = float(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))))
            if deviation > UNITARY_TOLERANCE:
                raise GateError(f"Gate {label} is not unitary (deviation {deviation:.3e})")
        self.matrix = m
        self.label = label

    def dagger(self) -> "GateMatrix":
        return GateMatrix(self.matrix.conj().T, label=f"{self.label}^dag", check=False)

    def __repr__(self):
        return f"GateMatrix({self.label}, arity={self.arity})"


class HermitianOperator:
    """Hermitian matrix on n qubits (a Hamiltonian or an observable)"""

    def __init__(self, matrix, label: Optional[str] = None):
        m = np.array(matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise StateValidationError(f"Operator must be square, got shape {m.shape}")
        self.n_qubits = _qubits_for_dimension(m.shape[0])
        scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
        asym = float(np.max(np.abs(m - m.conj().T)))
        if asym > HERMITIAN_TOLERANCE * scale:
            raise StateValidationError(f"Operator {label or ''} not Hermitian (deviation {asym:.3e})")
        self.matrix = 0.5 * (m + m.conj().T)
        self.label = label
        self._eigh = None

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def eigh(self) -> Tuple[np.ndarray, np.ndarray]:
        """Eigenvalues ascending and eigenvectors as columns"""
        if self._eigh is None:
            self._eigh = np.linalg.eigh(self.matrix)
        return self._eigh

    def eigenvalues(self) -> np.ndarray:
        return self.eigh()[0]

    def norm(self) -> float:
        """Operator (spectral) norm"""
        values = self.eigenvalues()
        return float(np.max(np.abs(values))) if values.size else 0.0

    def ground_state(self) -> StateVector:
        return StateVector(self.eigh()[1][:, 0])

    def shifted(self, constant: float) -> "HermitianOperator":
        return HermitianOperator(self.matrix + constant * np.eye(self.dimension), label=self.label)

    def __add__(self, other: "HermitianOperator") -> "HermitianOperator":
        return HermitianOperator(self.matrix + as_matrix(other))

    def __sub__(self, other: "HermitianOperator") -> "HermitianOperator":
        return HermitianOperator(self.matrix - as_matrix(other))

    def __mul__(self, scalar: float) -> "HermitianOperator":
        if np.iscomplexobj(scalar) and np.imag(scalar) != 0:
            raise StateValidationError("Hermitian operators scale by real numbers only")
        return HermitianOperator(float(np.real(scalar)) * self.matrix, label=self.label)

    __rmul__ = __mul__

    def __neg__(self) -> "HermitianOperator":
        return self * -1.0

    def __repr__(self):
        return f"HermitianOperator({self.label or 'H'}, n_qubits={self.n_qubits})"


def as_matrix(operator) -> np.ndarray:
    """Matrix of a HermitianOperator, DensityMatrix, GateMatrix or plain array"""
    if isinstance(operator, (HermitianOperator, DensityMatrix, GateMatrix)):
        return operator.matrix
    return np.asarray(operator, dtype=np.complex128)


def pauli_operator(letters: str, coefficient: float = 1.0) -> HermitianOperator:
    """Dense Pauli product; letters[q] acts on qubit q"""
    matrix = np.array([[1.0 + 0j]])
    for letter in letters:
        matrix = np.kron(PAULI[letter], matrix)
    return HermitianOperator(coefficient * matrix, label=letters)


def new_basis_state(n: int, x: int) -> StateVector:
    """Computational basis state |x> on n qubits"""
    if n < 0:
        raise DimensionError(f"Qubit count must be >= 0, got {n}")
    if not 0 <= x < (1 << n):
        raise DimensionError(f"Basis index {x} out of range for {n} qubits")
    amps = np.zeros(1 << n, dtype=np.complex128)
    amps[x] = 1.0
    return StateVector(amps)


_PARAMETRIC_GATES = ("Rx", "Ry", "Rz", "Rz_phase", "R_k", "PHASE")
_FIXED_GATES = {
    'H': np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2.0),
    'X': PAULI['X'],
    'Y': PAULI['Y'],
    'Z': PAULI['Z'],
    'S': np.diag([1.0, 1j]).astype(np.complex128),
    # control is gate bit 1, target is gate bit 0
    'CNOT': np.array([[1, 0, 0, 0],
                      [0, 1, 0, 0],
                      [0, 0, 0, 1],
                      [0, 0, 1, 0]], dtype=np.complex128),
    'SWAP': np.array([[1, 0, 0, 0],
                      [0, 0, 1, 0],
                      [0, 1, 0, 0],
                      [0, 0, 0, 1]], dtype=np.complex128),
}


def standard_gate(name: str, param: Optional[float] = None) -> GateMatrix:
    """
    Named gate of the standard set

    Args:
        name: H, X, Y, Z, S, CNOT, SWAP, Rx, Ry, Rz, Rz_phase, R_k or PHASE
        param: Angle for the rotations, integer k for R_k

    Returns:
        GateMatrix labelled with the name (and parameter)

    Raises:
        GateError: Unknown name, missing or non-finite parameter
    """
    if name in _FIXED_GATES:
        if param is not None:
            raise GateError(f"Gate {name} takes no parameter")
        return GateMatrix(_FIXED_GATES[name], label=name, check=False)

    if name not in _PARAMETRIC_GATES:
        raise GateError(f"Unknown gate: {name}")
    if param is None:
        raise GateError(f"Gate {name} requires a parameter")
    try:
        value = float(param)
    except (TypeError, ValueError):
        raise GateError(f"Gate {name} parameter must be a real number, got {param!r}")
    if not np.isfinite(value):
        raise GateError(f"Gate {name} parameter must be finite, got {param}")

    c, s = np.cos(value / 2.0), np.sin(value / 2.0)
    if name == "Rx":
        matrix = np.array([[c, -1j * s], [-1j * s, c]])
    elif name == "Ry":
        matrix = np.array([[c, -s], [s, c]])
    elif name == "Rz":
        matrix = np.diag([np.exp(-0.5j * value), np.exp(0.5j * value)])
    elif name == "Rz_phase":
        matrix = np.diag([1.0, -1j * np.exp(1j * value)])
    elif name == "PHASE":
        matrix = np.diag([1.0, np.exp(1j * value)])
    else:
        if value != int(value) or value < 1:
            raise GateError(f"R_k needs an integer k >= 1, got {param}")
        matrix = np.diag([1.0, np.exp(-2j * np.pi / 2 ** int(value))])
    return GateMatrix(np.asarray(matrix, dtype=np.complex128), label=f"{name}({param})", check=False)


def check_placement(n_qubits: int, targets: Sequence[int], controls: Sequence[int]):
    if len(targets) == 0:
        raise GateError("A gate needs at least one target qubit")
    everything = list(targets) + list(controls)
    for q in everything:
        if not 0 <= q < n_qubits:
            raise GateError(f"Qubit {q} out of range for {n_qubits} qubits")
    if len(set(everything)) != len(everything):
        raise GateError(f"Targets {list(targets)} and controls {list(controls)} overlap or repeat")


def apply_matrix_inplace(amplitudes: np.ndarray, n_qubits: int, matrix: np.ndarray,
                         targets: Sequence[int], controls: Sequence[int] = (),
                         control_values: Optional[Sequence[int]] = None):
    """
    Contract `matrix` into the target axes of an amplitude array, in place

    The array may carry trailing batch axes (e.g. the columns of a matrix
    being pushed through a circuit). No unitarity check is made here.
    """
    if not amplitudes.flags.c_contiguous:
        raise DimensionError("Amplitude array must be C-contiguous")
    targets = [int(q) for q in targets]
    controls = [int(q) for q in controls]
    if control_values is None:
        control_values = [1] * len(controls)
    k = len(targets)

    psi = amplitudes.reshape((2,) * n_qubits + amplitudes.shape[1:])
    index = [slice(None)] * psi.ndim
    for q, v in zip(controls, control_values):
        index[n_qubits - 1 - q] = int(v)
    sub = psi[tuple(index)]

    remaining = [q for q in range(n_qubits - 1, -1, -1) if q not in controls]
    axes = [remaining.index(q) for q in reversed(targets)]
    gate = np.asarray(matrix, dtype=np.complex128).reshape((2,) * (2 * k))
    moved = np.tensordot(gate, sub, axes=(list(range(k, 2 * k)), axes))
    sub[...] = np.moveaxis(moved, list(range(k)), axes)


def apply_unitary(state: StateVector, gate: GateMatrix, targets: Sequence[int],
                  controls: Sequence[int] = (), control_values: Optional[Sequence[int]] = None) -> StateVector:
    """
    Apply a (controlled) gate and return the new state

    Args:
        state: Input state (left untouched)
        gate: Gate whose bit b acts on targets[b]
        targets: Target qubits
        controls: Control qubits
        control_values: Required value per control (default all 1)

    Returns:
        Transformed StateVector

    Raises:
        GateError: Overlapping or out-of-range qubits, arity mismatch
    """
    targets = list(targets)
    controls = list(controls)
    check_placement(state.n_qubits, targets, controls)
    if gate.arity != len(targets):
        raise GateError(f"Gate {gate.label} has arity {gate.arity} but {len(targets)} targets were given")
    if control_values is not None and len(control_values) != len(controls):
        raise GateError("control_values must match controls in length")

    amps = state.amplitudes.copy()
    apply_matrix_inplace(amps, state.n_qubits, gate.matrix, targets, controls, control_values)
    return StateVector(amps)


def measure_qubit(state: StateVector, q: int, sample: float) -> Tuple[int, StateVector, float]:
    """
    Projective measurement of one qubit in the computational basis

    Args:
        state: State to measure
        q: Qubit index
        sample: Uniform random number in [0, 1)

    Returns:
        (outcome bit, collapsed state, probability of that outcome)
    """
    if not 0 <= q < state.n_qubits:
        raise DimensionError(f"Qubit {q} out of range for {state.n_qubits} qubits")
    if not 0.0 <= sample < 1.0:
        raise ValueError(f"Measurement sample must lie in [0, 1), got {sample}")

    psi = state.amplitudes.reshape((2,) * state.n_qubits)
    axis = state.n_qubits - 1 - q
    branch_zero = np.take(psi, 0, axis=axis)
    p0 = float(np.sum(np.abs(branch_zero) ** 2))
    p0 = min(max(p0, 0.0), 1.0)
    outcome = 0 if sample < p0 else 1
    probability = p0 if outcome == 0 else 1.0 - p0
    if probability <= 0.0:
        raise MeasurementError(f"Selected zero-probability outcome {outcome} on qubit {q}")

    collapsed = psi.copy()
    index = [slice(None)] * state.n_qubits
    index[axis] = 1 - outcome
    collapsed[tuple(index)] = 0.0
    collapsed = collapsed.reshape(-1) / np.sqrt(probability)
    return outcome, StateVector(collapsed, normalize=True), probability


def expectation_value(state: Union[StateVector, DensityMatrix], A) -> float:
    """<psi|A|psi> or Tr(A rho), real part"""
    matrix = as_matrix(A)
    if matrix.shape[0] != state.dimension:
        raise DimensionError(f"Operator dimension {matrix.shape[0]} does not match state dimension {state.dimension}")
    if isinstance(state, StateVector):
        value = np.vdot(state.amplitudes, matrix @ state.amplitudes)
    else:
        value = np.trace(matrix @ state.matrix)
    if abs(np.imag(value)) > IMAGINARY_RESIDUE * max(1.0, abs(value)):
        logger.warning(f"Expectation value has imaginary residue {np.imag(value):.3e}")
    return float(np.real(value))


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    values, vectors = np.linalg.eigh(matrix)
    return (vectors * np.sqrt(np.clip(values, 0.0, None))) @ vectors.conj().T


def state_metrics(a: Union[StateVector, DensityMatrix], b: Union[StateVector, DensityMatrix]) -> StateMetrics:
    """
    Fidelity and trace distance between two states

    Fidelity is |<a|b>|^2 for pure states and the Uhlmann fidelity otherwise;
    trace distance is half the trace norm of the difference.
    """
    if a.dimension != b.dimension:
        raise DimensionError(f"Cannot compare states of dimension {a.dimension} and {b.dimension}")

    if isinstance(a, StateVector) and isinstance(b, StateVector):
        fidelity = min(1.0, abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)
        return StateMetrics(fidelity=fidelity, trace_distance=float(np.sqrt(max(0.0, 1.0 - fidelity))))

    rho = a.to_density_matrix().matrix if isinstance(a, StateVector) else a.matrix
    sigma = b.to_density_matrix().matrix if isinstance(b, StateVector) else b.matrix

    if isinstance(a, StateVector):
        fidelity = float(np.real(np.vdot(a.amplitudes, sigma @ a.amplitudes)))
    elif isinstance(b, StateVector):
        fidelity = float(np.real(np.vdot(b.amplitudes, rho @ b.amplitudes)))
    else:
        root = _psd_sqrt(rho)
        inner = root @ sigma @ root
        fidelity = float(np.sum(np.sqrt(np.clip(np.linalg.eigvalsh(0.5 * (inner + inner.conj().T)), 0.0, None)))) ** 2

    difference = rho - sigma
    distance = 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (difference + difference.conj().T)))))
    return StateMetrics(fidelity=min(1.0, max(0.0, fidelity)), trace_distance=distance)


def trace_norm(matrix: np.ndarray) -> float:
    """Sum of singular values"""
    return float(np.sum(np.linalg.svd(np.asarray(matrix), compute_uv=False)))


def dense_exponential(A, scale: complex) -> np.ndarray:
    """
    exp(scale * A) by eigendecomposition of the Hermitian A

    Raises:
        DimensionError: A is larger than the dense limit
    """
    operator = A if isinstance(A, HermitianOperator) else HermitianOperator(A)
    check_dense_size(operator.n_qubits, "dense exponential")
    values, vectors = operator.eigh()
    return (vectors * np.exp(scale * values)) @ vectors.conj().T


def embed_operator(matrix: np.ndarray, support: Sequence[int], n_qubits: int) -> np.ndarray:
    """Full 2^n x 2^n matrix of an operator acting on `support`"""
    check_dense_size(n_qubits, "embedded operator")
    support = list(support)
    check_placement(n_qubits, support, ())
    full = np.eye(1 << n_qubits, dtype=np.complex128)
    apply_matrix_inplace(full, n_qubits, np.asarray(matrix, dtype=np.complex128), support)
    return full


def gershgorin_bounds(A) -> Tuple[float, float]:
    """Spectral enclosure [lower, upper] of a Hermitian matrix from Gershgorin discs"""
    matrix = as_matrix(A)
    centers = np.real(np.diag(matrix))
    radii = np.sum(np.abs(matrix), axis=1) - np.abs(np.diag(matrix))
    return float(np.min(centers - radii)), float(np.max(centers + radii))


def partial_trace(state: Union[StateVector, DensityMatrix], keep: Sequence[int]) -> DensityMatrix:
    """
    Reduced state of the kept qubits

    keep[0] becomes qubit 0 of the result.
    """
    keep = list(keep)
    n = state.n_qubits
    check_placement(n, keep, ())
    traced = [q for q in range(n) if q not in keep]
    order = [n - 1 - q for q in reversed(keep)] + [n - 1 - q for q in reversed(traced)]
    k = len(keep)

    if isinstance(state, StateVector):
        psi = state.amplitudes.reshape((2,) * n).transpose(order).reshape(1 << k, -1)
        return DensityMatrix(psi @ psi.conj().T)

    rho = state.matrix.reshape((2,) * (2 * n))
    rho = rho.transpose(order + [n + axis for axis in order])
    rho = rho.reshape(1 << k, 1 << (n - k), 1 << k, 1 << (n - k))
    return DensityMatrix(np.einsum('ajbj->ab', rho))


def random_state(n_qubits: int, rng: np.random.Generator) -> StateVector:
    """Haar-random pure state"""
    dim = 1 << n_qubits
    return StateVector(rng.normal(size=dim) + 1j * rng.normal(size=dim), normalize=True)


def random_hermitian(n_qubits: int, rng: np.random.Generator, norm: float = 1.0) -> HermitianOperator:
    """Random Hermitian operator rescaled to the given spectral norm"""
    dim = 1 << n_qubits
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    h = 0.5 * (a + a.conj().T)
    h *= norm / np.max(np.abs(np.linalg.eigvalsh(h)))
    return HermitianOperator(h)


def random_density(n_qubits: int, rng: np.random.Generator, rank: Optional[int] = None) -> DensityMatrix:
    """Random mixed state of the given rank (full rank by default)"""
    dim = 1 << n_qubits
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return DensityMatrix(rho / np.real(np.trace(rho)))


def circuit_matrix(operations: Iterable[Tuple[GateMatrix, Sequence[int], Sequence[int]]], n_qubits: int) -> np.ndarray:
    """Dense unitary of a gate list [(gate, targets, controls), ...]"""
    check_dense_size(n_qubits, "circuit matrix")
    full = np.eye(1 << n_qubits, dtype=np.complex128)
    for gate, targets, controls in operations:
        apply_matrix_inplace(full, n_qubits, gate.matrix, targets, controls)
    return full
