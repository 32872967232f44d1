"""
Second-quantized electronic structure on qubits

Integral files are ingested into an IntegralSet, one-body terms are folded
into the two-body tensor for a fixed electron count, and the fermionic
Hamiltonian H = 1/2 sum h_pqrs a_p^ a_q^ a_r a_s is mapped onto Pauli strings
by the Jordan-Wigner transformation (mode j on qubit j, Z strings over m < j).
Ground energies are read out by phase estimation over a Trotterized evolver
built from Pauli-string exponentials.
"""
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import schur

from .core import (PAULI, HermitianOperator, SimulationError, StateVector, apply_matrix_inplace, check_dense_size,
                   standard_gate)
from .models import EnergyEstimate
from .spectral import (DensePowerApplier, Operation, RepeatedPowerApplier, SpectralEncoding, ancilla_budget,
                       phase_estimation)
from .trotter import build_plan

logger = logging.getLogger(__name__)

PRUNE_THRESHOLD = 1e-12
CONFLICT_TOLERANCE = 1e-12
HERMITIAN_TOLERANCE = 1e-10
# levels the trial weighs less than this are never targeted as the ground band
OVERLAP_FLOOR = 1e-4


class IntegralFormatError(ValueError):
    """Custom exception for malformed integral files"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class HamiltonianError(SimulationError, ValueError):
    """Custom exception for invalid fermionic or qubit Hamiltonians"""
    pass


class TrotterResolutionError(SimulationError):
    """Raised when Trotter slicing is too coarse for the requested energy resolution"""
    pass


class IntegralSet:
    """One- and two-body integrals over k spin-orbital modes"""

    def __init__(self, one_body: np.ndarray, two_body: np.ndarray, core_energy: float = 0.0):
        one_body = np.asarray(one_body, dtype=np.complex128)
        two_body = np.asarray(two_body, dtype=np.complex128)
        k = one_body.shape[0]
        if one_body.shape != (k, k) or two_body.shape != (k,) * 4:
            raise HamiltonianError(f"Integral shapes {one_body.shape} and {two_body.shape} disagree")
        self.modes = k
        self.one_body = one_body
        self.two_body = two_body
        self.core_energy = float(core_energy)

    def __repr__(self):
        return f"IntegralSet(modes={self.modes}, core_energy={self.core_energy})"


def _parse_value(token: str, line: int) -> complex:
    try:
        return complex(float(token))
    except ValueError:
        pass
    try:
        return complex(token.replace('i', 'j'))
    except ValueError:
        raise IntegralFormatError(f"Cannot parse value {token!r}", line)


def _parse_index(token: str, modes: int, line: int) -> int:
    try:
        index = int(token)
    except ValueError:
        raise IntegralFormatError(f"Cannot parse index {token!r}", line)
    if not 0 <= index < modes:
        raise IntegralFormatError(f"Index {index} out of range for {modes} modes", line)
    return index


def _store(table: np.ndarray, seen: np.ndarray, index: tuple, value: complex, line: int):
    if seen[index] and abs(table[index] - value) > CONFLICT_TOLERANCE:
        raise IntegralFormatError(
            f"Entry {index} conflicts with an earlier value ({table[index]} vs {value})", line)
    table[index] = value
    seen[index] = True


def load_integrals(path: Union[str, Path]) -> IntegralSet:
    """
    Read an integral file

    Format: header "norb <k>", optional "ecore <value>", then one-body lines
    "p q value" and two-body lines "p q r s value", optionally under "1body"
    and "2body" markers. Indices are 0-based, '#' starts a comment, missing
    entries are zero and Hermitian partners are filled in.

    Raises:
        FileNotFoundError: Missing file
        IntegralFormatError: Malformed line, missing header or conflicting duplicates
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Integral file not found: {path}")

    modes = None
    core_energy = 0.0
    section = None
    one_body = two_body = None
    seen_one = seen_two = None

    with open(path, 'r', encoding='utf-8') as f:
        for number, raw in enumerate(f, start=1):
            tokens = raw.split('#', 1)[0].split()
            if not tokens:
                continue

            if modes is None:
                if tokens[0].lower() != "norb" or len(tokens) != 2:
                    raise IntegralFormatError("Missing 'norb <k>' header", number)
                try:
                    modes = int(tokens[1])
                except ValueError:
                    raise IntegralFormatError(f"Cannot parse mode count {tokens[1]!r}", number)
                if modes < 1:
                    raise IntegralFormatError(f"Mode count must be positive, got {modes}", number)
                one_body = np.zeros((modes, modes), dtype=np.complex128)
                two_body = np.zeros((modes,) * 4, dtype=np.complex128)
                seen_one = np.zeros(one_body.shape, dtype=bool)
                seen_two = np.zeros(two_body.shape, dtype=bool)
                continue

            keyword = tokens[0].lower()
            if keyword == "ecore":
                if len(tokens) != 2:
                    raise IntegralFormatError("Expected 'ecore <value>'", number)
                core_energy = _parse_value(tokens[1], number).real
                continue
            if keyword in ("1body", "2body") and len(tokens) == 1:
                section = keyword
                continue

            if len(tokens) == 3 and section in (None, "1body"):
                p, q = (_parse_index(t, modes, number) for t in tokens[:2])
                value = _parse_value(tokens[2], number)
                _store(one_body, seen_one, (p, q), value, number)
                _store(one_body, seen_one, (q, p), value.conjugate(), number)
            elif len(tokens) == 5 and section in (None, "2body"):
                p, q, r, s = (_parse_index(t, modes, number) for t in tokens[:4])
                value = _parse_value(tokens[4], number)
                _store(two_body, seen_two, (p, q, r, s), value, number)
                _store(two_body, seen_two, (s, r, q, p), value.conjugate(), number)
            else:
                raise IntegralFormatError(f"Malformed line {raw.strip()!r}", number)

    if modes is None:
        raise IntegralFormatError("Missing 'norb <k>' header")

    logger.info(f"Loaded integrals from {path}: {modes} modes, "
                f"{int(seen_one.sum())} one-body and {int(seen_two.sum())} two-body entries")
    return IntegralSet(one_body, two_body, core_energy)


def reduce_to_two_body(integrals: IntegralSet, n_electrons: int) -> np.ndarray:
    """
    Absorb the one-body part into the two-body tensor for a fixed electron count

    Uses a_p^ a_q = 1/(N-1) sum_s a_p^ a_s^ a_s a_q on the N-electron sector.
    """
    if n_electrons < 2:
        raise HamiltonianError(f"Two-body reduction needs at least 2 electrons, got {n_electrons}")
    reduced = integrals.two_body.copy()
    weight = 2.0 / (n_electrons - 1)
    for s in range(integrals.modes):
        reduced[:, s, s, :] += weight * integrals.one_body
    return reduced


class PauliString:
    """coefficient * letters[0] (x) ... with letters[q] acting on qubit q"""

    def __init__(self, coefficient: complex, letters: str):
        if not np.isfinite(coefficient):
            raise HamiltonianError(f"Pauli coefficient must be finite, got {coefficient}")
        if any(letter not in PAULI for letter in letters):
            raise HamiltonianError(f"Unknown Pauli letters in {letters!r}")
        self.coefficient = complex(coefficient)
        self.letters = letters

    @property
    def n_qubits(self) -> int:
        return len(self.letters)

    def is_identity(self) -> bool:
        return set(self.letters) <= {'I'}

    def matrix(self) -> np.ndarray:
        m = np.array([[1.0 + 0j]])
        for letter in self.letters:
            m = np.kron(PAULI[letter], m)
        return self.coefficient * m

    def __repr__(self):
        return f"PauliString({self.coefficient:.6g}, {self.letters})"


_SITE_PRODUCT = {
    ('X', 'Y'): (1j, 'Z'), ('Y', 'X'): (-1j, 'Z'),
    ('Y', 'Z'): (1j, 'X'), ('Z', 'Y'): (-1j, 'X'),
    ('Z', 'X'): (1j, 'Y'), ('X', 'Z'): (-1j, 'Y'),
}


def _multiply_letters(a: str, b: str) -> Tuple[complex, str]:
    phase = 1.0 + 0j
    out = []
    for x, y in zip(a, b):
        if x == 'I':
            out.append(y)
        elif y == 'I':
            out.append(x)
        elif x == y:
            out.append('I')
        else:
            factor, letter = _SITE_PRODUCT[(x, y)]
            phase *= factor
            out.append(letter)
    return phase, ''.join(out)


PauliSum = Dict[str, complex]


def _multiply_sums(a: PauliSum, b: PauliSum) -> PauliSum:
    product: PauliSum = {}
    for letters_a, coef_a in a.items():
        for letters_b, coef_b in b.items():
            phase, letters = _multiply_letters(letters_a, letters_b)
            product[letters] = product.get(letters, 0.0) + phase * coef_a * coef_b
    return product


def _prune(terms: PauliSum) -> PauliSum:
    return {letters: coef for letters, coef in terms.items() if abs(coef) >= PRUNE_THRESHOLD}


def _ladder(mode: int, dagger: bool, n_modes: int) -> PauliSum:
    """a_j^ = Z_{<j} (X - iY)/2 and a_j = Z_{<j} (X + iY)/2"""
    prefix = 'Z' * mode
    suffix = 'I' * (n_modes - mode - 1)
    return {prefix + 'X' + suffix: 0.5, prefix + 'Y' + suffix: (-0.5j if dagger else 0.5j)}


def jordan_wigner(monomial: Sequence[Tuple[int, bool]], n_modes: int) -> List[PauliString]:
    """
    Pauli expansion of an ordered product of ladder operators

    Args:
        monomial: [(mode, dagger), ...] read left to right
        n_modes: Register size

    Returns:
        Combined strings with |coefficient| >= 1e-12
    """
    for mode, _ in monomial:
        if not 0 <= mode < n_modes:
            raise HamiltonianError(f"Mode {mode} out of range for {n_modes} modes")
    total: PauliSum = {'I' * n_modes: 1.0 + 0j}
    for mode, dagger in monomial:
        total = _multiply_sums(total, _ladder(mode, bool(dagger), n_modes))
    return [PauliString(coef, letters) for letters, coef in sorted(_prune(total).items())]


class QubitHamiltonian:
    """Sum of Pauli strings with real coefficients"""

    def __init__(self, strings: Sequence[PauliString], n_qubits: int):
        for string in strings:
            if string.n_qubits != n_qubits:
                raise HamiltonianError(f"String {string.letters} does not span {n_qubits} qubits")
            if abs(string.coefficient.imag) > HERMITIAN_TOLERANCE:
                raise HamiltonianError(f"String {string.letters} has complex coefficient {string.coefficient}")
        self.strings = [PauliString(s.coefficient.real, s.letters) for s in strings]
        self.n_qubits = n_qubits

    def __len__(self):
        return len(self.strings)

    def constant(self) -> float:
        return sum(s.coefficient.real for s in self.strings if s.is_identity())

    def spectral_bounds(self) -> Tuple[float, float]:
        """[c_I - sum |c|, c_I + sum |c|] over the non-identity strings"""
        spread = sum(abs(s.coefficient) for s in self.strings if not s.is_identity())
        return self.constant() - spread, self.constant() + spread

    def dense_matrix(self) -> np.ndarray:
        check_dense_size(self.n_qubits, "qubit Hamiltonian")
        total = np.zeros((1 << self.n_qubits, 1 << self.n_qubits), dtype=np.complex128)
        for string in self.strings:
            total += string.matrix()
        return total

    def to_operator(self) -> HermitianOperator:
        return HermitianOperator(self.dense_matrix(), label="H_spin")

    def expectation(self, state: StateVector) -> float:
        """<psi|H|psi> by applying each string site by site"""
        if state.n_qubits != self.n_qubits:
            raise HamiltonianError(f"State has {state.n_qubits} qubits, Hamiltonian {self.n_qubits}")
        value = 0.0
        for string in self.strings:
            amps = state.amplitudes.copy()
            for q, letter in enumerate(string.letters):
                if letter != 'I':
                    apply_matrix_inplace(amps, self.n_qubits, PAULI[letter], [q])
            value += string.coefficient.real * float(np.real(np.vdot(state.amplitudes, amps)))
        return value

    def __repr__(self):
        return f"QubitHamiltonian({len(self.strings)} strings, n_qubits={self.n_qubits})"


def build_qubit_hamiltonian(h_tilde: np.ndarray, constant: float = 0.0) -> QubitHamiltonian:
    """
    Jordan-Wigner image of 1/2 sum h_pqrs a_p^ a_q^ a_r a_s (+ constant * I)

    Raises:
        HamiltonianError: h_pqrs != conj(h_srqp)
    """
    h_tilde = np.asarray(h_tilde, dtype=np.complex128)
    k = h_tilde.shape[0]
    if h_tilde.shape != (k,) * 4:
        raise HamiltonianError(f"Two-body tensor must have shape (k, k, k, k), got {h_tilde.shape}")
    asym = float(np.max(np.abs(h_tilde - np.conj(h_tilde.transpose(3, 2, 1, 0))))) if h_tilde.size else 0.0
    if asym > HERMITIAN_TOLERANCE:
        raise HamiltonianError(f"Two-body tensor is not Hermitian (deviation {asym:.3e})")

    total: PauliSum = {}
    if constant != 0.0:
        total['I' * k] = complex(constant)
    for p, q, r, s in zip(*np.nonzero(np.abs(h_tilde) >= PRUNE_THRESHOLD)):
        if p == q or r == s:
            continue
        coef = 0.5 * h_tilde[p, q, r, s]
        for string in jordan_wigner([(p, True), (q, True), (r, False), (s, False)], k):
            total[string.letters] = total.get(string.letters, 0.0) + coef * string.coefficient

    total = _prune(total)
    for letters, coef in total.items():
        if abs(coef.imag) > HERMITIAN_TOLERANCE * max(1.0, abs(coef)):
            raise HamiltonianError(f"Combined coefficient of {letters} is not real ({coef})")
    hamiltonian = QubitHamiltonian([PauliString(coef.real, letters) for letters, coef in sorted(total.items())], k)
    logger.info(f"Built qubit Hamiltonian with {len(hamiltonian)} Pauli strings on {k} qubits")
    return hamiltonian


def molecular_hamiltonian(integrals: IntegralSet, n_electrons: int) -> QubitHamiltonian:
    """Reduced two-body form plus the core energy as an identity string"""
    return build_qubit_hamiltonian(reduce_to_two_body(integrals, n_electrons), constant=integrals.core_energy)


def dense_annihilation(mode: int, n_modes: int) -> np.ndarray:
    """Occupation-number matrix of a_j with sign (-1)^(occupied modes below j)"""
    check_dense_size(n_modes, "dense ladder operator")
    if not 0 <= mode < n_modes:
        raise HamiltonianError(f"Mode {mode} out of range for {n_modes} modes")
    dim = 1 << n_modes
    a = np.zeros((dim, dim), dtype=np.complex128)
    below = (1 << mode) - 1
    for x in range(dim):
        if (x >> mode) & 1:
            a[x ^ (1 << mode), x] = (-1) ** bin(x & below).count('1')
    return a


def number_operator(n_modes: int) -> np.ndarray:
    dim = 1 << n_modes
    return np.diag([bin(x).count('1') for x in range(dim)]).astype(np.complex128)


def two_body_matrix(h_tilde: np.ndarray) -> np.ndarray:
    """Dense 1/2 sum h_pqrs a_p^ a_q^ a_r a_s"""
    k = h_tilde.shape[0]
    a = [dense_annihilation(j, k) for j in range(k)]
    ad = [m.conj().T for m in a]
    total = np.zeros((1 << k, 1 << k), dtype=np.complex128)
    for p, q, r, s in zip(*np.nonzero(np.abs(h_tilde) >= PRUNE_THRESHOLD)):
        total += 0.5 * h_tilde[p, q, r, s] * (ad[p] @ ad[q] @ a[r] @ a[s])
    return total


def fermionic_hamiltonian_matrix(integrals: IntegralSet) -> np.ndarray:
    """Dense sum h_pq a_p^ a_q + 1/2 sum h_pqrs a_p^ a_q^ a_r a_s (core energy excluded)"""
    k = integrals.modes
    a = [dense_annihilation(j, k) for j in range(k)]
    total = two_body_matrix(integrals.two_body)
    for p, q in zip(*np.nonzero(np.abs(integrals.one_body) >= PRUNE_THRESHOLD)):
        total += integrals.one_body[p, q] * (a[p].conj().T @ a[q])
    return total


def sector_spectrum(matrix: np.ndarray, n_modes: int, n_electrons: int) -> np.ndarray:
    """Eigenvalues of the block with the given particle number"""
    indices = [x for x in range(1 << n_modes) if bin(x).count('1') == n_electrons]
    block = matrix[np.ix_(indices, indices)]
    return np.linalg.eigvalsh(0.5 * (block + block.conj().T))


def pauli_string_circuit(letters: str, angle: float, controls: Sequence[int] = ()) -> List[Operation]:
    """
    Gate list for exp(-i angle P), P = letters

    Basis change (H for X, Rx(pi/2) for Y), CNOT parity ladder onto the last
    active qubit, Rz(2 angle), then the ladder and basis change undone. With
    controls only the Rz is controlled; an identity string becomes a PHASE on
    the (single) control, or nothing without one.
    """
    active = [q for q, letter in enumerate(letters) if letter != 'I']
    controls = list(controls)
    if not active:
        if not controls:
            return []
        return [(standard_gate("PHASE", -angle), controls[-1:], controls[:-1])]

    change = []
    for q in active:
        if letters[q] == 'X':
            change.append((standard_gate("H"), [q], []))
        elif letters[q] == 'Y':
            change.append((standard_gate("Rx", np.pi / 2), [q], []))
    cnot = standard_gate("CNOT")
    ladder = [(cnot, [active[i + 1], active[i]], []) for i in range(len(active) - 1)]
    rotation = [(standard_gate("Rz", 2.0 * angle), [active[-1]], controls)]
    undo_ladder = list(reversed(ladder))
    undo_change = [(gate.dagger(), targets, ctrl) for gate, targets, ctrl in change]
    return change + ladder + rotation + undo_ladder + undo_change


def evolve_pauli_string(state: StateVector, string: PauliString, angle: float) -> StateVector:
    """exp(-i angle * coefficient * P) by the parity-ladder circuit"""
    if abs(string.coefficient.imag) > HERMITIAN_TOLERANCE:
        raise HamiltonianError(f"String {string.letters} has a complex coefficient")
    if string.n_qubits != state.n_qubits:
        raise HamiltonianError(f"String spans {string.n_qubits} qubits, state has {state.n_qubits}")
    theta = angle * string.coefficient.real
    if string.is_identity():
        return StateVector(np.exp(-1j * theta) * state.amplitudes)
    amps = state.amplitudes.copy()
    for gate, targets, controls in pauli_string_circuit(string.letters, theta):
        apply_matrix_inplace(amps, state.n_qubits, gate.matrix, targets, controls)
    return StateVector(amps)


class TrotterizedEvolver:
    """
    Product-formula approximation of the encoded evolver W = exp(+i (H - e_min) tau)

    The exponentials exp(+i c P tau) are planned with trotter.build_plan for
    t = -tau; the e_min shift is a phase on the control (or a scalar when dense).
    """

    def __init__(self, hamiltonian: QubitHamiltonian, encoding: SpectralEncoding, order: int = 2, slices: int = 1):
        self.hamiltonian = hamiltonian
        self.encoding = encoding
        self.strings = [s for s in hamiltonian.strings if not s.is_identity()]
        self.shift = encoding.e_min - hamiltonian.constant()
        self.order = order
        self.slices = slices
        self.plan = build_plan(self.strings, -encoding.tau, order, slices) if self.strings else None

    def operations(self, controls: Sequence[int] = ()) -> List[Operation]:
        ops: List[Operation] = []
        if self.plan is not None:
            for index, duration in self.plan.steps:
                string = self.strings[index]
                ops.extend(pauli_string_circuit(string.letters, string.coefficient.real * duration, controls))
        return ops

    def controlled_step(self, amplitudes: np.ndarray, n_qubits: int, control: int) -> np.ndarray:
        for gate, targets, controls in self.operations([control]):
            apply_matrix_inplace(amplitudes, n_qubits, gate.matrix, targets, controls)
        apply_matrix_inplace(amplitudes, n_qubits, standard_gate("PHASE", -self.shift * self.encoding.tau).matrix,
                             [control])
        return amplitudes

    def dense_unitary(self) -> np.ndarray:
        n = self.hamiltonian.n_qubits
        check_dense_size(n, "Trotterized evolver")
        full = np.eye(1 << n, dtype=np.complex128)
        for gate, targets, controls in self.operations():
            apply_matrix_inplace(full, n, gate.matrix, targets, controls)
        return np.exp(-1j * self.shift * self.encoding.tau) * full

    def eigenphases(self) -> np.ndarray:
        """Eigenphases of the Trotterized W in [0, 1)"""
        return np.sort(np.mod(np.angle(np.linalg.eigvals(self.dense_unitary())) / (2.0 * np.pi), 1.0))

    def decoded_energies(self) -> np.ndarray:
        return np.array([self.encoding.energy_of(phase) for phase in self.eigenphases()])

    def trial_spectrum(self, trial: StateVector) -> Tuple[np.ndarray, np.ndarray]:
        """
        Decoded eigen-energies of the Trotterized W and the trial's weight on each

        A phase within half an outcome of 1 is read as slightly negative, so a
        level sitting at e_min decodes next to e_min rather than at e_max.
        """
        if trial.n_qubits != self.hamiltonian.n_qubits:
            raise HamiltonianError(f"Trial has {trial.n_qubits} qubits, Hamiltonian {self.hamiltonian.n_qubits}")
        T, Z = schur(self.dense_unitary(), output='complex')
        phases = np.mod(np.angle(np.diag(T)) / (2.0 * np.pi), 1.0)
        phases = np.where(phases > 1.0 - 2.0 ** (-self.encoding.m - 1), phases - 1.0, phases)
        energies = np.array([self.encoding.energy_of(phase) for phase in phases])
        weights = np.abs(Z.conj().T @ trial.amplitudes) ** 2
        order = np.argsort(energies)
        return energies[order], weights[order]

    def power_applier(self, circuit: bool = False):
        if circuit:
            return RepeatedPowerApplier(self.controlled_step)
        return DensePowerApplier(self.dense_unitary())


def check_trotter_resolution(hamiltonian: QubitHamiltonian, encoding: SpectralEncoding, order: int,
                             slices: int) -> float:
    """
    Drift of decoded energies between `slices` and `2 * slices`

    Raises:
        TrotterResolutionError: Drift exceeds one outcome band
    """
    coarse = TrotterizedEvolver(hamiltonian, encoding, order, slices).eigenphases()
    fine = TrotterizedEvolver(hamiltonian, encoding, order, 2 * slices).eigenphases()
    # phases live on a circle: distance to the nearest partner, both directions
    gap = np.abs(np.mod(coarse[:, None] - fine[None, :] + 0.5, 1.0) - 0.5)
    turns = max(float(np.max(np.min(gap, axis=1))), float(np.max(np.min(gap, axis=0))))
    drift = turns * 2.0 * np.pi / encoding.tau
    logger.debug(f"Trotter drift at order {order}, {slices} slices: {drift:.3e} (band {encoding.resolution:.3e})")
    if drift > encoding.resolution:
        raise TrotterResolutionError(
            f"Decoded energies move by {drift:.3e} when slices double from {slices} "
            f"(band {encoding.resolution:.3e}); increase slices or order")
    return drift


def energy_measurement(applier, trial: StateVector, m: int, encoding: SpectralEncoding,
                       rng: np.random.Generator) -> Tuple[float, int, float, StateVector]:
    """
    One PEA energy readout

    Returns:
        (decoded energy, ancilla outcome, phase, post-measurement register)
    """
    estimate, register = phase_estimation(applier, trial, m, rng)
    return encoding.energy_of(estimate.phase), estimate.register_outcome, estimate.phase, register


def ground_band(p: int, encoding: SpectralEncoding) -> float:
    """Half-width of the accepted energy window: 2^-p of the encoded range"""
    return 2.0 ** (-p) * 2.0 * np.pi / encoding.tau


def estimate_ground_energy(hamiltonian: QubitHamiltonian, trial: StateVector, p: int, epsilon: float,
                           order: int, slices: int, rng: np.random.Generator, max_trials: int = 1000,
                           circuit: bool = False, check_resolution: bool = True,
                           ground_energy: Optional[float] = None) -> EnergyEstimate:
    """
    Repeat PEA readouts until an outcome lands in the ground band

    The band is centred on the lowest level of the Trotterized W that the
    trial overlaps (weight above OVERLAP_FLOOR), or on ground_energy when the
    caller knows it, and is ground_band(p) wide on each side. Excited levels
    are rejected, so the expected trial count is 1/F for ground-band weight F.

    Args:
        hamiltonian: Qubit Hamiltonian
        trial: Normalized trial register
        p: Bits of precision
        epsilon: Failure probability of the p-bit readout
        order: Product-formula order
        slices: Trotter slices per application of W
        rng: Random stream
        max_trials: Give up (accepted=False) after this many readouts
        circuit: Use the gate-level controlled evolver instead of dense powers
        check_resolution: Verify decoded energies are stable under slice doubling
        ground_energy: Known ground level; skips the dense eigen-decomposition

    Raises:
        TrotterResolutionError: Slicing too coarse
        HamiltonianError: Trial size mismatch, or a trial with no weight on any level
    """
    if trial.n_qubits != hamiltonian.n_qubits:
        raise HamiltonianError(f"Trial has {trial.n_qubits} qubits, Hamiltonian {hamiltonian.n_qubits}")
    m = ancilla_budget(p, epsilon)
    lower, upper = hamiltonian.spectral_bounds()
    encoding = SpectralEncoding(lower, upper, m)

    if check_resolution:
        check_trotter_resolution(hamiltonian, encoding, order, slices)

    evolver = TrotterizedEvolver(hamiltonian, encoding, order, slices)
    band = ground_band(p, encoding)
    overlap = None
    if ground_energy is None:
        energies, weights = evolver.trial_spectrum(trial)
        overlapped = np.flatnonzero(weights > OVERLAP_FLOOR)
        if overlapped.size == 0:
            raise HamiltonianError("Trial has no weight on any eigenvector of the evolver")
        ground_energy = float(energies[overlapped[0]])
        overlap = float(np.sum(weights[np.abs(energies - ground_energy) <= band]))
        logger.debug(f"Ground band {ground_energy:.6f} +/- {band:.3e}, trial weight {overlap:.4f}")

    applier = evolver.power_applier(circuit)
    energy, outcome, phase = 0.0, 0, 0.0
    for trials in range(1, max_trials + 1):
        energy, outcome, phase, _ = energy_measurement(applier, trial, m, encoding, rng)
        if abs(energy - ground_energy) <= band:
            logger.info(f"Ground band reached after {trials} readouts: E = {energy:.6f} ({m} ancillas)")
            return EnergyEstimate(energy=energy, accepted=True, trials=trials, phase=phase, register_outcome=outcome,
                                  target_energy=ground_energy, band=band, overlap=overlap)

    logger.warning(f"No ground-band outcome in {max_trials} readouts (last E = {energy:.6f})")
    return EnergyEstimate(energy=energy, accepted=False, trials=max_trials, phase=phase, register_outcome=outcome,
                          target_energy=ground_energy, band=band, overlap=overlap)


def hartree_fock_state(n_modes: int, n_electrons: int) -> StateVector:
    """Lowest n_electrons modes occupied"""
    if not 0 <= n_electrons <= n_modes:
        raise HamiltonianError(f"Cannot place {n_electrons} electrons in {n_modes} modes")
    amps = np.zeros(1 << n_modes, dtype=np.complex128)
    amps[(1 << n_electrons) - 1] = 1.0
    return StateVector(amps)
