"""
Markovian open-system dynamics in Lindblad form

Density matrices are vectorized by column stacking, vec(A X B) = (B^T kron A) vec(X),
so a generator is a dense D^2 x D^2 matrix and a channel is its exponential.
The dissipator is taken exactly as
    sum_ab m_ab ([L_a rho, L_b^dag] + [L_a, rho L_b^dag])
with m positive semidefinite and every L_a traceless.
"""
import logging
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.linalg import expm

from .core import DensityMatrix, HermitianOperator, SimulationError, StateValidationError, as_matrix
from .trotter import build_plan

logger = logging.getLogger(__name__)

MAX_EXACT_DIMENSION = 32
PSD_TOLERANCE = 1e-10
TRACELESS_TOLERANCE = 1e-12
TRACE_TOLERANCE = 1e-10
CHOI_TOLERANCE = 1e-8

SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=np.complex128)
SIGMA_Z = np.diag([1.0, -1.0]).astype(np.complex128)


class LindbladError(SimulationError, ValueError):
    """Custom exception for invalid models and channels"""
    pass


def vectorize(matrix: np.ndarray) -> np.ndarray:
    return np.asarray(matrix, dtype=np.complex128).reshape(-1, order='F')


def unvectorize(vector: np.ndarray, dimension: int) -> np.ndarray:
    return np.asarray(vector).reshape(dimension, dimension, order='F')


class LindbladModel:
    """Hamiltonian H, PSD coefficient matrix m and traceless jump basis L_a"""

    def __init__(self, hamiltonian, rates=None, operators: Sequence = ()):
        H = hamiltonian if isinstance(hamiltonian, HermitianOperator) else HermitianOperator(hamiltonian)
        D = H.dimension
        operators = [np.asarray(as_matrix(op), dtype=np.complex128) for op in operators]
        K = len(operators)
        rates = np.zeros((K, K), dtype=np.complex128) if rates is None else np.atleast_2d(
            np.asarray(rates, dtype=np.complex128))

        if rates.shape != (K, K):
            raise LindbladError(f"Coefficient matrix has shape {rates.shape}, expected {(K, K)}")
        for index, op in enumerate(operators):
            if op.shape != (D, D):
                raise LindbladError(f"Operator {index} has shape {op.shape}, expected {(D, D)}")
            trace = abs(np.trace(op))
            if trace > TRACELESS_TOLERANCE:
                raise LindbladError(f"Operator {index} is not traceless (|Tr| = {trace:.3e})")
        if K:
            if np.max(np.abs(rates - rates.conj().T)) > PSD_TOLERANCE:
                raise LindbladError("Coefficient matrix is not Hermitian")
            lowest = float(np.linalg.eigvalsh(0.5 * (rates + rates.conj().T))[0])
            if lowest < -PSD_TOLERANCE:
                raise LindbladError(f"Coefficient matrix is not positive semidefinite (eigenvalue {lowest:.3e})")

        self.hamiltonian = H
        self.rates = rates
        self.operators = operators

    @property
    def dimension(self) -> int:
        return self.hamiltonian.dimension

    @property
    def is_closed(self) -> bool:
        return not self.operators or not np.any(self.rates)

    def __repr__(self):
        return f"LindbladModel(D={self.dimension}, jump_operators={len(self.operators)})"


def dephasing_model(rate: float, hamiltonian=None) -> LindbladModel:
    """Single-qubit dephasing with L = sigma_z / sqrt(2)"""
    H = np.zeros((2, 2)) if hamiltonian is None else hamiltonian
    return LindbladModel(H, [[rate]], [SIGMA_Z / np.sqrt(2.0)])


def decay_model(rate: float, hamiltonian=None) -> LindbladModel:
    """Single-qubit amplitude damping |1> -> |0> with L = sigma_minus"""
    H = np.zeros((2, 2)) if hamiltonian is None else hamiltonian
    return LindbladModel(H, [[rate]], [SIGMA_MINUS])


def split_model(model: LindbladModel) -> Tuple[LindbladModel, LindbladModel]:
    """(Hamiltonian part, dissipator part) with the same total generator"""
    coherent = LindbladModel(model.hamiltonian)
    dissipative = LindbladModel(np.zeros_like(model.hamiltonian.matrix), model.rates, model.operators)
    return coherent, dissipative


def build_lindbladian(model: LindbladModel) -> np.ndarray:
    """
    Dense generator acting on column-stacked density matrices

    Returns:
        D^2 x D^2 complex matrix of -i[H, .] plus the dissipator
    """
    D = model.dimension
    identity = np.eye(D, dtype=np.complex128)
    H = model.hamiltonian.matrix
    generator = -1j * (np.kron(identity, H) - np.kron(H.T, identity))

    for a, L_a in enumerate(model.operators):
        for b, L_b in enumerate(model.operators):
            coefficient = model.rates[a, b]
            if coefficient == 0:
                continue
            product = L_b.conj().T @ L_a
            generator += coefficient * (2.0 * np.kron(L_b.conj(), L_a)
                                        - np.kron(identity, product)
                                        - np.kron(product.T, identity))
    return generator


class ChannelMatrix:
    """Linear map on column-stacked D x D matrices"""

    def __init__(self, matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=np.complex128)
        D = int(round(np.sqrt(matrix.shape[0])))
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or D * D != matrix.shape[0]:
            raise LindbladError(f"Channel matrix must be D^2 x D^2, got shape {matrix.shape}")
        self.matrix = matrix
        self.dimension = D

    @classmethod
    def identity(cls, dimension: int) -> "ChannelMatrix":
        return cls(np.eye(dimension * dimension, dtype=np.complex128))

    def then(self, other: "ChannelMatrix") -> "ChannelMatrix":
        """Apply self, then other"""
        if other.dimension != self.dimension:
            raise LindbladError(f"Cannot compose channels on dimensions {self.dimension} and {other.dimension}")
        return ChannelMatrix(other.matrix @ self.matrix)

    def apply_matrix(self, rho: np.ndarray) -> np.ndarray:
        return unvectorize(self.matrix @ vectorize(rho), self.dimension)

    def apply(self, rho: DensityMatrix) -> DensityMatrix:
        if rho.dimension != self.dimension:
            raise LindbladError(f"State dimension {rho.dimension} does not match channel dimension {self.dimension}")
        return DensityMatrix(self.apply_matrix(rho.matrix))

    def trace_deviation(self) -> float:
        """max |Tr K(X) - Tr X| over basis matrices X"""
        row = vectorize(np.eye(self.dimension))
        return float(np.max(np.abs(row @ self.matrix - row)))

    def choi(self) -> np.ndarray:
        """sum_ij |i><j| kron K(|i><j|)"""
        D = self.dimension
        choi = np.zeros((D * D, D * D), dtype=np.complex128)
        for i in range(D):
            for j in range(D):
                unit = np.zeros((D, D), dtype=np.complex128)
                unit[i, j] = 1.0
                choi += np.kron(unit, self.apply_matrix(unit))
        return choi

    def min_choi_eigenvalue(self) -> float:
        choi = self.choi()
        return float(np.linalg.eigvalsh(0.5 * (choi + choi.conj().T))[0])

    def distance(self, other: "ChannelMatrix") -> float:
        """Spectral norm of the superoperator difference"""
        return float(np.linalg.norm(self.matrix - other.matrix, 2))

    def checks(self) -> Dict[str, bool]:
        return {
            'trace_preserving': self.trace_deviation() <= TRACE_TOLERANCE,
            'completely_positive': self.min_choi_eigenvalue() >= -CHOI_TOLERANCE,
        }

    def __repr__(self):
        return f"ChannelMatrix(D={self.dimension})"


def _check_exact_size(dimension: int):
    if dimension > MAX_EXACT_DIMENSION:
        raise LindbladError(f"Exact propagation supports D <= {MAX_EXACT_DIMENSION}, got {dimension}")


def exact_channel(model: LindbladModel, t: float) -> ChannelMatrix:
    _check_exact_size(model.dimension)
    return ChannelMatrix(expm(t * build_lindbladian(model)))


def propagate_exact(model: LindbladModel, rho0: DensityMatrix, t: float) -> DensityMatrix:
    """
    rho(t) = exp(t L) rho0

    Raises:
        LindbladError: D > 32, or the output is not a density matrix
    """
    if rho0.dimension != model.dimension:
        raise LindbladError(f"State dimension {rho0.dimension} does not match model dimension {model.dimension}")
    if t == 0:
        return DensityMatrix(rho0.matrix)
    channel = exact_channel(model, t)
    try:
        return DensityMatrix(channel.apply_matrix(rho0.matrix))
    except StateValidationError as e:
        raise LindbladError(f"Propagated state failed validation at t = {t}: {e}") from e


def trotterized_channel(models: Sequence[LindbladModel], dt: float, steps: int, strang: bool = False) -> ChannelMatrix:
    """
    Split propagator for sum_i L_i over steps * dt

    Each step applies exp(dt L_1), ..., exp(dt L_k) in turn; with strang the
    symmetric second-order arrangement is used instead.

    Raises:
        LindbladError: Models act on different dimensions
    """
    models = list(models)
    if not models:
        raise LindbladError("Need at least one model to split")
    D = models[0].dimension
    for model in models[1:]:
        if model.dimension != D:
            raise LindbladError(f"Models act on dimensions {D} and {model.dimension}")
    if dt <= 0 or steps < 1:
        raise LindbladError(f"Need dt > 0 and steps >= 1, got dt={dt}, steps={steps}")
    _check_exact_size(D)

    generators = [build_lindbladian(model) for model in models]
    plan = build_plan(models, dt * steps, 2 if strang else 1, steps)
    cache = {}
    total = np.eye(D * D, dtype=np.complex128)
    for index, duration in plan.steps:
        key = (index, duration)
        if key not in cache:
            cache[key] = expm(duration * generators[index])
        total = cache[key] @ total
    return ChannelMatrix(total)


def splitting_convergence(model: LindbladModel, total_time: float, step_counts: Sequence[int],
                          strang: bool = False) -> List[dict]:
    """Split-vs-exact channel distance for each step count (Hamiltonian part vs dissipator part)"""
    exact = exact_channel(model, total_time)
    parts = split_model(model)
    rows = []
    for steps in step_counts:
        channel = trotterized_channel(parts, total_time / steps, steps, strang=strang)
        rows.append({
            'steps': steps,
            'dt': total_time / steps,
            'distance': channel.distance(exact),
            'trace_deviation': channel.trace_deviation(),
            'min_choi_eigenvalue': channel.min_choi_eigenvalue(),
        })
        logger.debug(f"Split channel with {steps} steps: distance {rows[-1]['distance']:.3e}")
    return rows


def trajectory_columns(dimension: int) -> List[str]:
    columns = ['time'] + [f'population_{i}' for i in range(dimension)]
    columns += [f'coherence_{i}_{j}' for i in range(dimension) for j in range(i + 1, dimension)]
    return columns + ['trace']


def lindblad_trajectory(model: LindbladModel, rho0: DensityMatrix, times: Sequence[float], runner=None) -> List[dict]:
    """Populations, coherence magnitudes and trace of rho(t) on a time grid"""
    D = model.dimension

    def row(t: float) -> dict:
        rho = propagate_exact(model, rho0, t).matrix
        entry = {'time': float(t), 'trace': float(np.real(np.trace(rho)))}
        for i in range(D):
            entry[f'population_{i}'] = float(np.real(rho[i, i]))
            for j in range(i + 1, D):
                entry[f'coherence_{i}_{j}'] = float(abs(rho[i, j]))
        return entry

    if runner is not None:
        return runner.map(row, list(times), label="lindblad trajectory")
    return [row(t) for t in times]
