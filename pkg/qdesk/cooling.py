"""
Algorithmic cooling by ancilla interference

One cooling step puts an ancilla through H, Rz_phase(gamma), controls
U = exp(-iHt) on the system, applies H again and measures the ancilla.
Outcome j leaves the system in Lambda_j |psi> with
Lambda_j = (I + (-1)^(j+1) i e^(i gamma) U) / 2, which reweights eigencomponent k
by (1 -/+ sin phi_k) / 2 where phi_k = E_k t - gamma. Within the phase window
outcome 0 lowers the energy; a walker moving +1 on outcome 0 and -1 on
outcome 1 that is restarted whenever it falls below zero is cooled.
"""
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import (HermitianOperator, SimulationError, StateVector, apply_matrix_inplace, dense_exponential,
                   expectation_value, gershgorin_bounds, measure_qubit, standard_gate)
from .models import CoolingParams, EnergyBalance, WalkStatistics
from .utils import rng_stream

logger = logging.getLogger(__name__)

WINDOW_SLACK = 1e-12
DEFAULT_MAX_STEPS = 100000


class CoolingWindowError(SimulationError, ValueError):
    """Raised when some phi_k leaves [-pi/2, pi/2]"""
    pass


class CoolingWalkError(SimulationError):
    """Raised when a walk exhausts its restarts; carries the best state seen"""

    def __init__(self, message: str, best_state: Optional[StateVector] = None, best_energy: Optional[float] = None,
                 statistics: Optional[WalkStatistics] = None):
        super().__init__(message)
        self.best_state = best_state
        self.best_energy = best_energy
        self.statistics = statistics


def _as_hermitian(H) -> HermitianOperator:
    return H if isinstance(H, HermitianOperator) else HermitianOperator(H)


def check_window(params: CoolingParams, energies: Sequence[float]):
    phases = np.asarray(params.phases(energies))
    outside = phases[(phases < -np.pi / 2 - WINDOW_SLACK) | (phases > np.pi / 2 + WINDOW_SLACK)]
    if outside.size:
        raise CoolingWindowError(f"Phases {outside.tolist()} fall outside [-pi/2, pi/2]; "
                                 f"choose t and gamma with choose_params")


def choose_params(H, margin: float = 0.1, dense: bool = True) -> CoolingParams:
    """
    t and gamma mapping the spectrum onto [-pi/2 + margin, pi/2 - margin]

    Args:
        H: Hamiltonian
        margin: Safety margin in radians (>= 0)
        dense: Use exact eigenvalue bounds; Gershgorin discs otherwise
    """
    if margin < 0:
        raise CoolingWindowError(f"Margin must be >= 0, got {margin}")
    if margin >= np.pi / 2:
        raise CoolingWindowError(f"Margin {margin} leaves no room in the window")
    H = _as_hermitian(H)
    if dense:
        values = H.eigenvalues()
        e_min, e_max = float(values[0]), float(values[-1])
    else:
        e_min, e_max = gershgorin_bounds(H)

    width = e_max - e_min
    if width < 1e-12:
        return CoolingParams(gamma=e_min, t=1.0, margin=margin)
    t = (np.pi - 2.0 * margin) / width
    return CoolingParams(gamma=t * (e_max + e_min) / 2.0, t=t, margin=margin)


def evolution_operator(H, params: CoolingParams) -> np.ndarray:
    return dense_exponential(_as_hermitian(H), -1j * params.t)


def cooling_step(state: StateVector, H, params: CoolingParams, rng: np.random.Generator,
                 unitary: Optional[np.ndarray] = None) -> Tuple[int, StateVector, float]:
    """
    One ancilla-interference step with a measured ancilla

    Args:
        state: System state
        H: Hamiltonian
        params: Window parameters
        rng: Random stream for the ancilla measurement
        unitary: Controlled evolution to use instead of exp(-iHt) (e.g. a Trotterized plan)

    Returns:
        (outcome bit, post-measurement system state, outcome probability)

    Raises:
        CoolingWindowError: Some eigenphase leaves the window
    """
    H = _as_hermitian(H)
    check_window(params, H.eigenvalues())
    U = evolution_operator(H, params) if unitary is None else np.asarray(unitary, dtype=np.complex128)

    n = state.n_qubits
    amps = np.kron([1.0, 0.0], state.amplitudes).astype(np.complex128)
    hadamard = standard_gate("H").matrix
    apply_matrix_inplace(amps, n + 1, hadamard, [n])
    apply_matrix_inplace(amps, n + 1, standard_gate("Rz_phase", params.gamma).matrix, [n])
    apply_matrix_inplace(amps, n + 1, U, list(range(n)), [n])
    apply_matrix_inplace(amps, n + 1, hadamard, [n])

    outcome, collapsed, probability = measure_qubit(StateVector(amps, normalize=True), n, rng.random())
    branch = collapsed.amplitudes.reshape(2, -1)[outcome]
    return outcome, StateVector(branch, normalize=True), probability


def apply_lambda(state: StateVector, H, params: CoolingParams, outcome: int,
                 unitary: Optional[np.ndarray] = None) -> Tuple[StateVector, float]:
    """Closed-form Lambda_j |psi> (normalized) and its probability"""
    if outcome not in (0, 1):
        raise ValueError(f"Outcome must be 0 or 1, got {outcome}")
    U = evolution_operator(H, params) if unitary is None else np.asarray(unitary, dtype=np.complex128)
    sign = 1.0 if outcome == 1 else -1.0
    branch = 0.5 * (state.amplitudes + sign * 1j * np.exp(1j * params.gamma) * (U @ state.amplitudes))
    probability = float(np.vdot(branch, branch).real)
    if probability <= 0.0:
        raise SimulationError(f"Outcome {outcome} has zero probability")
    return StateVector(branch, normalize=True), probability


def outcome_probability(state: StateVector, H, params: CoolingParams) -> float:
    """p0 = sum_k |c_k|^2 (1 - sin phi_k) / 2"""
    H = _as_hermitian(H)
    values, vectors = H.eigh()
    weights = np.abs(vectors.conj().T @ state.amplitudes) ** 2
    return float(np.sum(weights * (1.0 - np.sin(params.phases(values))) / 2.0))


def energy_balance_check(state: StateVector, H, params: CoolingParams) -> EnergyBalance:
    """Branch probabilities and energies; p0 E0 + p1 E1 = E_in on average"""
    H = _as_hermitian(H)
    check_window(params, H.eigenvalues())
    E_in = expectation_value(state, H)
    U = evolution_operator(H, params)
    branches = []
    for outcome in (0, 1):
        sign = 1.0 if outcome == 1 else -1.0
        raw = 0.5 * (state.amplitudes + sign * 1j * np.exp(1j * params.gamma) * (U @ state.amplitudes))
        p = float(np.vdot(raw, raw).real)
        energy = expectation_value(StateVector(raw, normalize=True), H) if p > 1e-15 else 0.0
        branches.append((p, energy))
    (p0, E0), (p1, E1) = branches
    residual = abs(p0 * E0 + p1 * E1 - E_in)
    return EnergyBalance(E_in=E_in, p0=p0, E0_branch=E0, p1=p1, E1_branch=E1, residual=residual)


class Walker:
    """Position x = #zeros - #ones of the outcome history"""

    def __init__(self, state: StateVector):
        self.x = 0
        self.state = state
        self.history: List[int] = []

    def record(self, outcome: int, state: StateVector):
        self.history.append(outcome)
        self.x += 1 if outcome == 0 else -1
        self.state = state


def run_walk(state0: StateVector, H, params: CoolingParams, x_stop: int, max_restarts: int,
             rng: np.random.Generator, unitary: Optional[np.ndarray] = None,
             max_steps: int = DEFAULT_MAX_STEPS) -> Tuple[StateVector, WalkStatistics]:
    """
    Cooling random walk, restarted from state0 whenever x < 0

    Returns:
        (state at x = x_stop, WalkStatistics)

    Raises:
        CoolingWalkError: Restart or step budget exhausted (best state attached)
    """
    if x_stop < 1:
        raise ValueError(f"x_stop must be >= 1, got {x_stop}")
    H = _as_hermitian(H)
    check_window(params, H.eigenvalues())
    U = evolution_operator(H, params) if unitary is None else unitary

    initial_energy = expectation_value(state0, H)
    best_state, best_energy = state0, initial_energy
    walker = Walker(state0)
    restarts = 0
    steps = 0

    while walker.x < x_stop:
        if steps >= max_steps:
            raise CoolingWalkError(f"Walk did not reach x = {x_stop} in {max_steps} steps", best_state, best_energy)
        outcome, state, _ = cooling_step(walker.state, H, params, rng, unitary=U)
        steps += 1
        walker.record(outcome, state)

        energy = expectation_value(state, H)
        if energy < best_energy:
            best_state, best_energy = state, energy

        if walker.x < 0:
            restarts += 1
            if restarts > max_restarts:
                stats = WalkStatistics(restarts=restarts, total_steps=steps, final_x=walker.x,
                                       final_energy=energy, initial_energy=initial_energy)
                raise CoolingWalkError(f"Walk exceeded {max_restarts} restarts (best energy {best_energy:.6f})",
                                       best_state, best_energy, stats)
            walker = Walker(state0)

    final_energy = expectation_value(walker.state, H)
    logger.debug(f"Walk reached x = {x_stop} after {steps} steps and {restarts} restarts (E = {final_energy:.6f})")
    return walker.state, WalkStatistics(restarts=restarts, total_steps=steps, final_x=walker.x,
                                        final_energy=final_energy, initial_energy=initial_energy)


def run_ensemble(state0: StateVector, H, params: CoolingParams, x_stop: int, walkers: int, seed: int,
                 max_restarts: int = 1000, runner=None, first_stream: int = 0) -> List[dict]:
    """
    Independent walkers, walker i drawing from rng_stream(seed, first_stream + i)

    Returns:
        Rows with walker, restarts, steps, final_energy, ground_fidelity
    """
    H = _as_hermitian(H)
    U = evolution_operator(H, params)
    ground = H.ground_state()

    def walk(index: int) -> dict:
        final, stats = run_walk(state0, H, params, x_stop, max_restarts, rng_stream(seed, first_stream + index),
                               unitary=U)
        return {'walker': index, 'restarts': stats.restarts, 'steps': stats.total_steps,
                'final_energy': stats.final_energy,
                'ground_fidelity': min(1.0, abs(np.vdot(ground.amplitudes, final.amplitudes)) ** 2)}

    if runner is not None:
        return runner.map(walk, range(walkers), label=f"cooling ensemble (x_stop={x_stop})")
    return [walk(i) for i in range(walkers)]
