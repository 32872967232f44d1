"""
Adiabatic state preparation, spectral diagnostics and the probe-qubit
non-destructive energy measurement
"""
import logging
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import least_squares, minimize_scalar

from .core import (DimensionError, HermitianOperator, SimulationError, StateVector, apply_matrix_inplace,
                   as_matrix, check_dense_size, dense_exponential, expectation_value, standard_gate)
from .models import ProbeFit, TimeBounds
from .spectral import hamiltonian_power_applier, project_ground_state

logger = logging.getLogger(__name__)

MAX_TRACE_QUBITS = 10
DEGENERACY_THRESHOLD = 1e-10
COMMUTATOR_TOLERANCE = 1e-10
FIT_RESIDUAL_LIMIT = 1e-8
NONDEMOLITION_TOLERANCE = 1e-10
NORM_DRIFT_LIMIT = 1e-8


class AdiabaticError(SimulationError, ValueError):
    """Custom exception for adiabatic evolution and probe protocol errors"""
    pass


class DegenerateGapError(AdiabaticError):
    """Raised when the ground state becomes degenerate along the path"""
    pass


class ProbeFitError(AdiabaticError):
    """Raised when the probe signal does not fit a single cosine"""
    pass


def linear_schedule(u: float) -> float:
    return u


def smoothstep_schedule(u: float) -> float:
    """s = 3u^2 - 2u^3 (zero slope at both ends)"""
    return u * u * (3.0 - 2.0 * u)


SCHEDULES = {
    'linear': linear_schedule,
    'smoothstep': smoothstep_schedule,
}


class Interpolation:
    """H(s) = (1 - s) H_i + s H_f with s = schedule(t / T)"""

    def __init__(self, H_i, H_f, schedule: Optional[Callable[[float], float]] = None):
        self.H_i = H_i if isinstance(H_i, HermitianOperator) else HermitianOperator(H_i, label="H_i")
        self.H_f = H_f if isinstance(H_f, HermitianOperator) else HermitianOperator(H_f, label="H_f")
        if self.H_i.n_qubits != self.H_f.n_qubits:
            raise DimensionError(f"H_i has {self.H_i.n_qubits} qubits, H_f has {self.H_f.n_qubits}")
        self.schedule = schedule or linear_schedule

        samples = np.array([self.schedule(u) for u in np.linspace(0.0, 1.0, 101)])
        if abs(samples[0]) > 1e-12 or abs(samples[-1] - 1.0) > 1e-12:
            raise AdiabaticError("Schedule must satisfy s(0) = 0 and s(1) = 1")
        if np.any(np.diff(samples) < -1e-12):
            raise AdiabaticError("Schedule must be monotone")

    @property
    def n_qubits(self) -> int:
        return self.H_i.n_qubits

    def matrix(self, s: float) -> np.ndarray:
        return (1.0 - s) * self.H_i.matrix + s * self.H_f.matrix

    def hamiltonian(self, s: float) -> HermitianOperator:
        return HermitianOperator(self.matrix(s), label=f"H({s:.4f})")

    def derivative_norm(self) -> float:
        """||dH/ds|| = ||H_f - H_i|| (spectral norm)"""
        return (self.H_f - self.H_i).norm()


def evolve_adiabatic(start: StateVector, interp: Interpolation, T: float, steps: int) -> StateVector:
    """
    Midpoint-rule stepwise propagation under H(s(t/T))

    Raises:
        AdiabaticError: Non-positive step count, negative T or norm drift
    """
    if steps < 1:
        raise AdiabaticError(f"Step count must be >= 1, got {steps}")
    if T < 0:
        raise AdiabaticError(f"Total time must be >= 0, got {T}")
    if start.n_qubits != interp.n_qubits:
        raise DimensionError(f"State has {start.n_qubits} qubits, Hamiltonian has {interp.n_qubits}")

    dt = T / steps
    amps = start.amplitudes.copy()
    worst_phase = 0.0
    for k in range(steps):
        H = interp.hamiltonian(interp.schedule((k + 0.5) / steps))
        worst_phase = max(worst_phase, H.norm() * dt)
        amps = dense_exponential(H, -1j * dt) @ amps

    drift = abs(float(np.linalg.norm(amps)) - 1.0)
    if drift > NORM_DRIFT_LIMIT:
        raise AdiabaticError(f"Norm drifted by {drift:.3e} over {steps} steps")
    if worst_phase > 1.0:
        logger.warning(f"Coarse adiabatic stepping: ||H|| dt reaches {worst_phase:.3f} (T={T}, steps={steps})")
    return StateVector(amps, normalize=True)


def _low_levels(interp: Interpolation, s: float) -> Tuple[float, float]:
    values = eigh(interp.matrix(s), eigvals_only=True, subset_by_index=[0, 1])
    return float(values[0]), float(values[1])


def _gap(interp: Interpolation, s: float) -> float:
    e0, e1 = _low_levels(interp, s)
    return e1 - e0


def _ground_vector(interp: Interpolation, s: float) -> Tuple[np.ndarray, float]:
    values, vectors = eigh(interp.matrix(s), subset_by_index=[0, 1])
    return vectors[:, 0], float(values[1] - values[0])


class SpectralTrace:
    """Lowest two levels along the path, the minimum gap and the path length"""

    def __init__(self, s_grid: np.ndarray, E0: np.ndarray, E1: np.ndarray, delta_min: float, s_min: float,
                 path_length: float):
        self.s_grid = s_grid
        self.E0 = E0
        self.E1 = E1
        self.delta_min = delta_min
        self.s_min = s_min
        self.path_length = path_length

    @property
    def gaps(self) -> np.ndarray:
        return self.E1 - self.E0

    def rows(self) -> List[dict]:
        return [{'s': float(s), 'E0': float(e0), 'E1': float(e1), 'gap': float(e1 - e0)}
                for s, e0, e1 in zip(self.s_grid, self.E0, self.E1)]


def _check_trace_size(interp: Interpolation):
    if interp.n_qubits > MAX_TRACE_QUBITS:
        raise DimensionError(f"Spectral trace limited to {MAX_TRACE_QUBITS} qubits, got {interp.n_qubits}")
    check_dense_size(interp.n_qubits, "spectral trace")


def _trace_on_grid(interp: Interpolation, points: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    grid = np.union1d(np.linspace(0.0, 1.0, points), [0.5])
    levels = np.array([_low_levels(interp, s) for s in grid])
    return grid, levels[:, 0], levels[:, 1]


def spectral_trace(interp: Interpolation, points: int = 65, max_refinements: int = 6) -> SpectralTrace:
    """
    Gap along the path, refined by grid doubling until the minimum moves < 1%
    and polished by a bounded scalar minimization around the grid minimum

    Raises:
        DegenerateGapError: Minimum gap below 1e-10
    """
    _check_trace_size(interp)
    if points < 3:
        raise AdiabaticError(f"Spectral trace needs at least 3 grid points, got {points}")

    grid, E0, E1 = _trace_on_grid(interp, points)
    delta = float(np.min(E1 - E0))
    for _ in range(max_refinements):
        if delta < DEGENERACY_THRESHOLD:
            break
        points = 2 * points - 1
        grid, E0, E1 = _trace_on_grid(interp, points)
        refined = float(np.min(E1 - E0))
        converged = abs(refined - delta) <= 0.01 * delta
        delta = refined
        if converged:
            break

    i = int(np.argmin(E1 - E0))
    s_min = float(grid[i])
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    if hi > lo:
        result = minimize_scalar(lambda s: _gap(interp, s), bounds=(lo, hi), method='bounded', options={'xatol': 1e-10})
        if result.fun < delta:
            delta, s_min = float(result.fun), float(result.x)

    if delta < DEGENERACY_THRESHOLD:
        raise DegenerateGapError(f"Ground state degenerate near s = {s_min:.6f} (gap {delta:.3e})")

    length = path_length(interp)
    logger.info(f"Spectral trace: delta_min = {delta:.6f} at s = {s_min:.4f}, path length {length:.6f}")
    return SpectralTrace(grid, E0, E1, delta, s_min, length)


def _arc(a: np.ndarray, b: np.ndarray) -> float:
    """Fubini-Study angle between two unit vectors, stable for small angles"""
    overlap = np.vdot(a, b)
    phase = overlap / abs(overlap) if abs(overlap) > 0 else 1.0
    return 2.0 * float(np.arcsin(min(1.0, np.linalg.norm(b - phase * a) / 2.0)))


def _path_sum(interp: Interpolation, points: int) -> float:
    total = 0.0
    previous = None
    for u in np.linspace(0.0, 1.0, points):
        vector, gap = _ground_vector(interp, interp.schedule(u))
        if gap < DEGENERACY_THRESHOLD:
            raise DegenerateGapError(f"Ground state degenerate at s = {interp.schedule(u):.6f}")
        if previous is not None:
            total += _arc(previous, vector)
        previous = vector
    return total


def path_length(interp: Interpolation, points: int = 65, tolerance: float = 1e-4, max_refinements: int = 8) -> float:
    """
    Length of the ground-state eigenpath as a sum of gauge-invariant arcs,
    refined by grid doubling until it changes by less than the tolerance

    Raises:
        DegenerateGapError: Degenerate ground state on the path
    """
    _check_trace_size(interp)
    length = _path_sum(interp, points)
    for _ in range(max_refinements):
        points = 2 * points - 1
        refined = _path_sum(interp, points)
        if abs(refined - length) < tolerance:
            return refined
        length = refined
    logger.warning(f"Path length not converged to {tolerance} after {max_refinements} refinements")
    return length


def time_bounds(trace: SpectralTrace, interp: Interpolation) -> TimeBounds:
    """||dH/ds|| / D^2, L^2 / D and L / D for minimum gap D and path length L"""
    if trace.delta_min <= 0.0:
        raise DegenerateGapError("Minimum gap is zero; no adiabatic time bound exists")
    norm = interp.derivative_norm()
    delta = trace.delta_min
    length = trace.path_length
    return TimeBounds(derivative_norm=norm, delta_min=delta, path_length=length,
                      T_gap2=norm / delta ** 2, T_path2=length ** 2 / delta, T_path1=length / delta)


def ground_state_fidelity(state: StateVector, H: HermitianOperator) -> float:
    return min(1.0, abs(np.vdot(H.ground_state().amplitudes, state.amplitudes)) ** 2)


def default_probe_times(omega_max: float, samples: int = 64) -> np.ndarray:
    """Four samples per shortest period so frequencies up to omega_max do not alias"""
    if omega_max <= 0:
        raise ProbeFitError(f"Probe frequency bound must be positive, got {omega_max}")
    return np.arange(samples) * (np.pi / (2.0 * omega_max))


def _initial_frequency(times: np.ndarray, signal: np.ndarray) -> float:
    spacing = float(times[1] - times[0])
    padded = 16 * len(signal)
    spectrum = np.abs(np.fft.rfft(signal - signal.mean(), n=padded))
    freqs = np.fft.rfftfreq(padded, d=spacing)
    return 2.0 * np.pi * float(freqs[int(np.argmax(spectrum[1:])) + 1])


def nondestructive_measure(system_ground: StateVector, H_f, A, delta: float,
                           sample_times: Optional[Sequence[float]] = None,
                           rng: Optional[np.random.Generator] = None) -> Tuple[ProbeFit, StateVector]:
    """
    Read the eigenvalue a0 of A on the system ground state through a probe qubit

    The probe (top qubit) starts in |0>, is rotated by a Hadamard, evolves under
    H_f (x) I + (delta I + A) (x) |1><1| for each sample time, and is rotated
    back; P0(t) = (1 + cos(omega t)) / 2 with omega = a0 + delta. P0 is taken
    exactly from the amplitudes and fitted by least squares.

    Args:
        system_ground: Ground state of H_f
        H_f: System Hamiltonian
        A: Observable commuting with H_f
        delta: Energy bias with delta + min eig(A) > 0
        sample_times: Probe times (equally spaced, starting at 0); default avoids aliasing
        rng: Selects the probe outcome of the final sample; the likelier branch without it

    Returns:
        (ProbeFit, system state after the final probe readout)

    Raises:
        AdiabaticError: A does not commute with H_f, bias too small, or the probe disturbed the system
        ProbeFitError: Fit residual above 1e-8
    """
    H = as_matrix(H_f)
    A = as_matrix(A)
    n = system_ground.n_qubits
    if H.shape != A.shape or H.shape[0] != system_ground.dimension:
        raise DimensionError("System state, H_f and A must share one dimension")
    commutator = float(np.max(np.abs(H @ A - A @ H)))
    if commutator > COMMUTATOR_TOLERANCE:
        raise AdiabaticError(f"A does not commute with H_f (||[A, H]|| = {commutator:.3e})")
    a_values = np.linalg.eigvalsh(A)
    if delta + a_values[0] <= 0:
        raise AdiabaticError(f"Bias {delta} must exceed -min eig(A) = {-a_values[0]:.6f}")

    times = np.asarray(default_probe_times(delta + a_values[-1]) if sample_times is None else sample_times, float)
    if times.size < 4:
        raise ProbeFitError(f"Need at least 4 probe times, got {times.size}")

    dim = 1 << n
    projector = np.zeros((2, 2))
    projector[1, 1] = 1.0
    H_total = HermitianOperator(np.kron(np.eye(2), H) + np.kron(projector, delta * np.eye(dim) + A),
                                label="H_probe")
    hadamard = standard_gate("H").matrix
    start = np.kron([1.0, 0.0], system_ground.amplitudes).astype(np.complex128)
    apply_matrix_inplace(start, n + 1, hadamard, [n])

    p0 = np.zeros(times.size)
    min_fidelity = 1.0
    branches = None
    for i, t in enumerate(times):
        amps = np.ascontiguousarray(dense_exponential(H_total, -1j * t) @ start)
        apply_matrix_inplace(amps, n + 1, hadamard, [n])
        branches = amps.reshape(2, dim)
        p0[i] = float(np.vdot(branches[0], branches[0]).real)
        for branch in branches:
            weight = float(np.vdot(branch, branch).real)
            if weight > 1e-12:
                fidelity = abs(np.vdot(system_ground.amplitudes, branch)) ** 2 / weight
                min_fidelity = min(min_fidelity, fidelity)

    if min_fidelity < 1.0 - NONDEMOLITION_TOLERANCE:
        raise AdiabaticError(f"Probe readout disturbed the system (fidelity {min_fidelity:.12f})")

    omega0 = _initial_frequency(times, p0)
    fit = least_squares(lambda w: 0.5 * (1.0 + np.cos(w[0] * times)) - p0, x0=[omega0],
                        xtol=1e-14, ftol=1e-14, gtol=1e-14)
    omega = abs(float(fit.x[0]))
    residual = float(np.max(np.abs(0.5 * (1.0 + np.cos(omega * times)) - p0)))
    if residual > FIT_RESIDUAL_LIMIT:
        raise ProbeFitError(f"Probe signal residual {residual:.3e} (aliasing? resample the probe times)")

    last_p0 = p0[-1]
    if rng is not None:
        outcome = 0 if rng.random() < last_p0 else 1
    else:
        outcome = 0 if last_p0 >= 0.5 else 1
    post = StateVector(branches[outcome], normalize=True)

    a0 = omega - delta
    logger.info(f"Probe measurement: omega = {omega:.10f}, a0 = {a0:.10f} (residual {residual:.2e})")
    return ProbeFit(a0=a0, omega=omega, max_residual=residual, min_system_fidelity=min_fidelity), post


def adiabatic_then_project(interp: Interpolation, T: float, steps: int, m: int,
                           rng: np.random.Generator) -> Tuple[float, bool, StateVector, float]:
    """
    Adiabatic preparation from the ground state of H_i, then a PEA projection
    onto the ground level of H_f

    Returns:
        (fidelity after the adiabatic stage, projection accepted, final state, decoded energy)
    """
    prepared = evolve_adiabatic(interp.H_i.ground_state(), interp, T, steps)
    fidelity = ground_state_fidelity(prepared, interp.H_f)
    applier, encoding = hamiltonian_power_applier(interp.H_f, m)
    accepted, state, energy = project_ground_state(applier, prepared, m, encoding,
                                                   float(interp.H_f.eigenvalues()[0]), encoding.resolution, rng)
    logger.info(f"Adiabatic stage fidelity {fidelity:.6f}; projection {'accepted' if accepted else 'rejected'}")
    return fidelity, accepted, state, energy


def fidelity_sweep(interp: Interpolation, T_values: Sequence[float], steps_per_time: float = 100.0,
                   min_steps: int = 100, runner=None) -> List[dict]:
    """
    Final ground-state fidelity and energy for each total time

    Args:
        runner: Optional EnsembleRunner to evaluate the times in parallel
    """
    start = interp.H_i.ground_state()

    def run(T):
        steps = max(min_steps, int(np.ceil(steps_per_time * T)))
        final = evolve_adiabatic(start, interp, T, steps)
        return {'T': float(T), 'steps': steps, 'fidelity': ground_state_fidelity(final, interp.H_f),
                'energy': expectation_value(final, interp.H_f)}

    T_values = list(T_values)
    if runner is not None:
        return runner.map(run, T_values, label="adiabatic sweep")
    return [run(T) for T in T_values]


def trend_violations(rows: Sequence[dict], ripple: float = 1e-3) -> int:
    """Count fidelity drops larger than the ripple between consecutive T values"""
    fidelities = [row['fidelity'] for row in sorted(rows, key=lambda r: r['T'])]
    return sum(1 for a, b in zip(fidelities, fidelities[1:]) if b < a - ripple)
