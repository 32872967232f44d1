"""
Thermal states: exact Gibbs oracle, perturbative updates toward the thermal
state of a perturbed Hamiltonian, chained subsystem-to-composite construction
and the trace-norm perturbation bound
"""
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import quad_vec

from .core import (DensityMatrix, DimensionError, HermitianOperator, SimulationError, check_dense_size,
                   embed_operator, state_metrics, trace_norm)
from .models import BoundCheck

logger = logging.getLogger(__name__)

MAX_THERMAL_QUBITS = 10
DEGENERACY_TOLERANCE = 1e-9
BOUND_SLACK = 1e-10
QUADRATURE_TOLERANCE = 1e-9
CLOSED_FORM_AGREEMENT = 1e-7
DEPHASING_SAMPLES = 64


class ThermalError(SimulationError, ValueError):
    """Custom exception for thermal-state preparation errors"""
    pass


class ThermalBoundError(ThermalError):
    """Raised when the trace-norm perturbation bound is violated"""
    pass


class QuadratureError(SimulationError):
    """Raised when the Dyson-term quadrature fails to converge"""
    pass


class ThermalContext:
    """Hamiltonian, inverse temperature and the current state"""

    def __init__(self, H: HermitianOperator, beta: float, rho: DensityMatrix):
        if beta < 0:
            raise ThermalError(f"Inverse temperature must be >= 0, got {beta}")
        if rho.dimension != H.dimension:
            raise DimensionError(f"State dimension {rho.dimension} does not match H ({H.dimension})")
        self.H = H
        self.beta = float(beta)
        self.rho = rho


class UpdateOutcome:
    def __init__(self, context: ThermalContext, exact_success: float, first_order_success: float):
        self.context = context
        self.exact_success = exact_success
        self.first_order_success = first_order_success

    @property
    def rho_next(self) -> DensityMatrix:
        return self.context.rho

    @property
    def success_probability(self) -> float:
        return self.exact_success


def _as_hermitian(H) -> HermitianOperator:
    return H if isinstance(H, HermitianOperator) else HermitianOperator(H)


def _thermal_matrix(H: HermitianOperator, beta: float) -> np.ndarray:
    if H.n_qubits > MAX_THERMAL_QUBITS:
        raise DimensionError(f"Thermal oracle limited to {MAX_THERMAL_QUBITS} qubits, got {H.n_qubits}")
    check_dense_size(H.n_qubits, "thermal state")
    values, vectors = H.eigh()
    weights = np.exp(-beta * (values - values[0]))
    weights /= weights.sum()
    return (vectors * weights) @ vectors.conj().T


def exact_thermal(H, beta: float) -> ThermalContext:
    """rho = exp(-beta H) / Tr exp(-beta H), exponent shifted by the ground energy"""
    H = _as_hermitian(H)
    if beta < 0:
        raise ThermalError(f"Inverse temperature must be >= 0, got {beta}")
    return ThermalContext(H, beta, DensityMatrix(_thermal_matrix(H, beta)))


def dephase(rho: DensityMatrix, H) -> DensityMatrix:
    """Zero the coherences between distinct eigenvalues of H (degenerate blocks kept)"""
    H = _as_hermitian(H)
    values, vectors = H.eigh()
    scale = max(1.0, float(np.max(np.abs(values))))
    keep = np.abs(values[:, None] - values[None, :]) <= DEGENERACY_TOLERANCE * scale
    in_basis = vectors.conj().T @ rho.matrix @ vectors
    out = vectors @ (in_basis * keep) @ vectors.conj().T
    return DensityMatrix(0.5 * (out + out.conj().T))


def stochastic_dephase(rho: DensityMatrix, H, mean_time: float, rng: np.random.Generator,
                       samples: int = DEPHASING_SAMPLES) -> DensityMatrix:
    """Average of exp(-iHt) rho exp(iHt) over exponentially distributed times t"""
    if mean_time <= 0:
        raise ThermalError(f"Mean dephasing time must be positive, got {mean_time}")
    if samples < 1:
        raise ThermalError(f"Sample count must be >= 1, got {samples}")
    H = _as_hermitian(H)
    values, vectors = H.eigh()
    in_basis = vectors.conj().T @ rho.matrix @ vectors
    times = rng.exponential(mean_time, size=samples)
    factors = np.mean(np.exp(-1j * times[:, None, None] * (values[None, :, None] - values[None, None, :])), axis=0)
    out = vectors @ (in_basis * factors) @ vectors.conj().T
    return DensityMatrix(0.5 * (out + out.conj().T))


def perturbative_update(ctx: ThermalContext, h, epsilon: float, stochastic: bool = False,
                        mean_time: Optional[float] = None, rng: Optional[np.random.Generator] = None) -> UpdateOutcome:
    """
    One step rho -> (1 - eps beta h/2) rho (1 - eps beta h/2) / N, then dephasing
    in the eigenbasis of H + eps h

    Args:
        ctx: Current thermal context
        h: Perturbation
        epsilon: Step size with eps beta ||h|| < 1
        stochastic: Dephase by random-time evolution instead of exactly
        mean_time: Mean evolution time of the stochastic mode
        rng: Random stream of the stochastic mode

    Returns:
        UpdateOutcome whose context holds (H + eps h, beta, rho_next)

    Raises:
        ThermalError: Step-size precondition violated
    """
    h = _as_hermitian(h)
    if h.dimension != ctx.H.dimension:
        raise DimensionError(f"Perturbation dimension {h.dimension} does not match H ({ctx.H.dimension})")
    strength = epsilon * ctx.beta * h.norm()
    if strength >= 1.0:
        raise ThermalError(f"Step too large: eps beta ||h|| = {strength:.4f} must be < 1")

    K = np.eye(h.dimension) - 0.5 * epsilon * ctx.beta * h.matrix
    sigma = K @ ctx.rho.matrix @ K
    exact_success = float(np.real(np.trace(sigma)))
    first_order_success = 1.0 - epsilon * ctx.beta * float(np.real(np.trace(ctx.rho.matrix @ h.matrix)))
    updated = DensityMatrix(0.5 * (sigma + sigma.conj().T) / exact_success)

    H_next = HermitianOperator(ctx.H.matrix + epsilon * h.matrix, label=ctx.H.label)
    if stochastic:
        if rng is None or mean_time is None:
            raise ThermalError("Stochastic dephasing needs mean_time and rng")
        updated = stochastic_dephase(updated, H_next, mean_time, rng)
    else:
        updated = dephase(updated, H_next)

    return UpdateOutcome(ThermalContext(H_next, ctx.beta, updated), exact_success, first_order_success)


class ChainResult:
    def __init__(self, rho: DensityMatrix, cumulative_success: float, steps: List[dict], restarts: int = 0,
                 total_steps: int = 0):
        self.rho = rho
        self.cumulative_success = cumulative_success
        self.steps = steps
        self.restarts = restarts
        self.total_steps = total_steps


def _increments(epsilon: float) -> List[float]:
    count = int(math.ceil(1.0 / epsilon - 1e-12))
    return [epsilon] * (count - 1) + [1.0 - epsilon * (count - 1)]


def chain_update(H1, H2, h, beta: float, epsilon: float, supports: Optional[Tuple[Sequence[int], Sequence[int]]] = None,
                 monte_carlo: bool = False, rng: Optional[np.random.Generator] = None,
                 max_restarts: int = 10000) -> ChainResult:
    """
    Build the thermal state of H1 + H2 + h from the product of subsystem
    thermal states by ceil(1/eps) perturbative updates

    Args:
        H1, H2: Subsystem Hamiltonians
        h: Coupling on the joint register
        beta: Inverse temperature
        epsilon: Coupling fraction added per step
        supports: Qubits of H1 and H2 in the joint register (default H1 low, H2 above)
        monte_carlo: Sample each step's success and restart from the product state on failure
        rng: Random stream of the Monte Carlo mode

    Returns:
        ChainResult with the final state, the product of exact step successes and the step log

    Raises:
        ThermalError: Overlapping supports or a failed Monte Carlo run
    """
    H1, H2, h = _as_hermitian(H1), _as_hermitian(H2), _as_hermitian(h)
    n1, n2 = H1.n_qubits, H2.n_qubits
    if not 0 < epsilon <= 1:
        raise ThermalError(f"Step fraction must lie in (0, 1], got {epsilon}")
    if supports is None:
        supports = (list(range(n1)), list(range(n1, n1 + n2)))
    s1, s2 = list(supports[0]), list(supports[1])
    if set(s1) & set(s2):
        raise ThermalError(f"Subsystem registers overlap: {sorted(set(s1) & set(s2))}")
    if len(s1) != n1 or len(s2) != n2:
        raise DimensionError("Supports must match the subsystem sizes")
    n = n1 + n2
    if h.n_qubits != n:
        raise DimensionError(f"Coupling acts on {h.n_qubits} qubits, joint register has {n}")

    if s1 == list(range(n1)) and s2 == list(range(n1, n)):
        rho0 = exact_thermal(H1, beta).rho.kron(exact_thermal(H2, beta).rho)
    else:
        joint = embed_operator(H1.matrix, s1, n) + embed_operator(H2.matrix, s2, n)
        rho0 = exact_thermal(joint, beta).rho
    H0 = HermitianOperator(embed_operator(H1.matrix, s1, n) + embed_operator(H2.matrix, s2, n), label="H0")

    increments = _increments(epsilon)
    ctx = ThermalContext(H0, beta, rho0)
    cumulative = 1.0
    coupling = 0.0
    rows = []
    restarts = 0
    total_steps = 0
    for step, fraction in enumerate(increments, start=1):
        outcome = perturbative_update(ctx, h, fraction)
        ctx = outcome.context
        coupling += fraction
        cumulative *= outcome.exact_success
        target = _thermal_matrix(ctx.H, beta)
        rows.append({'step': step, 'coupling': coupling, 'exact_success': outcome.exact_success,
                     'first_order_success': outcome.first_order_success, 'cumulative_success': cumulative,
                     'distance_to_exact': 0.5 * trace_norm(ctx.rho.matrix - target)})

    if monte_carlo:
        if rng is None:
            raise ThermalError("Monte Carlo chaining needs an rng")
        successes = [row['exact_success'] for row in rows]
        position = 0
        while position < len(successes):
            total_steps += 1
            if rng.random() < successes[position]:
                position += 1
            else:
                restarts += 1
                position = 0
                if restarts > max_restarts:
                    raise ThermalError(f"Chain failed {max_restarts} times in a row; reduce beta or the coupling")
        logger.info(f"Monte Carlo chain: {restarts} restarts, {total_steps} update attempts")

    logger.info(f"Chained {len(increments)} updates: cumulative success {cumulative:.6f}, "
                f"final distance {rows[-1]['distance_to_exact']:.3e}")
    return ChainResult(ctx.rho, cumulative, rows, restarts, total_steps)


def _dyson_closed_form(H: HermitianOperator, h: np.ndarray, beta: float) -> np.ndarray:
    """int_0^1 exp(-beta H (1-l)) h exp(-beta H l) dl, shifted by the ground energy"""
    values, vectors = H.eigh()
    shifted = values - values[0]
    a = np.exp(-beta * shifted)
    diff = beta * (shifted[:, None] - shifted[None, :])
    with np.errstate(divide='ignore', invalid='ignore'):
        kernel = np.where(np.abs(diff) > 1e-12, (a[None, :] - a[:, None]) / np.where(diff == 0, 1, diff),
                          a[:, None])
    in_basis = vectors.conj().T @ h @ vectors
    return vectors @ (in_basis * kernel) @ vectors.conj().T


def verify_trace_norm_bound(H, h, epsilon: float, beta: float, strict: bool = True) -> BoundCheck:
    """
    Check ||rho(H + eps h) - rho(H)||_Tr <= eps beta ||h|| and the same for the
    first-order Dyson term computed by adaptive quadrature

    Raises:
        QuadratureError: Quadrature not converged or disagreeing with the closed form
        ThermalBoundError: Bound violated (strict mode)
    """
    H, h = _as_hermitian(H), _as_hermitian(h)
    lhs = trace_norm(_thermal_matrix(HermitianOperator(H.matrix + epsilon * h.matrix), beta)
                     - _thermal_matrix(H, beta))
    rhs = epsilon * beta * h.norm()

    values, vectors = H.eigh()
    shifted = values - values[0]
    Z = float(np.sum(np.exp(-beta * shifted)))
    dim = H.dimension

    def integrand(lam):
        left = (vectors * np.exp(-beta * shifted * (1.0 - lam))) @ vectors.conj().T
        right = (vectors * np.exp(-beta * shifted * lam)) @ vectors.conj().T
        product = left @ h.matrix @ right
        return np.concatenate([product.real.ravel(), product.imag.ravel()])

    result, error, info = quad_vec(integrand, 0.0, 1.0, epsabs=QUADRATURE_TOLERANCE, epsrel=QUADRATURE_TOLERANCE,
                                   full_output=True)
    if not info.success:
        raise QuadratureError(f"Dyson quadrature did not converge (error estimate {error:.3e})")
    integral = (result[:dim * dim] + 1j * result[dim * dim:]).reshape(dim, dim)
    closed = _dyson_closed_form(H, h.matrix, beta)
    disagreement = float(np.max(np.abs(integral - closed)))
    if disagreement > CLOSED_FORM_AGREEMENT * max(1.0, float(np.max(np.abs(closed)))):
        raise QuadratureError(f"Dyson quadrature disagrees with the closed form by {disagreement:.3e}")

    dyson = epsilon * beta / Z * trace_norm(integral)
    holds = lhs <= rhs + BOUND_SLACK and dyson <= rhs + BOUND_SLACK
    check = BoundCheck(lhs=lhs, rhs=rhs, dyson_first_order_lhs=dyson, margin=rhs - lhs, holds=holds)
    if not holds:
        logger.warning(f"Trace-norm bound violated: lhs {lhs:.6e}, Dyson {dyson:.6e}, rhs {rhs:.6e}")
        if strict:
            raise ThermalBoundError(f"Bound violated: lhs {lhs:.6e} > eps beta ||h|| = {rhs:.6e}")
    return check


def product_thermal(contexts: Sequence[ThermalContext]) -> DensityMatrix:
    """Tensor product with contexts[0] on the lowest qubits"""
    rho = contexts[0].rho
    for ctx in contexts[1:]:
        rho = rho.kron(ctx.rho)
    return rho


def thermal_distance(rho: DensityMatrix, H, beta: float) -> float:
    """Trace distance from rho to the exact thermal state of H"""
    return state_metrics(rho, exact_thermal(H, beta).rho).trace_distance
