"""
Suzuki-Trotter product formulas: planning, execution and error measurement
"""
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import (HermitianOperator, SimulationError, StateVector, apply_matrix_inplace, check_dense_size,
                   dense_exponential, embed_operator, random_hermitian)
from .models import OrderSelection, TrotterPlan

logger = logging.getLogger(__name__)

MAX_SUZUKI_K = 4
MAX_SEARCH_SLICES = 1 << 14


class TrotterError(SimulationError, ValueError):
    """Custom exception for product-formula errors"""
    pass


class HamiltonianTerm:
    """Hermitian operator acting on a subset of qubits (support[0] is its bit 0)"""

    def __init__(self, support: Sequence[int], operator, label: Optional[str] = None):
        support = [int(q) for q in support]
        if len(set(support)) != len(support):
            raise TrotterError(f"Term support has repeated qubits: {support}")
        if any(q < 0 for q in support):
            raise TrotterError(f"Term support has negative qubits: {support}")
        if not isinstance(operator, HermitianOperator):
            operator = HermitianOperator(operator, label=label)
        if operator.n_qubits != len(support):
            raise TrotterError(f"Term acts on {operator.n_qubits} qubits but support has {len(support)}")
        self.support = support
        self.operator = operator
        self.label = label or f"h{support}"

    @property
    def matrix(self) -> np.ndarray:
        return self.operator.matrix

    def __repr__(self):
        return f"HamiltonianTerm({self.label}, support={self.support})"


def suzuki_z(k: int) -> float:
    """z_k = (4 - 4^(1/(2k-1)))^-1"""
    if k < 2:
        raise TrotterError(f"Suzuki coefficients start at k = 2, got {k}")
    return 1.0 / (4.0 - 4.0 ** (1.0 / (2 * k - 1)))


def _second_order(m: int, x: float) -> List[Tuple[int, float]]:
    if m == 1:
        return [(0, x)]
    head = [(i, x / 2.0) for i in range(m - 1)]
    return head + [(m - 1, x)] + list(reversed(head))


def _suzuki(m: int, k: int, x: float) -> List[Tuple[int, float]]:
    if k == 1:
        return _second_order(m, x)
    z = suzuki_z(k)
    outer = _suzuki(m, k - 1, z * x)
    middle = _suzuki(m, k - 1, (1.0 - 4.0 * z) * x)
    return outer + outer + middle + outer + outer


def _merge(steps: List[Tuple[int, float]]) -> List[Tuple[int, float]]:
    merged: List[Tuple[int, float]] = []
    for term, duration in steps:
        if merged and merged[-1][0] == term:
            merged[-1] = (term, merged[-1][1] + duration)
        else:
            merged.append((term, duration))
    return merged


def build_plan(terms: Sequence, t: float, order: int, slices: int) -> TrotterPlan:
    """
    Product-formula plan for exp(-i sum_k H_k t)

    Args:
        terms: Terms (only their count is used)
        t: Total time (may be negative)
        order: 1, or an even Suzuki order 2k
        slices: Number of repetitions n

    Returns:
        TrotterPlan with adjacent exponentials of the same term merged
    """
    m = len(terms)
    if m == 0:
        raise TrotterError("Cannot plan an empty term list")
    if slices < 1:
        raise TrotterError(f"Slice count must be >= 1, got {slices}")
    if order != 1 and (order < 2 or order % 2 != 0):
        raise TrotterError(f"Order must be 1 or an even number, got {order}")

    dt = t / slices
    if order == 1:
        block = [(i, dt) for i in range(m)]
    else:
        block = _suzuki(m, order // 2, dt)

    steps = _merge(block * slices)
    logger.debug(f"Planned order {order}, {slices} slices, {m} terms: {len(steps)} exponentials")
    return TrotterPlan(steps=tuple(steps), order=order, slice_count=slices, total_time=t, term_count=m)


def exponential_count(m: int, k: int, slices: int = 1) -> int:
    """Exponentials in a merged S_2k plan: 2(m-1) n 5^(k-1) + 1"""
    if m < 1 or k < 1 or slices < 1:
        raise TrotterError(f"Need m >= 1, k >= 1, slices >= 1 (got {m}, {k}, {slices})")
    return 2 * (m - 1) * slices * 5 ** (k - 1) + 1


def register_size(terms: Sequence[HamiltonianTerm]) -> int:
    return max(max(term.support) for term in terms) + 1


def apply_plan_inplace(amplitudes: np.ndarray, n_qubits: int, plan: TrotterPlan, terms: Sequence[HamiltonianTerm],
                       controls: Sequence[int] = ()):
    """Run a plan over an amplitude array (optionally batched and/or controlled)"""
    if plan.term_count != len(terms):
        raise TrotterError(f"Plan expects {plan.term_count} terms, got {len(terms)}")
    for term in terms:
        if max(term.support) >= n_qubits:
            raise TrotterError(f"Term {term.label} support {term.support} exceeds {n_qubits} qubits")
        if set(term.support) & set(controls):
            raise TrotterError(f"Term {term.label} overlaps control qubits {list(controls)}")

    cache = {}
    for index, duration in plan.steps:
        key = (index, duration)
        if key not in cache:
            cache[key] = dense_exponential(terms[index].operator, -1j * duration)
        apply_matrix_inplace(amplitudes, n_qubits, cache[key], terms[index].support, controls)


def execute_plan(state: StateVector, plan: TrotterPlan, terms: Sequence[HamiltonianTerm]) -> StateVector:
    """Apply each planned exponential, embedded on its support, in plan order"""
    amps = state.amplitudes.copy()
    apply_plan_inplace(amps, state.n_qubits, plan, terms)
    return StateVector(amps)


def total_hamiltonian(terms: Sequence[HamiltonianTerm], n_qubits: Optional[int] = None) -> HermitianOperator:
    n_qubits = n_qubits or register_size(terms)
    check_dense_size(n_qubits, "total Hamiltonian")
    total = np.zeros((1 << n_qubits, 1 << n_qubits), dtype=np.complex128)
    for term in terms:
        total += embed_operator(term.matrix, term.support, n_qubits)
    return HermitianOperator(total, label="H")


def plan_unitary(terms: Sequence[HamiltonianTerm], plan: TrotterPlan, n_qubits: Optional[int] = None) -> np.ndarray:
    """Dense product of the planned exponentials"""
    n_qubits = n_qubits or register_size(terms)
    check_dense_size(n_qubits, "plan unitary")
    full = np.eye(1 << n_qubits, dtype=np.complex128)
    apply_plan_inplace(full, n_qubits, plan, terms)
    return full


def plan_error(terms: Sequence[HamiltonianTerm], t: float, plan: TrotterPlan,
               n_qubits: Optional[int] = None) -> float:
    """Spectral-norm distance between the plan and exp(-iHt)"""
    n_qubits = n_qubits or register_size(terms)
    exact = dense_exponential(total_hamiltonian(terms, n_qubits), -1j * t)
    return float(np.linalg.norm(plan_unitary(terms, plan, n_qubits) - exact, 2))


def _minimal_slices(terms, t: float, order: int, target_error: float, n_qubits: int) -> Optional[Tuple[int, float]]:
    def error_at(n):
        return plan_error(terms, t, build_plan(terms, t, order, n), n_qubits)

    n = 1
    error = error_at(n)
    while error > target_error:
        n *= 2
        if n > MAX_SEARCH_SLICES:
            return None
        error = error_at(n)

    low, high, high_error = n // 2, n, error
    while high - low > 1:
        mid = (low + high) // 2
        mid_error = error_at(mid)
        if mid_error <= target_error:
            high, high_error = mid, mid_error
        else:
            low = mid
    return high, high_error


def select_order(terms: Sequence[HamiltonianTerm], t: float, target_error: float) -> OrderSelection:
    """
    Suzuki order and slice count with the smallest exponential budget meeting the target

    Raises:
        TrotterError: No order up to 2*MAX_SUZUKI_K reaches the target
    """
    if target_error <= 0:
        raise TrotterError(f"Target error must be positive, got {target_error}")
    n_qubits = register_size(terms)
    m = len(terms)

    best: Optional[OrderSelection] = None
    for k in range(1, MAX_SUZUKI_K + 1):
        found = _minimal_slices(terms, t, 2 * k, target_error, n_qubits)
        if found is None:
            logger.debug(f"Order {2 * k} cannot reach {target_error:.1e} within {MAX_SEARCH_SLICES} slices")
            continue
        slices, error = found
        budget = exponential_count(m, k, slices)
        logger.debug(f"Order {2 * k}: {slices} slices, budget {budget}, error {error:.3e}")
        if best is None or budget < best.exponential_budget:
            best = OrderSelection(k=k, order=2 * k, slices=slices, exponential_budget=budget, error=error)

    if best is None:
        raise TrotterError(f"Target error {target_error:.1e} unreachable")
    logger.info(f"Selected order {best.order} with {best.slices} slices ({best.exponential_budget} exponentials)")
    return best


def random_two_local_terms(n_qubits: int, rng: np.random.Generator, norm: float = 1.0) -> List[HamiltonianTerm]:
    """Random nearest-neighbour two-qubit terms on a chain"""
    if n_qubits < 2:
        raise TrotterError("A two-local chain needs at least two qubits")
    return [HamiltonianTerm([q, q + 1], random_hermitian(2, rng, norm), label=f"h{q}{q + 1}")
            for q in range(n_qubits - 1)]
