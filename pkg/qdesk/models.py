from datetime import datetime
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator


class Settings(BaseModel):
    log_dir: str = "logs"
    log_level: str = "INFO"
    results_dir: str = "results"
    max_dense_qubits: int = Field(12, ge=1, le=24)
    threads: Optional[int] = Field(None, ge=1)

    @field_validator('log_level')
    @classmethod
    def validate_log_level(cls, v):
        if v.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError("log_level must be one of DEBUG, INFO, WARNING, ERROR, CRITICAL")
        return v.upper()


class StateMetrics(BaseModel):
    fidelity: float
    trace_distance: float


class PhaseEstimate(BaseModel):
    register_outcome: int = Field(..., ge=0)
    phase: float = Field(..., ge=0.0, lt=1.0)
    probability: float = Field(..., ge=0.0, le=1.0 + 1e-9)


class EnergyEstimate(BaseModel):
    energy: float
    accepted: bool
    trials: int
    phase: float
    register_outcome: int
    target_energy: float
    band: float
    overlap: Optional[float] = None


class TrotterPlan(BaseModel):
    """Ordered (term index, duration) exponentials of a product formula"""
    model_config = ConfigDict(frozen=True)

    steps: Tuple[Tuple[int, float], ...]
    order: int
    slice_count: int
    total_time: float
    term_count: int

    @property
    def exponential_count(self) -> int:
        return len(self.steps)

    def term_sequence(self) -> List[int]:
        return [term for term, _ in self.steps]

    def durations_by_term(self) -> List[float]:
        totals = [0.0] * self.term_count
        for term, duration in self.steps:
            totals[term] += duration
        return totals


class OrderSelection(BaseModel):
    k: int
    order: int
    slices: int
    exponential_budget: int
    error: float


class TimeBounds(BaseModel):
    derivative_norm: float
    delta_min: float
    path_length: float
    T_gap2: float
    T_path2: float
    T_path1: float


class BoundCheck(BaseModel):
    lhs: float
    rhs: float
    dyson_first_order_lhs: float
    margin: float
    holds: bool


class CoolingParams(BaseModel):
    gamma: float
    t: float = Field(..., gt=0.0)
    margin: float = 0.0

    def phases(self, energies) -> List[float]:
        """phi_k = E_k t - gamma for each eigenvalue"""
        return [float(e) * self.t - self.gamma for e in energies]


class EnergyBalance(BaseModel):
    E_in: float
    p0: float
    E0_branch: float
    p1: float
    E1_branch: float
    residual: float


class WalkStatistics(BaseModel):
    restarts: int
    total_steps: int
    final_x: int
    final_energy: float
    initial_energy: float


class ProbeFit(BaseModel):
    a0: float
    omega: float
    max_residual: float
    min_system_fidelity: float


class ExperimentConfig(BaseModel):
    experiment: str
    params: Dict[str, Any] = Field(default_factory=dict)
    seed: int = Field(0, ge=0, lt=2 ** 64)
    threads: int = Field(1, ge=1)
    out_dir: str = "results"


class RunSummary(BaseModel):
    experiment: str
    toolkit_version: str
    seed: int
    threads: int
    params: Dict[str, Any]
    schema_version: int
    columns: List[str]
    metrics: Dict[str, Any]
    checks: Dict[str, bool]
    passed: bool


class Provenance(BaseModel):
    toolkit_version: str
    experiment: str
    seed: int
    threads: int
    timestamp: datetime = Field(default_factory=datetime.now)
    python_version: str
    numpy_version: str
    scipy_version: str


class ExperimentResult(BaseModel):
    """Rows and verdicts produced by one experiment body"""
    columns: List[str]
    rows: List[Dict[str, Any]]
    metrics: Dict[str, Any] = Field(default_factory=dict)
    checks: Dict[str, bool] = Field(default_factory=dict)
    # extra CSV tables: name -> (columns, rows)
    tables: Dict[str, Tuple[List[str], List[Dict[str, Any]]]] = Field(default_factory=dict)

    @field_validator('checks', mode='before')
    @classmethod
    def coerce_checks(cls, v):
        # numpy comparisons yield np.bool_
        return {key: bool(value) for key, value in v.items()}

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


# Experiment parameters. Unknown keys are rejected.

class ExperimentParams(BaseModel):
    model_config = ConfigDict(extra='forbid')


class TrotterScalingParams(ExperimentParams):
    qubits: int = Field(3, ge=2, le=8)
    hamiltonians: int = Field(20, ge=1)
    t: float = Field(1.0, gt=0.0)
    term_norm: float = Field(1.0, gt=0.0)
    orders: List[int] = [2, 4]
    slice_counts: List[int] = [4, 8, 16, 32]

    @field_validator('orders')
    @classmethod
    def validate_orders(cls, v):
        if not v or any(order not in (1, 2, 4, 6) for order in v):
            raise ValueError("orders must be drawn from 1, 2, 4, 6")
        return v

    @field_validator('slice_counts')
    @classmethod
    def validate_slices(cls, v):
        if len(v) < 2 or any(n < 1 for n in v) or len(set(v)) != len(v):
            raise ValueError("slice_counts needs at least two distinct positive values")
        return sorted(v)


class PEAPrecisionParams(ExperimentParams):
    cases: List[Tuple[int, float]] = [(3, 0.125), (5, 0.0625)]
    phases: int = Field(2000, ge=1)
    projection_trials: int = Field(2000, ge=1)
    projection_qubits: int = Field(3, ge=1, le=6)
    projection_ancillas: int = Field(4, ge=2, le=8)

    @field_validator('cases')
    @classmethod
    def validate_cases(cls, v):
        for p, epsilon in v:
            if p < 1 or not 0.0 < epsilon < 1.0:
                raise ValueError(f"case ({p}, {epsilon}) needs p >= 1 and 0 < epsilon < 1")
        return v


class QFTCheckParams(ExperimentParams):
    max_qubits: int = Field(8, ge=1, le=12)


class WavepacketParams(ExperimentParams):
    grid_qubits: int = Field(6, ge=2, le=10)
    x_min: float = -10.0
    x_max: float = 10.0
    mass: float = Field(1.0, gt=0.0)
    omega: float = Field(1.0, gt=0.0)
    x0: float = 2.0
    p0: float = 0.0
    sigma: Optional[float] = Field(None, gt=0.0)
    periods: float = Field(1.0, gt=0.0)
    slices: int = Field(512, ge=1)
    order: int = Field(2, ge=1)
    record_every: int = Field(8, ge=1)
    m_V: int = Field(16, ge=1, le=20)
    mode_check_slices: int = Field(8, ge=1)
    mode_check_fraction: float = Field(1.0, gt=0.0)
    mode_check_modes: List[Literal['kickback', 'rk_ladder']] = ['kickback', 'rk_ladder']


class H2EnergyParams(ExperimentParams):
    integrals: str = "data/h2_sto3g.txt"
    electrons: int = Field(2, ge=1)
    p: int = Field(10, ge=1, le=14)
    epsilon: float = Field(0.1, gt=0.0, lt=1.0)
    order: int = Field(4, ge=1)
    slices: int = Field(8, ge=1)
    repeats: int = Field(5, ge=1)
    max_trials: int = Field(100, ge=1)
    circuit: bool = False
    jw_modes: int = Field(5, ge=1, le=8)


class StatePrepParams(ExperimentParams):
    n_qubits: int = Field(8, ge=1, le=14)
    center: float = 0.5
    width: float = Field(0.1, gt=0.0)
    x_min: float = 0.0
    x_max: float = 1.0
    signed_check: bool = True


class AdiabaticSweepParams(ExperimentParams):
    schedule: Literal['linear', 'smoothstep'] = 'smoothstep'
    T_values: List[float] = [4.0, 6.0, 8.0, 10.0, 14.0, 20.0, 28.0, 40.0, 56.0, 80.0]
    steps_per_time: float = Field(100.0, gt=0.0)
    min_steps: int = Field(100, ge=1)
    ripple: float = Field(1e-3, ge=0.0)
    trace_points: int = Field(65, ge=5)
    projection_ancillas: int = Field(6, ge=1, le=10)

    @field_validator('T_values')
    @classmethod
    def validate_times(cls, v):
        if not v or any(T <= 0 for T in v):
            raise ValueError("T_values must be positive")
        return sorted(v)


class ProbeMeasureParams(ExperimentParams):
    coupling: float = 1.0
    field: float = Field(0.5, gt=0.0)
    delta_margin: float = Field(1.0, gt=0.0)
    samples: int = Field(64, ge=4)


class ThermalBoundParams(ExperimentParams):
    qubits: int = Field(2, ge=1, le=6)
    draws: int = Field(100, ge=1)
    betas: List[float] = [0.1, 1.0, 10.0]
    epsilons: List[float] = [0.01, 0.1]
    H_norm: float = Field(1.0, gt=0.0)
    h_norm: float = Field(1.0, gt=0.0)

    @field_validator('betas', 'epsilons')
    @classmethod
    def validate_positive(cls, v):
        if not v or any(x <= 0 for x in v):
            raise ValueError("values must be positive")
        return v


class ThermalChainParams(ExperimentParams):
    beta: float = Field(1.0, gt=0.0)
    epsilon: float = Field(0.01, gt=0.0, le=1.0)
    coupling: float = 0.5
    field_1: Tuple[float, float, float] = (1.0, 0.0, 0.3)
    field_2: Tuple[float, float, float] = (0.6, 0.0, -0.2)
    tolerance: float = Field(0.01, gt=0.0)
    monte_carlo: bool = False


class CoolingEnsembleParams(ExperimentParams):
    walkers: int = Field(200, ge=1)
    x_stops: List[int] = [1, 2, 4, 8]
    coupling: float = 1.0
    field: float = Field(0.5, gt=0.0)
    margin: float = Field(0.1, ge=0.0, lt=1.5)
    balance_inputs: int = Field(100, ge=1)
    balance_qubits: int = Field(3, ge=1, le=8)
    max_restarts: int = Field(1000, ge=0)

    @field_validator('x_stops')
    @classmethod
    def validate_stops(cls, v):
        if not v or any(x < 1 for x in v):
            raise ValueError("x_stops must be positive integers")
        return sorted(set(v))


class LindbladConvergeParams(ExperimentParams):
    model: Literal['decay', 'dephasing'] = 'decay'
    rate: float = Field(0.5, gt=0.0)
    field: Tuple[float, float] = (0.8, 0.3)
    total_time: float = Field(1.0, gt=0.0)
    step_counts: List[int] = [4, 8, 16, 32, 64, 128]
    strang: bool = False
    ripple: float = Field(0.05, ge=0.0)
    trajectory_times: List[float] = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0]

    @field_validator('step_counts')
    @classmethod
    def validate_steps(cls, v):
        if len(v) < 2 or any(n < 1 for n in v) or len(set(v)) != len(v):
            raise ValueError("step_counts needs at least two distinct positive values")
        return sorted(v)
