"""Deterministic simulator and analysis tools for asynchronous SGD with delays."""

from .engine import (
    ConstantTime,
    CustomSelection,
    FaultInjection,
    LogNormalTime,
    MaxConcurrency,
    MiniBatch,
    RunTrace,
    SampledMiniBatch,
    SimState,
    StopRule,
    StragglerTime,
    UniformClientSampling,
    WorkerModel,
    advance_event,
    constant_fleet,
    run_heterogeneous,
    run_homogeneous,
)
from .errors import (
    IdentityViolationError,
    InvalidConfigError,
    InvalidSelectionError,
    InvalidSpecError,
    NumericDomainError,
    SimulationDeadlockError,
    SimulatorError,
    TuningFailedError,
    UndefinedStatisticError,
)
from .metrics import (
    DelayLedger,
    assert_delay_conservation,
    average_concurrency_exact,
    average_delay_exact,
    average_delay_per_client_exact,
    conservation_average_delay,
    delay_conservation,
    last_k_error,
    max_concurrency,
    max_delay,
    summary,
    weighted_grad_norm_average,
)
from .objectives import (
    HeterogeneousFamily,
    LogisticObjective,
    NoiseModel,
    QuadraticObjective,
    finite_difference_gradient,
    load_objective,
    make_heterogeneous,
    make_logistic,
    make_quadratic,
    save_objective,
    stochastic_gradient,
)
from .rng import named_stream, stream_seed
from .speedup import (
    OracleEstimate,
    SpeedupInput,
    async_time,
    minibatch_time,
    minibatch_time_oracle,
    minibatch_weights,
    speedup_ratio,
)
from .stepsize import (
    ConstantStepsize,
    DelayAdaptiveStepsize,
    TheoreticalConstantStepsize,
    TuneOutcome,
    TuningResult,
    adaptive_eta_bounds,
    default_log_grid,
    grid_tune,
    theoretical_constant_eta,
)

__version__ = "0.1.0"

__all__ = [
    "ConstantStepsize",
    "ConstantTime",
    "CustomSelection",
    "DelayAdaptiveStepsize",
    "DelayLedger",
    "FaultInjection",
    "HeterogeneousFamily",
    "IdentityViolationError",
    "InvalidConfigError",
    "InvalidSelectionError",
    "InvalidSpecError",
    "LogNormalTime",
    "LogisticObjective",
    "MaxConcurrency",
    "MiniBatch",
    "NoiseModel",
    "NumericDomainError",
    "OracleEstimate",
    "QuadraticObjective",
    "RunTrace",
    "SampledMiniBatch",
    "SimState",
    "SimulationDeadlockError",
    "SimulatorError",
    "SpeedupInput",
    "StopRule",
    "StragglerTime",
    "TheoreticalConstantStepsize",
    "TuneOutcome",
    "TuningFailedError",
    "TuningResult",
    "UndefinedStatisticError",
    "UniformClientSampling",
    "WorkerModel",
    "advance_event",
    "adaptive_eta_bounds",
    "assert_delay_conservation",
    "async_time",
    "average_concurrency_exact",
    "average_delay_exact",
    "average_delay_per_client_exact",
    "conservation_average_delay",
    "constant_fleet",
    "default_log_grid",
    "delay_conservation",
    "finite_difference_gradient",
    "grid_tune",
    "last_k_error",
    "load_objective",
    "make_heterogeneous",
    "make_logistic",
    "make_quadratic",
    "max_concurrency",
    "max_delay",
    "minibatch_time",
    "minibatch_time_oracle",
    "minibatch_weights",
    "named_stream",
    "run_heterogeneous",
    "run_homogeneous",
    "save_objective",
    "speedup_ratio",
    "stochastic_gradient",
    "stream_seed",
    "summary",
    "theoretical_constant_eta",
    "weighted_grad_norm_average",
]
