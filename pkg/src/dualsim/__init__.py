"""dualsim: one model definition, two simulation paradigms.

Tumour-immune population models are declared once, as a species list
plus parameterized transition channels, and can then run either as a
deterministic ODE system or as a stochastic agent-based simulation.
The two halves are tied together by a construction-time drift identity
and compared statistically after the fact.
"""

from .abm import (
    EngineConfig,
    Ensemble,
    InfluxSpec,
    PerAgentEngine,
    RemoveOther,
    RemoveSelf,
    SignedBranch,
    Spawn,
    TransitionSpec,
    aggregate_drift,
    apply_influx,
    eval_rate,
    run_ensemble,
    run_replication,
    step_per_agent,
    step_tau_leap,
)
from .config import parse_config
from .core import (
    Case0Params,
    Case1Params,
    Case2Params,
    Case3Params,
    NegativeParameter,
    NegativeState,
    NonFiniteState,
    PopulationState,
    SeededStream,
    SimulationError,
    Trajectory,
    ZeroDenominator,
    derive_seed,
    fnv1a64,
    splitmix64,
    validate_params,
)
from .experiments import ExperimentResult, run_experiment, sweep
from .exprparse import parse_rate_expr
from .models import (
    ModelSpec,
    ScenarioConfig,
    build_case0,
    build_case1,
    build_case2,
    build_case3,
    build_model,
    check_drift_equivalence,
    find_scenario,
    scenario_registry,
)
from .ode import (
    integrate_adaptive,
    integrate_fixed,
    rhs_case0,
    rhs_case1,
    rhs_case2,
    rhs_case3,
)
from .output import emit_csv
from .stats import (
    ComparisonReport,
    compare_ensemble,
    compare_trajectories,
    extreme_case_census,
    wilcoxon_rank_sum,
)

__version__ = "0.1.0"

__all__ = [
    "Case0Params",
    "Case1Params",
    "Case2Params",
    "Case3Params",
    "ComparisonReport",
    "EngineConfig",
    "Ensemble",
    "ExperimentResult",
    "InfluxSpec",
    "ModelSpec",
    "NegativeParameter",
    "NegativeState",
    "NonFiniteState",
    "PerAgentEngine",
    "PopulationState",
    "RemoveOther",
    "RemoveSelf",
    "ScenarioConfig",
    "SeededStream",
    "SignedBranch",
    "SimulationError",
    "Spawn",
    "Trajectory",
    "TransitionSpec",
    "ZeroDenominator",
    "aggregate_drift",
    "apply_influx",
    "build_case0",
    "build_case1",
    "build_case2",
    "build_case3",
    "build_model",
    "check_drift_equivalence",
    "compare_ensemble",
    "compare_trajectories",
    "derive_seed",
    "emit_csv",
    "eval_rate",
    "extreme_case_census",
    "find_scenario",
    "fnv1a64",
    "integrate_adaptive",
    "integrate_fixed",
    "parse_config",
    "parse_rate_expr",
    "rhs_case0",
    "rhs_case1",
    "rhs_case2",
    "rhs_case3",
    "run_ensemble",
    "run_experiment",
    "run_replication",
    "scenario_registry",
    "splitmix64",
    "step_per_agent",
    "step_tau_leap",
    "sweep",
    "validate_params",
    "wilcoxon_rank_sum",
]
