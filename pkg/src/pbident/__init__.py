"""Process-based gray-box identification of nonlinear ODE models.

Parse a domain library of template entities and processes, describe one
concrete system as a modeling scenario, enumerate every candidate structure,
fit the free constants against measured or synthetic time series with
Differential Evolution, and rank the candidates by validation output error.
"""

from .dsl import (
    Library,
    ParseError,
    Scenario,
    SourceError,
    ValidationError,
    parse_library,
    parse_scenario,
    print_library,
    print_scenario,
)
from .estimate import DEConfig, FitOutcome, estimate, objective, repeat_estimate
from .modelspace import (
    CandidateStructure,
    CompiledModel,
    ModelSpaceError,
    ProcessInstance,
    compile_structure,
    enumerate_structures,
    eval_rhs,
    format_model,
    instantiate,
    model_to_json,
)
from .search import (
    IdentifyConfig,
    MultiStageResult,
    PlanError,
    RankedResult,
    StagePlan,
    load_plan,
    report,
    run_multi_stage,
    run_single_stage,
)
from .simulate import (
    DataError,
    Dataset,
    SolverConfig,
    Trajectory,
    multi_output_error,
    rrmse,
    simulate,
)

__all__ = [
    "Library", "ParseError", "Scenario", "SourceError", "ValidationError",
    "parse_library", "parse_scenario", "print_library", "print_scenario",
    "DEConfig", "FitOutcome", "estimate", "objective", "repeat_estimate",
    "CandidateStructure", "CompiledModel", "ModelSpaceError", "ProcessInstance",
    "compile_structure", "enumerate_structures", "eval_rhs", "format_model",
    "instantiate", "model_to_json",
    "IdentifyConfig", "MultiStageResult", "PlanError", "RankedResult",
    "StagePlan", "load_plan", "report", "run_multi_stage", "run_single_stage",
    "DataError", "Dataset", "SolverConfig", "Trajectory",
    "multi_output_error", "rrmse", "simulate",
]
