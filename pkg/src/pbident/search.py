"""Identification pipeline: enumerate candidate structures, fit each against
the training range, rank by validation output error, and score the designated
output on the test range. Supports a single simultaneous stage or a declared
sequence of stages whose winners feed the next stage's scenario.
"""

from __future__ import annotations

import dataclasses
import json
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dsl
from .dsl import ast
from .estimate import DEConfig, FitOutcome, estimate
from .modelspace import (
    CandidateStructure,
    CompiledModel,
    compile_structure,
    enumerate_structures,
    instantiate,
)
from .simulate import Dataset, SolverConfig, Trajectory, multi_output_error, rrmse, simulate


class PlanError(Exception):
    """A stage plan is inconsistent with its scenarios; raised before any fitting."""


@dataclass(frozen=True)
class IdentifyConfig:
    de: DEConfig = field(default_factory=DEConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    test_output: str = "h2"
    denominator: str = "simulated"


@dataclass
class RankedResult:
    structure_id: str
    param_names: list[str]
    params: np.ndarray
    train_error: float
    validation_error: float
    test_error: float
    rank: int
    seed: int
    evaluations: int
    model: CompiledModel
    fit: FitOutcome

    def named_params(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.param_names, self.params)}


def derive_seed(base: int, tag: str) -> int:
    """Stable per-structure seed; independent of enumeration order."""
    return (base * 1_000_003 + zlib.crc32(tag.encode())) % 2**63


def _score(model: CompiledModel, params, data: Dataset, outputs, cfg: IdentifyConfig,
           test_output: str | None) -> tuple[Trajectory, float, float]:
    traj = simulate(model, params, data, cfg.solver)
    val = multi_output_error(traj, data, outputs, data.validation_range, cfg.denominator)
    test = math.nan
    if test_output is not None and test_output in model.state_data:
        test = rrmse(data.column(test_output), traj.signal(test_output),
                     data.test_range, cfg.denominator)
    return traj, val, test


def _rank(results: list[RankedResult]) -> list[RankedResult]:
    results.sort(key=lambda r: (r.validation_error, r.structure_id))
    for i, r in enumerate(results):
        r.rank = i + 1
    return results


def run_stage(lib: ast.Library, scenario: ast.Scenario, data: Dataset, outputs,
              cfg: IdentifyConfig, seed_tag: str = "", test_output: str | None = None,
              ) -> list[RankedResult]:
    """Fit every candidate structure of one scenario and rank by validation error."""
    for column in outputs:
        data.column(column)  # fail fast on unknown output columns
    structures = enumerate_structures(instantiate(lib, scenario))
    results: list[RankedResult] = []
    for structure in structures:
        model = compile_structure(structure, scenario, lib)
        seed = derive_seed(cfg.de.seed, seed_tag + structure.id)
        de = dataclasses.replace(cfg.de, seed=seed)
        fit = estimate(model, data, outputs, de, cfg.solver, cfg.denominator)
        _, val, test = _score(model, fit.params, data, outputs, cfg, test_output)
        results.append(RankedResult(
            structure_id=structure.id, param_names=list(model.param_names),
            params=fit.params, train_error=fit.error, validation_error=val,
            test_error=test, rank=0, seed=seed, evaluations=fit.evaluations,
            model=model, fit=fit,
        ))
    return _rank(results)


def run_single_stage(lib: ast.Library, scenario: ast.Scenario, data: Dataset,
                     outputs, cfg: IdentifyConfig | None = None) -> list[RankedResult]:
    """Fit all signals simultaneously over the full candidate space."""
    cfg = cfg or IdentifyConfig()
    return run_stage(lib, scenario, data, outputs, cfg, test_output=cfg.test_output)


# ------------------------------------------------------------------- staging

@dataclass(frozen=True)
class Promotion:
    """What flows from a stage's winner into the next stage's scenario."""

    consts: dict[str, str] = field(default_factory=dict)  # target address -> fitted source param
    skeletons: dict[str, str] = field(default_factory=dict)  # target skeleton -> source skeleton


@dataclass(frozen=True)
class Stage:
    scenario_text: str
    outputs: tuple[str, ...]
    promote: Promotion | None = None  # None for the final stage
    name: str = ""


@dataclass(frozen=True)
class StagePlan:
    stages: tuple[Stage, ...]


@dataclass
class StageOutcome:
    results: list[RankedResult]
    winner: RankedResult
    ties: list[str]
    scenario: ast.Scenario


@dataclass
class MultiStageResult:
    stages: list[StageOutcome]
    final: list[RankedResult]  # final-stage results with composed structure ids


def load_plan(path) -> StagePlan:
    """Read a stage plan JSON; scenario paths resolve relative to the plan file."""
    path = Path(path)
    spec = json.loads(path.read_text(encoding="utf-8"))
    stages = []
    for i, entry in enumerate(spec["stages"]):
        scenario_path = path.parent / entry["scenario"]
        promote = None
        if "promote" in entry:
            promote = Promotion(consts=dict(entry["promote"].get("consts", {})),
                                skeletons=dict(entry["promote"].get("skeletons", {})))
        stages.append(Stage(scenario_text=scenario_path.read_text(encoding="utf-8"),
                            outputs=tuple(entry["outputs"]), promote=promote,
                            name=entry.get("name", f"stage{i + 1}")))
    return StagePlan(tuple(stages))


def _promoted_addresses(scenario: ast.Scenario) -> set[str]:
    out = set()
    for inst in scenario.entity_instances:
        for c in inst.const_bindings:
            if c.kind == ast.PROMOTED:
                out.add(f"{inst.name}.{c.name}")
    for sk in scenario.skeletons:
        for c in sk.const_bindings:
            if c.kind == ast.PROMOTED:
                out.add(f"{sk.name}.{c.name}")
    return out


def _free_addresses(scenario: ast.Scenario) -> set[str]:
    out = set()
    for inst in scenario.entity_instances:
        for c in inst.const_bindings:
            if c.kind == ast.FREE:
                out.add(f"{inst.name}.{c.name}")
    for sk in scenario.skeletons:
        for c in sk.const_bindings:
            if c.kind == ast.FREE:
                out.add(f"{sk.name}.{c.name}")
    return out


def validate_plan(lib: ast.Library, plan: StagePlan) -> list[ast.Scenario]:
    """Parse every stage scenario and check promotion coverage up front."""
    if not plan.stages:
        raise PlanError("plan has no stages")
    scenarios = [dsl.parse_scenario(stage.scenario_text, lib) for stage in plan.stages]

    first_promoted = _promoted_addresses(scenarios[0])
    if first_promoted:
        raise PlanError(f"stage 1 cannot contain promoted constants: {sorted(first_promoted)}")
    if plan.stages[-1].promote is not None and (
            plan.stages[-1].promote.consts or plan.stages[-1].promote.skeletons):
        raise PlanError("the final stage has nothing to promote into")

    for k in range(len(plan.stages) - 1):
        promote = plan.stages[k].promote or Promotion()
        targets = set(promote.consts)
        placeholders = _promoted_addresses(scenarios[k + 1])
        missing = placeholders - targets
        extra = targets - placeholders
        if missing:
            raise PlanError(f"stage {k + 2} placeholders not covered by promotion: {sorted(missing)}")
        if extra:
            raise PlanError(f"promotion targets without placeholders in stage {k + 2}: {sorted(extra)}")
        free = _free_addresses(scenarios[k])
        for target, source in promote.consts.items():
            if source not in free:
                raise PlanError(f"promotion source {source!r} is not a free constant of stage {k + 1}")
        stage_skeletons = {sk.name for sk in scenarios[k].skeletons}
        next_skeletons = {sk.name for sk in scenarios[k + 1].skeletons}
        for target, source in promote.skeletons.items():
            if target not in next_skeletons:
                raise PlanError(f"promotion narrows unknown skeleton {target!r} in stage {k + 2}")
            if source not in stage_skeletons:
                raise PlanError(f"promotion reads unknown skeleton {source!r} in stage {k + 1}")
    return scenarios


def apply_promotion(scenario: ast.Scenario, promote: Promotion,
                    winner: RankedResult) -> ast.Scenario:
    """Fix promoted constants to the winner's fitted values and narrow promoted
    skeletons to the winner's selected leaves."""
    fitted = winner.named_params()

    def resolve_const(addr: str, binding: ast.ConstBinding) -> ast.ConstBinding:
        if binding.kind != ast.PROMOTED:
            return binding
        source = promote.consts[addr]
        return ast.ConstBinding(binding.name, ast.FIXED, fitted[source])

    instances = tuple(
        dataclasses.replace(inst, const_bindings=tuple(
            resolve_const(f"{inst.name}.{c.name}", c) for c in inst.const_bindings))
        for inst in scenario.entity_instances
    )
    skeletons = []
    for sk in scenario.skeletons:
        consts = tuple(resolve_const(f"{sk.name}.{c.name}", c) for c in sk.const_bindings)
        template = sk.template
        if sk.name in promote.skeletons:
            source = promote.skeletons[sk.name]
            template = winner.model.structure.instance(source).leaf
        skeletons.append(dataclasses.replace(sk, template=template, const_bindings=consts))
    return ast.Scenario(instances, tuple(skeletons))


def run_multi_stage(lib: ast.Library, plan: StagePlan, data: Dataset,
                    cfg: IdentifyConfig | None = None) -> MultiStageResult:
    """Run the stages in order, promoting each winner into the next scenario.

    The final ranking is the last stage's, with structure ids prefixed by the
    winning choices of the earlier stages.
    """
    cfg = cfg or IdentifyConfig()
    validate_plan(lib, plan)

    outcomes: list[StageOutcome] = []
    scenario_texts = [stage.scenario_text for stage in plan.stages]
    current = dsl.parse_scenario(scenario_texts[0], lib)
    for k, stage in enumerate(plan.stages):
        if k > 0:
            previous = plan.stages[k - 1]
            current = dsl.parse_scenario(scenario_texts[k], lib)
            current = apply_promotion(current, previous.promote or Promotion(),
                                      outcomes[-1].winner)
        is_last = k == len(plan.stages) - 1
        results = run_stage(lib, current, data, stage.outputs, cfg,
                            seed_tag=f"{stage.name}:",
                            test_output=cfg.test_output if is_last else None)
        winner = results[0]
        ties = [r.structure_id for r in results[1:]
                if r.validation_error == winner.validation_error]
        outcomes.append(StageOutcome(results=results, winner=winner, ties=ties,
                                     scenario=current))

    prefix = "-".join(o.winner.structure_id for o in outcomes[:-1])
    final = []
    for r in outcomes[-1].results:
        final_r = RankedResult(
            structure_id=f"{prefix}-{r.structure_id}" if prefix else r.structure_id,
            param_names=r.param_names, params=r.params, train_error=r.train_error,
            validation_error=r.validation_error, test_error=r.test_error, rank=r.rank,
            seed=r.seed, evaluations=r.evaluations, model=r.model, fit=r.fit,
        )
        final.append(final_r)
    return MultiStageResult(stages=outcomes, final=final)


# ----------------------------------------------------------------- reporting

def report(results: list[RankedResult], fmt: str = "text") -> str:
    """Ranked table of validation and test errors per structure."""
    if not results:
        raise ValueError("no results to report")
    if fmt == "text":
        lines = [f"{'Model':<10} {'validation':>12} {'test':>12}"]
        for r in results:
            lines.append(f"{r.structure_id:<10} {_fmt_err(r.validation_error):>12} "
                         f"{_fmt_err(r.test_error):>12}")
        return "\n".join(lines) + "\n"
    if fmt == "csv":
        lines = ["rank,model,validation,test"]
        for r in results:
            lines.append(f"{r.rank},{r.structure_id},{_fmt_err(r.validation_error)},"
                         f"{_fmt_err(r.test_error)}")
        return "\n".join(lines) + "\n"
    if fmt == "json":
        payload = [
            {
                "rank": r.rank,
                "model": r.structure_id,
                "train": _json_err(r.train_error),
                "validation": _json_err(r.validation_error),
                "test": _json_err(r.test_error),
                "params": {k: v for k, v in r.named_params().items()},
                "seed": r.seed,
                "evaluations": r.evaluations,
            }
            for r in results
        ]
        return json.dumps({"results": payload}, indent=2) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


def params_table(results: list[RankedResult]) -> str:
    """CSV of fitted parameters per structure."""
    names = sorted({n for r in results for n in r.param_names})
    lines = ["model," + ",".join(names)]
    for r in results:
        values = r.named_params()
        lines.append(r.structure_id + "," + ",".join(
            repr(values[n]) if n in values else "" for n in names))
    return "\n".join(lines) + "\n"


def export_series(result: RankedResult, data: Dataset, outputs,
                  solver: SolverConfig | None = None) -> str:
    """CSV of measured vs simulated series for one fitted model."""
    traj = simulate(result.model, result.params, data, solver)
    header = ["t"]
    columns = [data.t]
    for out in outputs:
        header += [f"{out}_measured", f"{out}_simulated"]
        columns += [data.column(out), traj.signal(out)]
    lines = [",".join(header)]
    for i in range(data.n):
        lines.append(",".join(repr(float(c[i])) for c in columns))
    return "\n".join(lines) + "\n"


def _fmt_err(value: float) -> str:
    if math.isnan(value):
        return "-"
    if math.isinf(value):
        return "inf"
    return f"{value:.6f}"


def _json_err(value: float):
    if math.isnan(value):
        return None
    if math.isinf(value):
        return "inf"
    return value
