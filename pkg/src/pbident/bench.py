"""Water-tank benchmark assets and experiment harness: synthetic data with a
multiplicative Gaussian noise model, structure- and parameter-recovery
studies, free-exponent recovery, and ingestion of externally measured data.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import dsl
from .dsl import ast
from .estimate import DEConfig, FitOutcome, repeat_estimate, summarize_ratios
from .modelspace import CompiledModel, compile_structure, enumerate_structures, instantiate
from .search import (
    IdentifyConfig,
    MultiStageResult,
    RankedResult,
    StagePlan,
    apply_promotion,
    load_plan,
    run_multi_stage,
    run_single_stage,
    run_stage,
)
from .simulate import DataError, Dataset, SolverConfig, simulate

VARIANCES = (0.0, 0.01, 0.02, 0.05, 0.1, 0.2)
SPLIT = (1000, 500, 1000)

#: relative-error ratios tracked by the recovery studies
RATIO_PAIRS = (
    ("a1/A1", "tank1.a", "tank1.A"),
    ("k/A1", "pump.k", "tank1.A"),
    ("a2/A2", "tank2.a", "tank2.A"),
    ("a1/A2", "tank1.a", "tank2.A"),
)


def asset_text(name: str) -> str:
    return (resources.files("pbident") / "assets" / name).read_text(encoding="utf-8")


def asset_path(name: str):
    return resources.files("pbident") / "assets" / name


def load_library(power: bool = False) -> ast.Library:
    return dsl.parse_library(asset_text("watertanks_power.pbl" if power else "watertanks.pbl"))


def load_scenario(lib: ast.Library, name: str = "single_stage.pbs") -> ast.Scenario:
    return dsl.parse_scenario(asset_text(name), lib)


def load_two_stage_plan() -> StagePlan:
    import importlib.resources as ir
    with ir.as_file(asset_path("two_stage_plan.json")) as p:
        return load_plan(p)


@dataclass(frozen=True)
class GroundTruth:
    """Data-generating model: square-root transmission and outflow."""

    structure_id: str = "S-S"
    a1: float = 0.65
    A1: float = 20.0
    a2: float = 0.7
    A2: float = 12.0
    k: float = 5.0
    G: float = 4.429
    h1_initial: float = 0.38086
    h2_initial: float = 0.20508

    def params_for(self, model: CompiledModel) -> np.ndarray:
        values = {"tank1.A": self.A1, "tank1.a": self.a1, "tank2.A": self.A2,
                  "tank2.a": self.a2, "pump.k": self.k}
        return np.array([values[name] for name in model.param_names])

    def ratios(self) -> dict[str, float]:
        return {"a1/A1": self.a1 / self.A1, "k/A1": self.k / self.A1,
                "a2/A2": self.a2 / self.A2, "a1/A2": self.a1 / self.A2}


@dataclass(frozen=True)
class NoiseSpec:
    """Multiplicative output noise: y -> y * (1 + N(0, variance))."""

    variance: float = 0.0
    seed: int = 2024

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError("variance must be >= 0")


@dataclass(frozen=True)
class InputSignal:
    """Piecewise-constant excitation with random step levels and dwell times,
    or an externally supplied sample file."""

    kind: str = "steps"  # "steps" | "file"
    n: int = 2500
    dt: float = 4.0
    level_range: tuple[float, float] = (0.3, 2.0)
    dwell_range: tuple[int, int] = (20, 120)  # samples
    seed: int = 7
    path: str | None = None

    def samples(self) -> np.ndarray:
        if self.kind == "file":
            data = np.loadtxt(self.path, delimiter=",", skiprows=1)
            u = data[:, 1] if data.ndim == 2 else data
            if u.shape[0] != self.n:
                raise DataError(f"input file has {u.shape[0]} samples, expected {self.n}")
            return u.astype(float)
        rng = np.random.default_rng(self.seed)
        out = np.empty(self.n)
        i = 0
        while i < self.n:
            dwell = int(rng.integers(self.dwell_range[0], self.dwell_range[1] + 1))
            level = rng.uniform(self.level_range[0], self.level_range[1])
            out[i:i + dwell] = level
            i += dwell
        return out


def _noise_rng(noise: NoiseSpec, output_index: int) -> np.random.Generator:
    # per-output, per-variance streams: adding a variance never perturbs others
    key = int(round(noise.variance * 1_000_000))
    return np.random.default_rng(np.random.SeedSequence([noise.seed, key, output_index]))


def ground_truth_model(lib: ast.Library | None = None) -> tuple[CompiledModel, ast.Scenario, ast.Library]:
    lib = lib or load_library()
    scenario = load_scenario(lib)
    structures = enumerate_structures(instantiate(lib, scenario))
    structure = next(s for s in structures if s.id == "S-S")
    return compile_structure(structure, scenario, lib), scenario, lib


def generate_synthetic(gt: GroundTruth | None = None, input_signal: InputSignal | None = None,
                       noise: NoiseSpec | None = None, solver: SolverConfig | None = None,
                       split: tuple[int, int, int] = SPLIT) -> Dataset:
    """Simulate the generating model over the excitation signal and corrupt the
    outputs (never the input) with multiplicative Gaussian noise."""
    gt = gt or GroundTruth()
    input_signal = input_signal or InputSignal()
    noise = noise or NoiseSpec()
    u = input_signal.samples()
    n = u.shape[0]
    t = np.arange(n) * input_signal.dt

    model, _, _ = ground_truth_model()
    model = dataclasses.replace(
        model, initial=np.array([gt.h1_initial, gt.h2_initial]), _code=model._code)
    clean = Dataset(t=t, columns={"u": u, "h1": np.zeros(n), "h2": np.zeros(n)},
                    train_end=split[0], val_end=split[0] + split[1])
    traj = simulate(model, gt.params_for(model), clean, solver)
    assert traj.ok, "ground-truth simulation must not fail under bounded inputs"

    columns = {"u": u}
    for idx, name in enumerate(("h1", "h2")):
        y = traj.signal(name).copy()
        if noise.variance > 0:
            eps = _noise_rng(noise, idx).normal(0.0, math.sqrt(noise.variance), size=n)
            y = y * (1.0 + eps)
        columns[name] = y
    return Dataset(t=t, columns=columns, train_end=split[0], val_end=split[0] + split[1])


def make_datasets(variances=VARIANCES, input_signal: InputSignal | None = None,
                  noise_seed: int = 2024, solver: SolverConfig | None = None,
                  gt: GroundTruth | None = None) -> dict[float, Dataset]:
    """One dataset per variance, all sharing the identical input column."""
    input_signal = input_signal or InputSignal()
    return {
        v: generate_synthetic(gt, input_signal, NoiseSpec(variance=v, seed=noise_seed), solver)
        for v in variances
    }


def ingest_measured(path, n_expected: int = 2500, split: tuple[int, int, int] = SPLIT) -> Dataset:
    """Load an externally measured benchmark file: CSV with columns t,u,h1,h2."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    header = text.splitlines()[0].split(",") if text else []
    if [h.strip() for h in header] != ["t", "u", "h1", "h2"]:
        raise DataError("measured file must have columns t,u,h1,h2")
    data = Dataset.from_csv(text, split[0], split[0] + split[1])
    if data.n != n_expected:
        raise DataError(f"measured file has {data.n} rows, expected {n_expected}")
    return data


# ---------------------------------------------------------------- experiments

def _narrowed_scenario(lib: ast.Library, scenario: ast.Scenario,
                       choices: dict[str, str]) -> ast.Scenario:
    """Pin skeletons to specific leaf templates (e.g. fix the S-S structure)."""
    skeletons = []
    for sk in scenario.skeletons:
        if sk.name in choices:
            skeletons.append(dataclasses.replace(sk, template=choices[sk.name]))
        else:
            skeletons.append(sk)
    return ast.Scenario(scenario.entity_instances, tuple(skeletons))


def structure_recovery_experiment(mode: str = "single", variances=VARIANCES,
                                  cfg: IdentifyConfig | None = None,
                                  datasets: dict[float, Dataset] | None = None,
                                  budget_scale: float = 1.0):
    """Rank the candidate space per noise variance; returns per-variance results."""
    cfg = cfg or IdentifyConfig()
    if budget_scale != 1.0:
        cfg = dataclasses.replace(cfg, de=cfg.de.scaled(budget_scale))
    lib = load_library()
    datasets = datasets or make_datasets(variances)
    out: dict[float, list[RankedResult] | MultiStageResult] = {}
    for v in variances:
        data = datasets[v]
        if mode == "single":
            out[v] = run_single_stage(lib, load_scenario(lib), data, ("h1", "h2"), cfg)
        elif mode == "multi":
            out[v] = run_multi_stage(lib, load_two_stage_plan(), data, cfg)
        else:
            raise ValueError("mode must be 'single' or 'multi'")
    return out


def parameter_recovery_experiment(mode: str = "single", reps: int = 100, variances=VARIANCES,
                                  cfg: IdentifyConfig | None = None,
                                  datasets: dict[float, Dataset] | None = None,
                                  gt: GroundTruth | None = None):
    """Relative errors of the identifiable parameter ratios with the generating
    structure fixed; `reps` independent optimizer seeds per variance."""
    cfg = cfg or IdentifyConfig()
    gt = gt or GroundTruth()
    lib = load_library()
    datasets = datasets or make_datasets(variances)
    truth = gt.ratios()

    per_variance: dict[float, dict] = {}
    for v in variances:
        data = datasets[v]
        if mode == "single":
            ratio_rows = _single_recovery_ratios(lib, data, cfg, reps)
        elif mode == "multi":
            ratio_rows = _multi_recovery_ratios(lib, data, cfg, reps)
        else:
            raise ValueError("mode must be 'single' or 'multi'")
        errors = {
            label: np.array([abs(row[label] - truth[label]) / abs(truth[label])
                             for row in ratio_rows])
            for label, _, _ in RATIO_PAIRS
        }
        per_variance[v] = {
            "ratios": ratio_rows,
            "relative_errors": errors,
            "median": {label: float(np.median(err)) for label, err in errors.items()},
            "max": {label: float(np.max(err)) for label, err in errors.items()},
        }
    return per_variance


def _single_recovery_ratios(lib, data, cfg: IdentifyConfig, reps: int) -> list[dict[str, float]]:
    scenario = _narrowed_scenario(lib, load_scenario(lib), {
        "valveTransmission": "ValveTransmission.SquareRoot",
        "outflow": "Outflow.SquareRoot",
    })
    structures = enumerate_structures(instantiate(lib, scenario))
    model = compile_structure(structures[0], scenario, lib)
    outcomes = repeat_estimate(model, data, ("h1", "h2"), cfg.de, cfg.solver,
                               reps=reps, denominator=cfg.denominator)
    return [
        {label: o.ratio(num, den) for label, num, den in RATIO_PAIRS}
        for o in outcomes
    ]


def _multi_recovery_ratios(lib, data, cfg: IdentifyConfig, reps: int) -> list[dict[str, float]]:
    plan = load_two_stage_plan()
    stage1 = _narrowed_scenario(lib, dsl.parse_scenario(plan.stages[0].scenario_text, lib),
                                {"valveTransmission": "ValveTransmission.SquareRoot"})
    stage2_text = plan.stages[1].scenario_text
    promote = plan.stages[0].promote

    s1_structures = enumerate_structures(instantiate(lib, stage1))
    s1_model = compile_structure(s1_structures[0], stage1, lib)
    s1_fits = repeat_estimate(s1_model, data, ("h1",), cfg.de, cfg.solver,
                              reps=reps, denominator=cfg.denominator)

    rows = []
    for r, fit in enumerate(s1_fits):
        winner = RankedResult(
            structure_id=s1_structures[0].id, param_names=list(s1_model.param_names),
            params=fit.params, train_error=fit.error, validation_error=fit.error,
            test_error=math.nan, rank=1, seed=fit.seed, evaluations=fit.evaluations,
            model=s1_model, fit=fit,
        )
        stage2 = dsl.parse_scenario(stage2_text, lib)
        stage2 = apply_promotion(stage2, promote, winner)
        stage2 = _narrowed_scenario(lib, stage2, {"outflow": "Outflow.SquareRoot"})
        s2_structures = enumerate_structures(instantiate(lib, stage2))
        s2_model = compile_structure(s2_structures[0], stage2, lib)
        de = dataclasses.replace(cfg.de, seed=cfg.de.seed + r)
        s2_fit = repeat_estimate(s2_model, data, ("h2",), de, cfg.solver, reps=1,
                                 denominator=cfg.denominator)[0]

        stage1_values = fit.named()
        stage2_values = s2_fit.named()
        a1 = stage1_values["tank1.a"]
        rows.append({
            "a1/A1": a1 / stage1_values["tank1.A"],
            "k/A1": stage1_values["pump.k"] / stage1_values["tank1.A"],
            "a2/A2": stage2_values["tank2.a"] / stage2_values["tank2.A"],
            "a1/A2": a1 / stage2_values["tank2.A"],
        })
    return rows


def power_exponent_experiment(variances=(0.0, 0.2), reps: int = 100,
                              cfg: IdentifyConfig | None = None,
                              datasets: dict[float, Dataset] | None = None):
    """Fit the P-P structure of the extended library; statistics of both exponents."""
    cfg = cfg or IdentifyConfig()
    lib = load_library(power=True)
    scenario = load_scenario(lib)
    datasets = datasets or make_datasets(variances)
    structures = enumerate_structures(instantiate(lib, scenario))
    structure = next(s for s in structures if s.id == "P-P")

    out: dict[float, dict] = {}
    for v in variances:
        model = compile_structure(structure, scenario, lib)
        outcomes = repeat_estimate(model, datasets[v], ("h1", "h2"), cfg.de, cfg.solver,
                                   reps=reps, denominator=cfg.denominator)
        p1 = np.array([o.named()["valveTransmission.P"] for o in outcomes])
        p2 = np.array([o.named()["outflow.P"] for o in outcomes])
        out[v] = {
            "P_h1": {"mean": float(p1.mean()), "std": float(p1.std()), "values": p1},
            "P_h2": {"mean": float(p2.mean()), "std": float(p2.std()), "values": p2},
            "outcomes": outcomes,
        }
    return out
