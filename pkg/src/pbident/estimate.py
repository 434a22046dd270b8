"""Constant-parameter estimation with Differential Evolution (rand/1/bin).

The objective is the summed training-range output error of a long-term
simulation. All randomness is drawn from a seeded generator in a fixed order,
and candidate evaluations are independent, so outcomes are bit-identical
regardless of how the population is scheduled across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .modelspace import CompiledModel
from .simulate import Dataset, SolverConfig, rrmse, simulate, simulate_batch


@dataclass(frozen=True)
class DEConfig:
    pop_size: int = 60
    weight: float = 0.9  # differential weight F
    crossover: float = 0.9  # crossover probability Cr
    budget_per_param: int = 50_000  # objective evaluations per free parameter
    seed: int = 0
    bounds_mode: str = "clip"  # "clip" | "reflect"

    def __post_init__(self):
        if self.pop_size < 4:
            raise ValueError("pop_size must be >= 4")
        if not 0 < self.crossover <= 1:
            raise ValueError("crossover must be in (0, 1]")
        if self.weight <= 0:
            raise ValueError("weight must be > 0")
        if self.budget_per_param < self.pop_size:
            raise ValueError("budget_per_param must be >= pop_size")
        if self.bounds_mode not in ("clip", "reflect"):
            raise ValueError("bounds_mode must be 'clip' or 'reflect'")

    def scaled(self, budget_scale: float) -> "DEConfig":
        budget = max(self.pop_size, int(round(self.budget_per_param * budget_scale)))
        return DEConfig(self.pop_size, self.weight, self.crossover, budget,
                        self.seed, self.bounds_mode)


@dataclass
class FitOutcome:
    params: np.ndarray
    names: list[str]
    error: float
    evaluations: int
    trace: list[tuple[float, float]]  # per generation: (best error, mean error)
    seed: int

    def named(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, self.params)}

    def ratio(self, numerator: str, denominator: str) -> float:
        values = self.named()
        return values[numerator] / values[denominator]


def _apply_bounds(trial: np.ndarray, lo: np.ndarray, hi: np.ndarray, mode: str) -> None:
    if mode == "clip":
        np.clip(trial, lo, hi, out=trial)
        return
    span = hi - lo
    for _ in range(100):  # reflection may need several folds for far-out mutants
        below = trial < lo
        above = trial > hi
        if not (below.any() or above.any()):
            return
        trial[below] = (2 * lo - trial)[below]
        trial[above] = (2 * hi - trial)[above]
    np.clip(trial, lo, hi, out=trial)


def minimize(objective_batch, lo, hi, cfg: DEConfig) -> FitOutcome:
    """DE/rand/1/bin over a box. `objective_batch(P) -> errors` evaluates the
    rows of P; failed candidates may score +inf. The total evaluation budget
    is d * budget_per_param. Deterministic for a fixed seed."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    d = lo.shape[0]
    if d == 0:
        raise ValueError("minimize needs at least one dimension")
    if np.any(~(lo < hi)) or not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("bounds must be finite with lo < hi")

    rng = np.random.default_rng(cfg.seed)
    NP = cfg.pop_size
    budget = d * cfg.budget_per_param

    pop = lo + rng.random((NP, d)) * (hi - lo)
    errors = np.asarray(objective_batch(pop), dtype=float)
    np.nan_to_num(errors, copy=False, nan=math.inf, posinf=math.inf)
    evals = NP
    trace = [_trace_point(errors)]

    trials = np.empty_like(pop)
    while evals < budget:
        for i in range(NP):
            r1, r2, r3 = _pick_distinct(rng, NP, i)
            mutant = pop[r1] + cfg.weight * (pop[r2] - pop[r3])
            cross = rng.random(d) < cfg.crossover
            cross[rng.integers(d)] = True  # guaranteed crossover index
            trial = np.where(cross, mutant, pop[i])
            _apply_bounds(trial, lo, hi, cfg.bounds_mode)
            trials[i] = trial
        trial_errors = np.asarray(objective_batch(trials), dtype=float)
        np.nan_to_num(trial_errors, copy=False, nan=math.inf, posinf=math.inf)
        evals += NP
        improved = trial_errors <= errors  # greedy; ties move to the trial
        pop[improved] = trials[improved]
        errors[improved] = trial_errors[improved]
        trace.append(_trace_point(errors))

    best = int(np.lexsort((np.arange(NP), errors))[0])
    return FitOutcome(params=pop[best].copy(), names=[], error=float(errors[best]),
                      evaluations=evals, trace=trace, seed=cfg.seed)


def _trace_point(errors: np.ndarray) -> tuple[float, float]:
    finite = errors[np.isfinite(errors)]
    mean = float(np.mean(finite)) if finite.size else math.inf
    return (float(np.min(errors)), mean)


def _pick_distinct(rng: np.random.Generator, NP: int, i: int) -> tuple[int, int, int]:
    picks: list[int] = []
    while len(picks) < 3:
        r = int(rng.integers(NP))
        if r != i and r not in picks:
            picks.append(r)
    return picks[0], picks[1], picks[2]


def objective(model: CompiledModel, params, data: Dataset, outputs,
              solver: SolverConfig | None = None, denominator: str = "simulated") -> float:
    """Summed training-range output error of one simulation; +inf on failure."""
    traj = simulate(model, params, data, solver, end_index=data.train_end)
    if not traj.ok:
        return math.inf
    total = 0.0
    for column in outputs:
        total += rrmse(data.column(column), traj.signal(column), data.train_range, denominator)
    return total


def _objective_batch(model: CompiledModel, data: Dataset, outputs,
                     solver: SolverConfig | None, denominator: str):
    train = data.train_end
    targets = [(model.state_for_column(c), data.column(c)[:train]) for c in outputs]
    means = [float(np.mean(col)) for _, col in targets]

    def evaluate(P: np.ndarray) -> np.ndarray:
        trajs, reached = simulate_batch(model, P, data, solver, end_index=train)
        errors = np.zeros(P.shape[0])
        for (state, col), ybar in zip(targets, means):
            sim = trajs[:, :, state]
            num = np.sum((col[None, :] - sim) ** 2, axis=1)
            spread = sim if denominator == "simulated" else col[None, :]
            den = np.sum((ybar - spread) ** 2, axis=1)
            with np.errstate(invalid="ignore", divide="ignore"):
                errors += np.sqrt(num / den)
        errors[reached < train - 1] = math.inf
        np.nan_to_num(errors, copy=False, nan=math.inf, posinf=math.inf)
        return errors

    return evaluate


def estimate(model: CompiledModel, data: Dataset, outputs, cfg: DEConfig | None = None,
             solver: SolverConfig | None = None, denominator: str = "simulated") -> FitOutcome:
    """Fit the model's free parameters against the training range.

    A model with no free parameters is scored once and returned unchanged.
    """
    cfg = cfg or DEConfig()
    if data.train_end < 2:
        raise ValueError("training segment is empty")
    if model.n_params == 0:
        error = objective(model, np.empty(0), data, outputs, solver, denominator)
        return FitOutcome(params=np.empty(0), names=[], error=error,
                          evaluations=1, trace=[(error, error)], seed=cfg.seed)
    outcome = minimize(_objective_batch(model, data, outputs, solver, denominator),
                       model.lower, model.upper, cfg)
    outcome.names = list(model.param_names)
    return outcome


def repeat_estimate(model: CompiledModel, data: Dataset, outputs, cfg: DEConfig | None = None,
                    solver: SolverConfig | None = None, reps: int = 1,
                    denominator: str = "simulated") -> list[FitOutcome]:
    """Independent fits with seeds seed+0 .. seed+reps-1, in seed order."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    cfg = cfg or DEConfig()
    outcomes = []
    for r in range(reps):
        run_cfg = DEConfig(cfg.pop_size, cfg.weight, cfg.crossover,
                           cfg.budget_per_param, cfg.seed + r, cfg.bounds_mode)
        outcomes.append(estimate(model, data, outputs, run_cfg, solver, denominator))
    return outcomes


def summarize_ratios(outcomes, pairs) -> dict[str, dict[str, float]]:
    """Mean/std of named parameter ratios across repeated fits.

    `pairs` is an iterable of (label, numerator, denominator).
    """
    out: dict[str, dict[str, float]] = {}
    for label, num, den in pairs:
        values = np.array([o.ratio(num, den) for o in outcomes])
        out[label] = {"mean": float(values.mean()), "std": float(values.std())}
    return out
