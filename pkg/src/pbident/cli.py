"""Command-line entry point.

Subcommands: validate, identify, gendata, simulate, experiment. Every run
writes a manifest.json capturing the resolved configuration before any
computation starts; replaying a run with the same manifest reproduces its
artifacts byte for byte. Exit codes: 0 success, 1 validation/model error,
2 I/O or configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import bench, dsl, search
from .dsl.errors import SourceError
from .estimate import DEConfig
from .modelspace import ModelSpaceError, compile_structure, enumerate_structures, instantiate
from .search import IdentifyConfig, PlanError
from .simulate import DataError, Dataset, SolverConfig, multi_output_error, rrmse, simulate

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2


def _version() -> str:
    try:
        from importlib.metadata import version
        return version("pbident")
    except Exception:
        return "unknown"


def _read(path) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _split(text: str) -> tuple[int, int, int]:
    parts = [int(x) for x in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("--split needs three comma-separated counts")
    return tuple(parts)  # type: ignore[return-value]


def _variances(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(","))


def _outputs(text: str) -> tuple[str, ...]:
    return tuple(s for s in text.split(",") if s)


def _run_dir(args, name: str) -> Path:
    if args.out:
        run = Path(args.out)
    else:
        root = Path(os.environ.get("PBIDENT_RUN_ROOT", "runs"))
        run = root / name
    run.mkdir(parents=True, exist_ok=True)
    return run


def _write(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _manifest(run: Path, subcommand: str, payload: dict) -> None:
    doc = {"tool": "pbident", "version": _version(), "subcommand": subcommand}
    doc.update(payload)
    _write(run / "manifest.json", json.dumps(doc, indent=2) + "\n")


def _set_jobs(jobs: int | None) -> None:
    if jobs is not None:
        import numba
        numba.set_num_threads(max(1, jobs))


def _de_config(args) -> DEConfig:
    cfg = DEConfig(pop_size=args.pop_size, weight=args.weight, crossover=args.crossover,
                   budget_per_param=args.budget, seed=args.seed)
    if args.budget_scale != 1.0:
        cfg = cfg.scaled(args.budget_scale)
    return cfg


def _solver_config(args) -> SolverConfig:
    return SolverConfig(abs_tol=args.abs_tol, rel_tol=args.rel_tol,
                        max_steps=args.max_steps, hold=args.hold)


def _add_solver_args(p) -> None:
    p.add_argument("--abs-tol", type=float, default=1e-8, help="absolute tolerance (default 1e-8)")
    p.add_argument("--rel-tol", type=float, default=1e-4, help="relative tolerance (default 1e-4)")
    p.add_argument("--max-steps", type=int, default=100_000,
                   help="internal steps per output interval (default 100000)")
    p.add_argument("--hold", choices=("zoh", "linear"), default="zoh",
                   help="input hold between samples (default zoh)")


def _add_de_args(p) -> None:
    p.add_argument("--pop-size", type=int, default=60, help="population size (default 60)")
    p.add_argument("--weight", type=float, default=0.9, help="differential weight F (default 0.9)")
    p.add_argument("--crossover", type=float, default=0.9, help="crossover probability Cr (default 0.9)")
    p.add_argument("--budget", type=int, default=50_000,
                   help="objective evaluations per free parameter (default 50000)")
    p.add_argument("--budget-scale", type=float, default=1.0,
                   help="scale the evaluation budget, e.g. 0.1 for quick runs")
    p.add_argument("--seed", type=int, default=0, help="master random seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pbident",
                                 description="Process-based gray-box identification of ODE models")
    ap.add_argument("--version", action="version", version=f"pbident {_version()}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and validate a library (and optional scenario)")
    p.add_argument("library", help="library file (.pbl)")
    p.add_argument("scenario", nargs="?", help="scenario file (.pbs)")
    p.add_argument("--dump-ast", action="store_true", help="print the JSON AST")

    p = sub.add_parser("identify", help="enumerate, fit and rank candidate structures")
    p.add_argument("--library", required=True)
    p.add_argument("--scenario", help="scenario file (single-stage mode)")
    p.add_argument("--plan", help="stage-plan JSON (multi-stage mode)")
    p.add_argument("--data", required=True, help="dataset CSV (t plus signal columns)")
    p.add_argument("--split", type=_split, default=(1000, 500, 1000),
                   help="train,validation,test sample counts (default 1000,500,1000)")
    p.add_argument("--outputs", type=_outputs, default=("h1", "h2"),
                   help="observed columns to fit, comma separated (default h1,h2)")
    p.add_argument("--mode", choices=("single", "multi"), default="single")
    p.add_argument("--test-output", default="h2", help="column scored on the test range")
    p.add_argument("--denominator", choices=("simulated", "measured"), default="simulated",
                   help="spread used in the error denominator (default simulated)")
    p.add_argument("--jobs", type=int, default=None, help="worker threads (default: all cores)")
    p.add_argument("--out", help="run directory (default $PBIDENT_RUN_ROOT/<name>)")
    _add_de_args(p)
    _add_solver_args(p)

    p = sub.add_parser("gendata", help="generate a synthetic benchmark dataset")
    p.add_argument("--variance", type=float, default=0.0, help="output noise variance (default 0)")
    p.add_argument("--noise-seed", type=int, default=2024)
    p.add_argument("--input-seed", type=int, default=7)
    p.add_argument("--n", type=int, default=2500, help="number of samples (default 2500)")
    p.add_argument("--dt", type=float, default=4.0, help="sample period in seconds (default 4)")
    p.add_argument("--levels", type=_variances, default=(0.3, 2.0),
                   help="input step level range lo,hi (default 0.3,2.0)")
    p.add_argument("--dwell", type=_variances, default=(20, 120),
                   help="input dwell range in samples lo,hi (default 20,120)")
    p.add_argument("--split", type=_split, default=(1000, 500, 1000))
    p.add_argument("--out", help="run directory")
    p.add_argument("--seed", type=int, default=0, help="unused; kept for manifest uniformity")
    _add_solver_args(p)

    p = sub.add_parser("simulate", help="simulate one structure and report its output error")
    p.add_argument("--library", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--structure", default="S-S", help="structure id to simulate (default S-S)")
    p.add_argument("--params", help="JSON file of parameter values by name")
    p.add_argument("--ground-truth", action="store_true",
                   help="use the benchmark generating parameters")
    p.add_argument("--data", required=True)
    p.add_argument("--split", type=_split, default=(1000, 500, 1000))
    p.add_argument("--outputs", type=_outputs, default=("h1", "h2"))
    p.add_argument("--denominator", choices=("simulated", "measured"), default="simulated")
    p.add_argument("--out", help="run directory")
    _add_solver_args(p)

    p = sub.add_parser("experiment", help="run a benchmark study")
    p.add_argument("name", choices=("structure-recovery", "parameter-recovery", "power-exponent"))
    p.add_argument("--mode", choices=("single", "multi"), default="single")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--variances", type=_variances, default=bench.VARIANCES)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--out", help="run directory")
    _add_de_args(p)
    _add_solver_args(p)
    return ap


# ------------------------------------------------------------------ commands

def cmd_validate(args) -> int:
    lib_text = _read(args.library)
    lib = dsl.parse_library(lib_text)
    dumps = [dsl.library_to_json(lib)]
    if args.scenario:
        scenario = dsl.parse_scenario(_read(args.scenario), lib)
        dumps.append(dsl.scenario_to_json(scenario))
    if args.dump_ast:
        print(json.dumps(dumps[0] if len(dumps) == 1 else {"library": dumps[0], "scenario": dumps[1]},
                         indent=2))
    else:
        n_ent = len(lib.entity_templates)
        n_proc = len(lib.roots)
        print(f"{args.library}: {n_ent} entity templates, {n_proc} process hierarchies")
        if args.scenario:
            print(f"{args.scenario}: valid")
    return EXIT_OK


def _write_stage_artifacts(run: Path, results, data, outputs, solver) -> None:
    _write(run / "results.csv", search.report(results, "csv"))
    _write(run / "results.json", search.report(results, "json"))
    _write(run / "params.csv", search.params_table(results))
    for r in results:
        lines = ["generation,best_error,mean_error"]
        for g, (best, mean) in enumerate(r.fit.trace):
            lines.append(f"{g},{repr(best)},{repr(mean)}")
        _write(run / f"trace_{r.structure_id}.csv", "\n".join(lines) + "\n")
    fits = [
        {"model": r.structure_id, "params": r.named_params(),
         "bounds": {n: [float(lo), float(hi)] for n, lo, hi in
                    zip(r.model.param_names, r.model.lower, r.model.upper)},
         "error": search._json_err(r.train_error), "seed": r.seed, "evals": r.evaluations}
        for r in results
    ]
    _write(run / "fits.json", json.dumps({"fits": fits}, indent=2) + "\n")
    best = results[0]
    try:
        _write(run / "series_rank1.csv", search.export_series(best, data, outputs, solver))
    except KeyError:
        pass  # an output column may have no simulated state in intermediate stages


def cmd_identify(args) -> int:
    if args.mode == "single" and not args.scenario:
        raise ConfigError("--mode single needs --scenario")
    if args.mode == "multi" and not args.plan:
        raise ConfigError("--mode multi needs --plan")
    lib = dsl.parse_library(_read(args.library))
    data = Dataset.load(args.data, args.split[0], args.split[0] + args.split[1])
    cfg = IdentifyConfig(de=_de_config(args), solver=_solver_config(args),
                         test_output=args.test_output, denominator=args.denominator)
    if args.mode == "multi":
        plan = search.load_plan(args.plan)
        search.validate_plan(lib, plan)  # config errors must precede any fitting
    _set_jobs(args.jobs)

    run = _run_dir(args, f"identify-{args.mode}-seed{args.seed}")
    _manifest(run, "identify", {
        "library": str(args.library), "scenario": str(args.scenario or ""),
        "plan": str(args.plan or ""), "data": str(args.data),
        "split": list(args.split), "outputs": list(args.outputs), "mode": args.mode,
        "test_output": args.test_output, "denominator": args.denominator,
        "de": dataclasses.asdict(cfg.de), "solver": dataclasses.asdict(cfg.solver),
        "jobs": args.jobs,
    })

    if args.mode == "single":
        scenario = dsl.parse_scenario(_read(args.scenario), lib)
        results = search.run_single_stage(lib, scenario, data, args.outputs, cfg)
        _write_stage_artifacts(run, results, data, args.outputs, cfg.solver)
        print(search.report(results, "text"))
    else:
        multi = search.run_multi_stage(lib, plan, data, cfg)
        for i, (stage, outcome) in enumerate(zip(plan.stages, multi.stages)):
            stage_dir = run / f"stage{i + 1}"
            stage_dir.mkdir(exist_ok=True)
            _write_stage_artifacts(stage_dir, outcome.results, data, stage.outputs, cfg.solver)
            _write(stage_dir / "winner.json", json.dumps(
                {"model": outcome.winner.structure_id, "ties": outcome.ties,
                 "params": outcome.winner.named_params()}, indent=2) + "\n")
        _write(run / "results.csv", search.report(multi.final, "csv"))
        _write(run / "results.json", search.report(multi.final, "json"))
        print(search.report(multi.final, "text"))
    return EXIT_OK


def cmd_gendata(args) -> int:
    signal = bench.InputSignal(n=args.n, dt=args.dt,
                               level_range=(args.levels[0], args.levels[1]),
                               dwell_range=(int(args.dwell[0]), int(args.dwell[1])),
                               seed=args.input_seed)
    noise = bench.NoiseSpec(variance=args.variance, seed=args.noise_seed)
    run = _run_dir(args, f"gendata-v{args.variance:g}-s{args.noise_seed}")
    _manifest(run, "gendata", {
        "variance": args.variance, "noise_seed": args.noise_seed,
        "input_seed": args.input_seed, "n": args.n, "dt": args.dt,
        "levels": list(args.levels), "dwell": [int(x) for x in args.dwell],
        "split": list(args.split), "solver": dataclasses.asdict(_solver_config(args)),
    })
    data = bench.generate_synthetic(None, signal, noise, _solver_config(args), args.split)
    data.save(run / "dataset.csv")
    print(run / "dataset.csv")
    return EXIT_OK


def cmd_simulate(args) -> int:
    lib = dsl.parse_library(_read(args.library))
    scenario = dsl.parse_scenario(_read(args.scenario), lib)
    data = Dataset.load(args.data, args.split[0], args.split[0] + args.split[1])
    structures = enumerate_structures(instantiate(lib, scenario))
    matches = [s for s in structures if s.id == args.structure]
    if not matches:
        raise ConfigError(f"no structure {args.structure!r} "
                          f"(have {', '.join(s.id for s in structures)})")
    model = compile_structure(matches[0], scenario, lib)

    if args.ground_truth:
        params = bench.GroundTruth().params_for(model)
    elif args.params:
        values = json.loads(_read(args.params))
        try:
            params = np.array([float(values[n]) for n in model.param_names])
        except KeyError as exc:
            raise ConfigError(f"--params file misses {exc.args[0]!r}") from None
    else:
        raise ConfigError("need --params FILE or --ground-truth")

    run = _run_dir(args, f"simulate-{args.structure}")
    _manifest(run, "simulate", {
        "library": str(args.library), "scenario": str(args.scenario),
        "data": str(args.data), "structure": args.structure,
        "params": {n: float(v) for n, v in zip(model.param_names, params)},
        "split": list(args.split), "outputs": list(args.outputs),
        "denominator": args.denominator, "solver": dataclasses.asdict(_solver_config(args)),
    })
    traj = simulate(model, params, data, _solver_config(args))
    _write(run / "trajectory.csv", traj.to_csv())
    total = multi_output_error(traj, data, args.outputs, (0, data.n), args.denominator)
    for out in args.outputs:
        err = rrmse(data.column(out), traj.signal(out), (0, data.n), args.denominator)
        print(f"RRMSE[{out}] = {err:.6g}")
    print(f"RRMSE[total] = {total:.6g}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = IdentifyConfig(de=_de_config(args), solver=_solver_config(args))
    _set_jobs(args.jobs)
    run = _run_dir(args, f"experiment-{args.name}-{args.mode}-seed{args.seed}")
    _manifest(run, "experiment", {
        "name": args.name, "mode": args.mode, "reps": args.reps,
        "variances": list(args.variances), "de": dataclasses.asdict(cfg.de),
        "solver": dataclasses.asdict(cfg.solver), "jobs": args.jobs,
    })

    if args.name == "structure-recovery":
        results = bench.structure_recovery_experiment(args.mode, args.variances, cfg)
        lines = ["variance,rank1,validation_rank1,validation_rank2,gap"]
        for v in args.variances:
            ranked = results[v].final if args.mode == "multi" else results[v]
            gap = ranked[1].validation_error - ranked[0].validation_error if len(ranked) > 1 else math.nan
            lines.append(f"{v:g},{ranked[0].structure_id},{repr(ranked[0].validation_error)},"
                         f"{repr(ranked[1].validation_error) if len(ranked) > 1 else ''},{repr(gap)}")
            stage_dir = run / f"v{v:g}"
            stage_dir.mkdir(exist_ok=True)
            _write(stage_dir / "results.csv", search.report(ranked, "csv"))
        _write(run / "summary.csv", "\n".join(lines) + "\n")
    elif args.name == "parameter-recovery":
        results = bench.parameter_recovery_experiment(args.mode, args.reps, args.variances, cfg)
        labels = [label for label, _, _ in bench.RATIO_PAIRS]
        lines = ["variance," + ",".join(f"median_{l}" for l in labels)
                 + "," + ",".join(f"max_{l}" for l in labels)]
        for v in args.variances:
            med = results[v]["median"]
            mx = results[v]["max"]
            lines.append(f"{v:g}," + ",".join(repr(med[l]) for l in labels)
                         + "," + ",".join(repr(mx[l]) for l in labels))
        _write(run / "summary.csv", "\n".join(lines) + "\n")
    else:
        results = bench.power_exponent_experiment(args.variances, args.reps, cfg)
        lines = ["variance,mean_P_h1,std_P_h1,mean_P_h2,std_P_h2"]
        for v in args.variances:
            r = results[v]
            lines.append(f"{v:g},{repr(r['P_h1']['mean'])},{repr(r['P_h1']['std'])},"
                         f"{repr(r['P_h2']['mean'])},{repr(r['P_h2']['std'])}")
        _write(run / "summary.csv", "\n".join(lines) + "\n")
    print(run / "summary.csv")
    return EXIT_OK


class ConfigError(Exception):
    """Bad command-line configuration (exit code 2)."""


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            return cmd_validate(args)
        if args.command == "identify":
            return cmd_identify(args)
        if args.command == "gendata":
            return cmd_gendata(args)
        if args.command == "simulate":
            return cmd_simulate(args)
        return cmd_experiment(args)
    except (SourceError, ModelSpaceError, DataError, PlanError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ConfigError, OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
