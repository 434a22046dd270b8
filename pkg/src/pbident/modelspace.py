"""Candidate-model space: template instantiation, structure enumeration, and
compilation of structures into executable ODE systems with sum aggregation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import dsl
from .dsl import ast


class ModelSpaceError(Exception):
    """Instantiation or compilation cannot proceed (partial bindings, missing ranges, ...)."""


# Bound expression IR: references point at named addresses, resolved to slots at compile.

@dataclass(frozen=True)
class Lit:
    value: float


@dataclass(frozen=True)
class VarRef:
    name: str  # "tank1.h"


@dataclass(frozen=True)
class ConstRef:
    name: str  # "tank1.A" (entity) or "valveTransmission.G" (per-instance process const)


@dataclass(frozen=True)
class Neg:
    operand: "BExpr"


@dataclass(frozen=True)
class Bin:
    op: str
    left: "BExpr"
    right: "BExpr"


@dataclass(frozen=True)
class Fn:
    func: str
    args: tuple["BExpr", ...]


BExpr = Lit | VarRef | ConstRef | Neg | Bin | Fn


# Slot-resolved expression IR used by compiled models.

@dataclass(frozen=True)
class SLit:
    value: float


@dataclass(frozen=True)
class SState:
    index: int
    name: str


@dataclass(frozen=True)
class SInput:
    index: int
    name: str


@dataclass(frozen=True)
class SParam:
    index: int
    name: str


@dataclass(frozen=True)
class SNeg:
    operand: "SExpr"


@dataclass(frozen=True)
class SBin:
    op: str
    left: "SExpr"
    right: "SExpr"


@dataclass(frozen=True)
class SFn:
    func: str
    args: tuple["SExpr", ...]


SExpr = SLit | SState | SInput | SParam | SNeg | SBin | SFn


@dataclass(frozen=True)
class BoundEquation:
    target: str  # "tank2.h"
    rhs: BExpr


@dataclass(frozen=True)
class ProcessInstance:
    """One leaf alternative of a process skeleton, with entities and consts bound."""

    skeleton: str
    leaf: str  # leaf template qualname
    leaf_name: str
    entity_bindings: tuple[tuple[str, str], ...]  # (param name, instance name)
    consts: tuple[tuple[str, ast.ConstBinding, tuple[float, float] | None], ...]  # (address, binding, range)
    equations: tuple[BoundEquation, ...]


@dataclass(frozen=True)
class CandidateStructure:
    """One selection of a leaf per skeleton; a point in the combinatorial space."""

    id: str
    instances: tuple[ProcessInstance, ...]

    def instance(self, skeleton: str) -> ProcessInstance:
        return next(p for p in self.instances if p.skeleton == skeleton)


def instantiate(lib: ast.Library, scenario: ast.Scenario) -> dict[str, list[ProcessInstance]]:
    """One instance per leaf alternative of each skeleton's declared template.

    Scenario const bindings apply to every alternative; unbound consts stay free
    with their library ranges. When a skeleton binds only a prefix of the
    template parameters, equations touching unbound parameters are dropped.
    """
    out: dict[str, list[ProcessInstance]] = {}
    for sk in scenario.skeletons:
        declared = lib.process_templates[sk.template]
        leaves = lib.leaves_of(declared.qualname)
        if not leaves:
            raise ModelSpaceError(f"template {declared.qualname!r} has no instantiable alternatives")
        alternatives = []
        for leaf in leaves:
            alternatives.append(_bind_instance(lib, scenario, sk, leaf))
        out[sk.name] = alternatives
    return out


def _bind_instance(lib: ast.Library, scenario: ast.Scenario, sk: ast.ProcessSkeleton,
                   leaf: ast.ProcessTemplate) -> ProcessInstance:
    env: dict[str, tuple[str, ast.EntityTemplate]] = {}
    for (pname, ptype), inst in zip(leaf.entity_params, sk.entities):
        env[pname] = (inst, lib.entity_templates[ptype])

    kept: list[BoundEquation] = []
    for eq in leaf.equations:
        refs = [eq.target] + _collect_refs(eq.rhs)
        if any(r.prop is not None and r.base not in env for r in refs):
            continue  # references an unbound parameter
        target_inst = env[eq.target.base][0]
        kept.append(BoundEquation(f"{target_inst}.{eq.target.prop}", _bind_expr(eq.rhs, env, sk.name)))
    if not kept:
        raise ModelSpaceError(
            f"all equations of {leaf.qualname!r} dropped by the partial binding of {sk.name!r}")

    consts = []
    for decl in leaf.consts:
        binding = sk.const(decl.name) or ast.ConstBinding(decl.name, ast.FREE)
        if binding.kind == ast.PROMOTED:
            raise ModelSpaceError(
                f"constant {sk.name}.{decl.name} is marked promoted and has not been resolved")
        consts.append((f"{sk.name}.{decl.name}", binding, decl.range))

    return ProcessInstance(
        skeleton=sk.name, leaf=leaf.qualname, leaf_name=leaf.name,
        entity_bindings=tuple(zip((p for p, _ in leaf.entity_params), sk.entities)),
        consts=tuple(consts), equations=tuple(kept),
    )


def _collect_refs(expr: ast.Expr) -> list[ast.Ref]:
    if isinstance(expr, ast.Ref):
        return [expr]
    if isinstance(expr, ast.Unary):
        return _collect_refs(expr.operand)
    if isinstance(expr, ast.Binary):
        return _collect_refs(expr.left) + _collect_refs(expr.right)
    if isinstance(expr, ast.Call):
        return [r for a in expr.args for r in _collect_refs(a)]
    return []


def _bind_expr(expr: ast.Expr, env: dict[str, tuple[str, ast.EntityTemplate]],
               skeleton: str) -> BExpr:
    if isinstance(expr, ast.Num):
        return Lit(expr.value)
    if isinstance(expr, ast.Ref):
        if expr.prop is None:
            return ConstRef(f"{skeleton}.{expr.base}")
        inst, tmpl = env[expr.base]
        if tmpl.const(expr.prop) is not None:
            return ConstRef(f"{inst}.{expr.prop}")
        return VarRef(f"{inst}.{expr.prop}")
    if isinstance(expr, ast.Unary):
        return Neg(_bind_expr(expr.operand, env, skeleton))
    if isinstance(expr, ast.Binary):
        return Bin(expr.op, _bind_expr(expr.left, env, skeleton), _bind_expr(expr.right, env, skeleton))
    return Fn(expr.func, tuple(_bind_expr(a, env, skeleton) for a in expr.args))


def enumerate_structures(instances: dict[str, list[ProcessInstance]]) -> list[CandidateStructure]:
    """Cartesian product over per-skeleton alternatives, deterministic order.

    Ids join one letter per skeleton that has more than one alternative
    (full leaf names when initials would collide); when every skeleton is
    already determined, all skeletons contribute.
    """
    skeletons = list(instances)
    for name in skeletons:
        if not instances[name]:
            raise ModelSpaceError(f"skeleton {name!r} has no instances")

    multi = [name for name in skeletons if len(instances[name]) > 1]
    tagged = multi if multi else skeletons
    tags: dict[str, dict[str, str]] = {}
    for name in tagged:
        alts = instances[name]
        initials = [p.leaf_name[0] for p in alts]
        unique = len(set(initials)) == len(initials)
        tags[name] = {p.leaf: (p.leaf_name[0] if unique else p.leaf_name) for p in alts}

    structures = []
    for combo in itertools.product(*(instances[name] for name in skeletons)):
        sid = "-".join(tags[p.skeleton][p.leaf] for p in combo if p.skeleton in tags)
        structures.append(CandidateStructure(sid, tuple(combo)))
    return structures


# ---------------------------------------------------------------- compilation

def _var_is_free(binding: ast.ConstBinding) -> bool:
    return binding.kind == ast.FREE


@dataclass
class CompiledModel:
    """An executable ODE system: states, inputs, free parameters, per-state RHS."""

    structure: CandidateStructure
    state_names: list[str]
    initial: np.ndarray
    state_data: list[str]  # dataset column per state
    input_names: list[str]
    input_data: list[str]
    input_ranges: list[tuple[float, float] | None]  # declared operating range, if any
    param_names: list[str]
    lower: np.ndarray
    upper: np.ndarray
    rhs: list[SExpr]
    _code: tuple | None = field(default=None, repr=False)

    @property
    def n_states(self) -> int:
        return len(self.state_names)

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    def state_for_column(self, column: str) -> int:
        for i, c in enumerate(self.state_data):
            if c == column:
                return i
        raise KeyError(f"no state variable is bound to data column {column!r}")

    def bytecode(self):
        if self._code is None:
            from .engine import compile_programs
            self._code = compile_programs(self.rhs)
        return self._code


def compile_structure(structure: CandidateStructure, scenario: ast.Scenario,
                      lib: ast.Library, check_ranges: bool = False) -> CompiledModel:
    """Flatten a candidate structure into a CompiledModel.

    States are the endogenous variables and inputs the exogenous ones, in
    declaration order. The free-parameter vector concatenates free entity
    constants (declaration order) with free process constants (skeleton
    order); fixed constants are folded in as literals. Each state's RHS is
    the sum of every instance equation targeting it.
    """
    state_names: list[str] = []
    initials: list[float] = []
    state_data: list[str] = []
    input_names: list[str] = []
    input_data: list[str] = []
    input_ranges: list[tuple[float, float] | None] = []

    for inst in scenario.entity_instances:
        tmpl = lib.entity_templates[inst.template]
        for vb in inst.var_bindings:
            qual = f"{inst.name}.{vb.name}"
            decl = tmpl.var(vb.name)
            if vb.role == "endogenous":
                if check_ranges and decl.range is not None:
                    lo, hi = decl.range
                    if not (lo <= vb.initial <= hi):
                        raise ModelSpaceError(
                            f"initial value {vb.initial:g} of {qual} outside its range <{lo:g},{hi:g}>")
                state_names.append(qual)
                initials.append(float(vb.initial))
                state_data.append(vb.data or qual)
            else:
                input_names.append(qual)
                input_data.append(vb.data or qual)
                input_ranges.append(decl.range)

    param_names: list[str] = []
    bounds: list[tuple[float, float]] = []
    values: dict[str, float] = {}

    for inst in scenario.entity_instances:
        tmpl = lib.entity_templates[inst.template]
        for cb in inst.const_bindings:
            addr = f"{inst.name}.{cb.name}"
            if cb.kind == ast.FIXED:
                values[addr] = cb.value
            elif cb.kind == ast.PROMOTED:
                raise ModelSpaceError(f"constant {addr} is marked promoted and has not been resolved")
            else:
                rng = tmpl.const(cb.name).range
                if rng is None:
                    raise ModelSpaceError(f"free constant {addr} has no declared range")
                param_names.append(addr)
                bounds.append(rng)

    for pinst in structure.instances:
        for addr, binding, rng in pinst.consts:
            if binding.kind == ast.FIXED:
                values[addr] = binding.value
            else:
                if rng is None:
                    raise ModelSpaceError(f"free constant {addr} has no declared range")
                param_names.append(addr)
                bounds.append(rng)

    state_index = {name: i for i, name in enumerate(state_names)}
    input_index = {name: i for i, name in enumerate(input_names)}
    param_index = {name: i for i, name in enumerate(param_names)}

    def resolve(expr: BExpr) -> SExpr:
        if isinstance(expr, Lit):
            return SLit(expr.value)
        if isinstance(expr, VarRef):
            if expr.name in state_index:
                return SState(state_index[expr.name], expr.name)
            if expr.name in input_index:
                return SInput(input_index[expr.name], expr.name)
            raise ModelSpaceError(f"equation references unknown variable {expr.name!r}")
        if isinstance(expr, ConstRef):
            if expr.name in param_index:
                return SParam(param_index[expr.name], expr.name)
            if expr.name in values:
                return SLit(values[expr.name])
            raise ModelSpaceError(f"equation references unknown constant {expr.name!r}")
        if isinstance(expr, Neg):
            return SNeg(resolve(expr.operand))
        if isinstance(expr, Bin):
            return SBin(expr.op, resolve(expr.left), resolve(expr.right))
        return SFn(expr.func, tuple(resolve(a) for a in expr.args))

    rhs: list[SExpr] = []
    for name in state_names:
        total: SExpr | None = None
        for pinst in structure.instances:
            for eq in pinst.equations:
                if eq.target != name:
                    continue
                term = resolve(eq.rhs)
                if total is None:
                    total = term
                    continue
                positive = _without_leading_neg(term)
                if positive is not None:  # x + (-a)*b == x - a*b, bit-for-bit
                    total = SBin("-", total, positive)
                else:
                    total = SBin("+", total, term)
        rhs.append(total if total is not None else SLit(0.0))

    lower = np.array([b[0] for b in bounds], dtype=float)
    upper = np.array([b[1] for b in bounds], dtype=float)
    return CompiledModel(
        structure=structure,
        state_names=state_names, initial=np.array(initials, dtype=float), state_data=state_data,
        input_names=input_names, input_data=input_data, input_ranges=input_ranges,
        param_names=param_names, lower=lower, upper=upper, rhs=rhs,
    )


def _without_leading_neg(expr: SExpr) -> SExpr | None:
    """Strip a negation heading the left spine of a product/quotient chain.

    IEEE negation commutes with * and /, so dropping it and subtracting is
    bit-identical to adding the original term.
    """
    if isinstance(expr, SNeg):
        return expr.operand
    if isinstance(expr, SBin) and expr.op in ("*", "/"):
        left = _without_leading_neg(expr.left)
        if left is not None:
            return SBin(expr.op, left, expr.right)
    return None


# --------------------------------------------------------------- evaluation

def eval_expr(expr: SExpr, state, inputs, params):
    """Reference interpreter; accepts scalars or numpy arrays for broadcasting."""
    if isinstance(expr, SLit):
        return expr.value
    if isinstance(expr, SState):
        return state[expr.index]
    if isinstance(expr, SInput):
        return inputs[expr.index]
    if isinstance(expr, SParam):
        return params[expr.index]
    if isinstance(expr, SNeg):
        return -eval_expr(expr.operand, state, inputs, params)
    if isinstance(expr, SBin):
        left = eval_expr(expr.left, state, inputs, params)
        right = eval_expr(expr.right, state, inputs, params)
        if expr.op == "+":
            return left + right
        if expr.op == "-":
            return left - right
        if expr.op == "*":
            return left * right
        return np.divide(left, right)
    if expr.func == "exp":
        return np.exp(eval_expr(expr.args[0], state, inputs, params))
    base = eval_expr(expr.args[0], state, inputs, params)
    if isinstance(expr.args[1], SLit) and expr.args[1].value == 0.5:
        return np.sqrt(base)  # matches the specialized opcode in the fast engine
    exponent = eval_expr(expr.args[1], state, inputs, params)
    with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        return np.power(base, exponent)


def eval_rhs(model: CompiledModel, state, inputs, params) -> np.ndarray:
    """d(state)/dt at one point. Domain errors surface as non-finite entries."""
    with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        return np.array([eval_expr(e, state, inputs, params) for e in model.rhs], dtype=float)


# ---------------------------------------------------------------- rendering

def sexpr_to_str(expr: SExpr, params=None) -> str:
    """Canonical infix rendering; free parameters print as values when given."""
    return _render(expr, 0, params)


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _render(expr: SExpr, parent_prec: int, params) -> str:
    if isinstance(expr, SLit):
        return dsl.fmt_number(expr.value)
    if isinstance(expr, (SState, SInput)):
        return expr.name
    if isinstance(expr, SParam):
        if params is not None:
            return dsl.fmt_number(float(params[expr.index]))
        return expr.name
    if isinstance(expr, SNeg):
        return f"-{_render(expr.operand, 3, params)}"
    if isinstance(expr, SFn):
        return f"{expr.func}({','.join(_render(a, 0, params) for a in expr.args)})"
    prec = _PREC[expr.op]
    left = _render(expr.left, prec - 1, params)
    right = _render(expr.right, prec, params)
    sep = f" {expr.op} " if prec == 1 else expr.op
    text = f"{left}{sep}{right}"
    return f"({text})" if prec < parent_prec else text


def sexpr_to_prefix(expr: SExpr) -> str:
    """Prefix (s-expression) rendering for the JSON export."""
    if isinstance(expr, SLit):
        return dsl.fmt_number(expr.value)
    if isinstance(expr, (SState, SInput, SParam)):
        return expr.name
    if isinstance(expr, SNeg):
        return f"(neg {sexpr_to_prefix(expr.operand)})"
    if isinstance(expr, SBin):
        return f"({expr.op} {sexpr_to_prefix(expr.left)} {sexpr_to_prefix(expr.right)})"
    return f"({expr.func} {' '.join(sexpr_to_prefix(a) for a in expr.args)})"


def format_model(model: CompiledModel, params) -> str:
    """Human-readable rendering: process instances with resolved constants,
    then the flattened ODEs with parameter values substituted."""
    params = np.asarray(params, dtype=float)
    if params.shape != (model.n_params,):
        raise ValueError(f"expected {model.n_params} parameter values, got {params.shape}")
    lines = [f"model {model.structure.id}", "processes:"]
    fitted = dict(zip(model.param_names, params))
    for inst in model.structure.instances:
        ents = ", ".join(name for _, name in inst.entity_bindings)
        lines.append(f"  {inst.skeleton}({ents}) : {inst.leaf}")
        for addr, binding, _ in inst.consts:
            value = binding.value if binding.kind == ast.FIXED else fitted[addr]
            marker = "" if binding.kind == ast.FIXED else " (fitted)"
            lines.append(f"    {addr.split('.', 1)[1]} = {dsl.fmt_number(float(value))}{marker}")
    lines.append("equations:")
    for name, expr in zip(model.state_names, model.rhs):
        lines.append(f"  td({name}) = {sexpr_to_str(expr, params)}")
    lines.append("")
    return "\n".join(lines)


def model_to_json(model: CompiledModel) -> dict:
    """Machine-readable export: states, inputs, bounds, RHS in prefix notation."""
    return {
        "structure": model.structure.id,
        "processes": [
            {"skeleton": p.skeleton, "leaf": p.leaf,
             "entities": [name for _, name in p.entity_bindings]}
            for p in model.structure.instances
        ],
        "states": [
            {"name": n, "initial": float(v), "data": d}
            for n, v, d in zip(model.state_names, model.initial, model.state_data)
        ],
        "inputs": [
            {"name": n, "data": d} for n, d in zip(model.input_names, model.input_data)
        ],
        "params": [
            {"name": n, "lower": float(lo), "upper": float(hi)}
            for n, lo, hi in zip(model.param_names, model.lower, model.upper)
        ],
        "rhs": {n: sexpr_to_prefix(e) for n, e in zip(model.state_names, model.rhs)},
    }
