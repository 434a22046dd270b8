"""Canonical pretty-printing and JSON dumps of parsed libraries and scenarios.

`parse_library(print_library(lib))` reproduces `lib` structurally; same for
scenarios. JSON dicts are built in a fixed key order so serialized dumps are
stable byte-for-byte.
"""

from __future__ import annotations

from . import ast

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def fmt_number(value: float) -> str:
    if value == int(value) and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def fmt_expr(expr: ast.Expr) -> str:
    return _fmt(expr, 0)


def _fmt(expr: ast.Expr, parent_prec: int) -> str:
    if isinstance(expr, ast.Num):
        return fmt_number(expr.value)
    if isinstance(expr, ast.Ref):
        return expr.text
    if isinstance(expr, ast.Call):
        return f"{expr.func}({','.join(_fmt(a, 0) for a in expr.args)})"
    if isinstance(expr, ast.Unary):
        inner = _fmt(expr.operand, 3)
        return f"-{inner}"
    prec = _PREC[expr.op]
    left = _fmt(expr.left, prec - 1)
    right = _fmt(expr.right, prec)  # right operand binds tighter: keeps structure on reparse
    sep = f" {expr.op} " if prec == 1 else expr.op
    text = f"{left}{sep}{right}"
    if prec < parent_prec or (parent_prec == 3 and prec < 4):
        return f"({text})"
    return text


def _fmt_range(rng: tuple[float, float]) -> str:
    return f"<{fmt_number(rng[0])},{fmt_number(rng[1])}>"


def fmt_equation(eq: ast.Equation) -> str:
    return f"td({eq.target.text}) = {fmt_expr(eq.rhs)}"


# ------------------------------------------------------------------- library

def print_library(lib: ast.Library) -> str:
    out: list[str] = []
    for ent in lib.entity_templates.values():
        out.append(f"template entity {ent.name} {{")
        if ent.vars:
            out.append("  vars: " + ", ".join(_var_decl(v) for v in ent.vars) + ";")
        if ent.consts:
            out.append("  consts: " + ", ".join(_const_decl(c) for c in ent.consts) + ";")
        out.append("}")
        out.append("")
    for root in lib.roots:
        _print_process(lib, root, out)
    return "\n".join(out)


def _var_decl(v: ast.VarDecl) -> str:
    attrs = []
    if v.aggregation:
        attrs.append(f"aggregation: {v.aggregation}")
    if v.range:
        attrs.append(f"range: {_fmt_range(v.range)}")
    return v.name + (" {" + "; ".join(attrs) + "}" if attrs else "")


def _const_decl(c: ast.ConstDecl) -> str:
    return c.name + (f" {{range: {_fmt_range(c.range)}}}" if c.range else "")


def _print_process(lib: ast.Library, qualname: str, out: list[str]) -> None:
    t = lib.process_templates[qualname]
    if t.parent is None:
        params = ", ".join(f"{p} : {e}" for p, e in t.entity_params)
        out.append(f"template process {t.name}({params}) {{")
    else:
        out.append(f"template process {t.name} : {t.parent} {{")
    if t.own_consts:
        out.append("  consts: " + ", ".join(_const_decl(c) for c in t.own_consts) + ";")
    if t.equations:
        body = ",\n    ".join(fmt_equation(eq) for eq in t.equations)
        out.append(f"  equations:\n    {body};")
    out.append("}")
    out.append("")
    for child in t.children:
        _print_process(lib, child, out)


# ------------------------------------------------------------------ scenario

def print_scenario(sc: ast.Scenario) -> str:
    out: list[str] = []
    for inst in sc.entity_instances:
        out.append(f"entity {inst.name} : {inst.template} {{")
        for v in inst.var_bindings:
            attrs = [f"role: {v.role}"]
            if v.initial is not None:
                attrs.append(f"initial: {fmt_number(v.initial)}")
            if v.data is not None:
                attrs.append(f"data: {v.data}")
            out.append(f"  vars: {v.name} {{{'; '.join(attrs)}}};")
        if inst.const_bindings:
            out.append("  consts: " + ", ".join(_const_binding(c) for c in inst.const_bindings) + ";")
        out.append("}")
        out.append("")
    for sk in sc.skeletons:
        head = f"process {sk.name}({', '.join(sk.entities)}) : {sk.template} {{"
        if sk.const_bindings:
            out.append(head)
            out.append("  consts: " + ", ".join(_const_binding(c) for c in sk.const_bindings) + ";")
            out.append("}")
        else:
            out.append(head + "}")
    return "\n".join(out)


def _const_binding(c: ast.ConstBinding) -> str:
    if c.kind == ast.FIXED:
        return f"{c.name} = {fmt_number(c.value)}"
    return f"{c.name} = {'null' if c.kind == ast.FREE else 'promoted'}"


# ---------------------------------------------------------------------- JSON

def expr_to_json(expr: ast.Expr):
    if isinstance(expr, ast.Num):
        return {"num": expr.value}
    if isinstance(expr, ast.Ref):
        return {"ref": expr.text}
    if isinstance(expr, ast.Unary):
        return {"op": "neg", "args": [expr_to_json(expr.operand)]}
    if isinstance(expr, ast.Binary):
        return {"op": expr.op, "args": [expr_to_json(expr.left), expr_to_json(expr.right)]}
    return {"op": expr.func, "args": [expr_to_json(a) for a in expr.args]}


def library_to_json(lib: ast.Library) -> dict:
    return {
        "entity_templates": [
            {
                "name": e.name,
                "vars": [
                    {"name": v.name, "aggregation": v.aggregation, "range": list(v.range) if v.range else None}
                    for v in e.vars
                ],
                "consts": [
                    {"name": c.name, "range": list(c.range) if c.range else None}
                    for c in e.consts
                ],
            }
            for e in lib.entity_templates.values()
        ],
        "process_templates": [
            {
                "name": t.name,
                "qualname": t.qualname,
                "parent": t.parent,
                "entity_params": [{"name": p, "entity": e} for p, e in t.entity_params],
                "consts": [
                    {"name": c.name, "range": list(c.range) if c.range else None, "inherited": c not in t.own_consts}
                    for c in t.consts
                ],
                "equations": [
                    {"target": eq.target.text, "rhs": expr_to_json(eq.rhs)}
                    for eq in t.equations
                ],
                "children": list(t.children),
            }
            for t in lib.process_templates.values()
        ],
    }


def scenario_to_json(sc: ast.Scenario) -> dict:
    return {
        "entities": [
            {
                "name": e.name,
                "template": e.template,
                "vars": [
                    {"name": v.name, "role": v.role, "initial": v.initial, "data": v.data}
                    for v in e.var_bindings
                ],
                "consts": [_const_binding_json(c) for c in e.const_bindings],
            }
            for e in sc.entity_instances
        ],
        "processes": [
            {
                "name": s.name,
                "template": s.template,
                "entities": list(s.entities),
                "consts": [_const_binding_json(c) for c in s.const_bindings],
            }
            for s in sc.skeletons
        ],
    }


def _const_binding_json(c: ast.ConstBinding) -> dict:
    return {"name": c.name, "kind": c.kind, "value": c.value}
