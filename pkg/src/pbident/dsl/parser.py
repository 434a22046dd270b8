"""Recursive-descent parser for domain libraries (.pbl) and scenarios (.pbs).

Both file kinds use keyword-delimited blocks:

    template entity Tank {
      vars: h {aggregation: sum; range: <0, 500>};
      consts: A {range: <1.0E-3, 30>}, a {range: <1.0E-3, 30>};
    }
    template process Outflow(t : Tank) { consts: G {range: <0, 10>}; }
    template process Linear : Outflow {
      equations: td(t.h) = - G * t.h * t.a / t.A;
    }

    entity tank2 : Tank {
      vars: h {role: endogenous; initial: 0.20508; data: h2};
      consts: A = null, a = null;
    }
    process outflow(tank2) : Outflow { consts: G = 4.429; }

Templates must be declared before they are referenced (parents before
children). Hierarchy leaves may reuse names across hierarchies; they are
keyed by their dotted path (e.g. ``Outflow.Linear``) and may be referenced
by any unambiguous suffix of it.
"""

from __future__ import annotations

from . import ast
from .errors import ParseError, ValidationError
from .lexer import EOF, IDENT, NUMBER, Token, tokenize

ROLES = ("endogenous", "exogenous")
FUNCTIONS = ("pow", "exp")


class _Cursor:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self, offset: int = 0) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def advance(self) -> Token:
        tok = self.peek()
        if tok.type != EOF:
            self.pos += 1
        return tok

    def expect(self, type_: str, what: str | None = None) -> Token:
        tok = self.peek()
        if tok.type != type_:
            expected = what or (type_ if type_ not in (IDENT, NUMBER) else type_)
            shown = tok.text if tok.type != EOF else "end of input"
            raise ParseError("syntax", f"expected {expected!r}, found {shown!r}",
                             tok.line, tok.column, symbol=tok.text or None)
        return self.advance()

    def expect_keyword(self, word: str) -> Token:
        tok = self.expect(IDENT, word)
        if tok.text != word:
            raise ParseError("syntax", f"expected {word!r}, found {tok.text!r}",
                             tok.line, tok.column, symbol=tok.text)
        return tok

    def at_keyword(self, word: str) -> bool:
        tok = self.peek()
        return tok.type == IDENT and tok.text == word


# ------------------------------------------------------------- shared pieces

def _parse_number(cur: _Cursor) -> float:
    neg = False
    if cur.peek().type == "-":
        cur.advance()
        neg = True
    tok = cur.expect(NUMBER, "number")
    value = float(tok.text)
    return -value if neg else value


def _parse_range(cur: _Cursor) -> tuple[float, float, Token]:
    opening = cur.expect("<")
    lo = _parse_number(cur)
    cur.expect(",")
    hi = _parse_number(cur)
    cur.expect(">")
    return lo, hi, opening


def _check_range(lo: float, hi: float, tok: Token, owner: str) -> tuple[float, float]:
    if not lo < hi:
        raise ValidationError("malformed-range",
                              f"range of {owner!r} must satisfy lo < hi, got <{lo:g},{hi:g}>",
                              tok.line, tok.column, symbol=owner)
    return (lo, hi)


def _parse_expr(cur: _Cursor) -> ast.Expr:
    left = _parse_term(cur)
    while cur.peek().type in ("+", "-"):
        op = cur.advance().type
        right = _parse_term(cur)
        left = ast.Binary(op, left, right)
    return left


def _parse_term(cur: _Cursor) -> ast.Expr:
    left = _parse_factor(cur)
    while cur.peek().type in ("*", "/"):
        op = cur.advance().type
        right = _parse_factor(cur)
        left = ast.Binary(op, left, right)
    return left


def _parse_factor(cur: _Cursor) -> ast.Expr:
    if cur.peek().type == "-":
        cur.advance()
        return ast.Unary("-", _parse_factor(cur))
    return _parse_primary(cur)


def _parse_primary(cur: _Cursor) -> ast.Expr:
    tok = cur.peek()
    if tok.type == NUMBER:
        cur.advance()
        return ast.Num(float(tok.text))
    if tok.type == "(":
        cur.advance()
        inner = _parse_expr(cur)
        cur.expect(")")
        return inner
    if tok.type == IDENT:
        if tok.text in FUNCTIONS and cur.peek(1).type == "(":
            cur.advance()
            cur.advance()
            args = [_parse_expr(cur)]
            while cur.peek().type == ",":
                cur.advance()
                args.append(_parse_expr(cur))
            closing = cur.expect(")")
            arity = 2 if tok.text == "pow" else 1
            if len(args) != arity:
                raise ParseError("syntax", f"{tok.text} takes {arity} argument(s), got {len(args)}",
                                 closing.line, closing.column, symbol=tok.text)
            return ast.Call(tok.text, tuple(args))
        cur.advance()
        if cur.peek().type == ".":
            cur.advance()
            prop = cur.expect(IDENT, "property name")
            return ast.Ref(tok.text, prop.text, line=tok.line, column=tok.column)
        return ast.Ref(tok.text, None, line=tok.line, column=tok.column)
    shown = tok.text if tok.type != EOF else "end of input"
    raise ParseError("syntax", f"expected expression, found {shown!r}",
                     tok.line, tok.column, symbol=tok.text or None)


def _parse_equation(cur: _Cursor) -> ast.Equation:
    cur.expect_keyword("td")
    cur.expect("(")
    base = cur.expect(IDENT, "entity parameter")
    cur.expect(".")
    prop = cur.expect(IDENT, "variable name")
    cur.expect(")")
    cur.expect("=")
    rhs = _parse_expr(cur)
    target = ast.Ref(base.text, prop.text, line=base.line, column=base.column)
    return ast.Equation(target, rhs)


# ------------------------------------------------------------------- library

def parse_library(text: str) -> ast.Library:
    """Parse and validate a library of template entities and processes."""
    cur = _Cursor(tokenize(text))
    if cur.peek().type == EOF:
        raise ParseError("syntax", "empty input: expected at least one template", 1, 1)

    entities: dict[str, ast.EntityTemplate] = {}
    processes: dict[str, ast.ProcessTemplate] = {}
    children: dict[str, list[str]] = {}
    roots: list[str] = []

    while cur.peek().type != EOF:
        cur.expect_keyword("template")
        kind = cur.expect(IDENT, "'entity' or 'process'")
        if kind.text == "entity":
            tmpl = _parse_entity_template(cur)
            if tmpl.name in entities:
                raise ValidationError("duplicate-template", f"entity template {tmpl.name!r} already declared",
                                      kind.line, kind.column, symbol=tmpl.name)
            entities[tmpl.name] = tmpl
        elif kind.text == "process":
            _parse_process_template(cur, entities, processes, children, roots)
        else:
            raise ParseError("syntax", f"expected 'entity' or 'process', found {kind.text!r}",
                             kind.line, kind.column, symbol=kind.text)

    processes = {
        qual: ast.ProcessTemplate(
            name=t.name, qualname=t.qualname, parent=t.parent,
            entity_params=t.entity_params, own_consts=t.own_consts,
            consts=t.consts, equations=t.equations,
            children=tuple(children.get(qual, ())),
        )
        for qual, t in processes.items()
    }
    return ast.Library(entity_templates=entities, process_templates=processes, roots=tuple(roots))


def _parse_entity_template(cur: _Cursor) -> ast.EntityTemplate:
    name = cur.expect(IDENT, "entity template name")
    cur.expect("{")
    vars_: list[ast.VarDecl] = []
    consts: list[ast.ConstDecl] = []
    seen: set[str] = set()
    while cur.peek().type != "}":
        section = cur.expect(IDENT, "'vars' or 'consts'")
        cur.expect(":")
        if section.text == "vars":
            vars_.extend(_parse_var_decls(cur, seen, name.text))
        elif section.text == "consts":
            consts.extend(_parse_const_decls(cur, seen, name.text))
        else:
            raise ParseError("syntax", f"expected 'vars' or 'consts', found {section.text!r}",
                             section.line, section.column, symbol=section.text)
    cur.expect("}")
    return ast.EntityTemplate(name.text, tuple(vars_), tuple(consts))


def _parse_var_decls(cur: _Cursor, seen: set[str], owner: str) -> list[ast.VarDecl]:
    out = []
    while True:
        tok = cur.expect(IDENT, "variable name")
        if tok.text in seen:
            raise ValidationError("duplicate-name", f"{tok.text!r} already declared in {owner!r}",
                                  tok.line, tok.column, symbol=tok.text)
        seen.add(tok.text)
        aggregation = None
        rng = None
        for key, keytok in _parse_attr_block(cur):
            if key == "aggregation":
                value = cur.expect(IDENT, "aggregation kind")
                if value.text != "sum":
                    raise ParseError("aggregation", f"unsupported aggregation {value.text!r} (only 'sum')",
                                     value.line, value.column, symbol=value.text)
                aggregation = value.text
            elif key == "range":
                lo, hi, opening = _parse_range(cur)
                rng = _check_range(lo, hi, opening, tok.text)
            else:
                raise ParseError("syntax", f"unknown variable attribute {key!r}",
                                 keytok.line, keytok.column, symbol=key)
        out.append(ast.VarDecl(tok.text, aggregation, rng))
        if cur.peek().type == ",":
            cur.advance()
            continue
        cur.expect(";")
        return out


def _parse_const_decls(cur: _Cursor, seen: set[str], owner: str) -> list[ast.ConstDecl]:
    out = []
    while True:
        tok = cur.expect(IDENT, "constant name")
        if tok.text in seen:
            raise ValidationError("duplicate-name", f"{tok.text!r} already declared in {owner!r}",
                                  tok.line, tok.column, symbol=tok.text)
        seen.add(tok.text)
        rng = None
        for key, keytok in _parse_attr_block(cur):
            if key == "range":
                lo, hi, opening = _parse_range(cur)
                rng = _check_range(lo, hi, opening, tok.text)
            else:
                raise ParseError("syntax", f"unknown constant attribute {key!r}",
                                 keytok.line, keytok.column, symbol=key)
        out.append(ast.ConstDecl(tok.text, rng))
        if cur.peek().type == ",":
            cur.advance()
            continue
        cur.expect(";")
        return out


def _parse_attr_block(cur: _Cursor):
    """Yield (key, token) pairs of a `{k: v; ...}` attribute block; ',' and ';' both separate."""
    if cur.peek().type != "{":
        return
    cur.advance()
    while cur.peek().type != "}":
        key = cur.expect(IDENT, "attribute name")
        cur.expect(":")
        yield key.text, key
        while cur.peek().type in (";", ","):
            cur.advance()
    cur.expect("}")


def _resolve_template_ref(processes: dict[str, ast.ProcessTemplate], ref: str,
                          tok: Token) -> ast.ProcessTemplate:
    if ref in processes:
        return processes[ref]
    matches = [t for t in processes.values()
               if t.name == ref or t.qualname.endswith("." + ref)]
    if not matches:
        raise ValidationError("unknown-template", f"unknown process template {ref!r}",
                              tok.line, tok.column, symbol=ref)
    if len(matches) > 1:
        names = ", ".join(sorted(t.qualname for t in matches))
        raise ValidationError("ambiguous-template",
                              f"template reference {ref!r} is ambiguous ({names})",
                              tok.line, tok.column, symbol=ref)
    return matches[0]


def _parse_template_ref(cur: _Cursor) -> tuple[str, Token]:
    tok = cur.expect(IDENT, "template name")
    parts = [tok.text]
    while cur.peek().type == ".":
        cur.advance()
        parts.append(cur.expect(IDENT, "template name").text)
    return ".".join(parts), tok


def _parse_process_template(cur: _Cursor, entities: dict[str, ast.EntityTemplate],
                            processes: dict[str, ast.ProcessTemplate],
                            children: dict[str, list[str]], roots: list[str]) -> None:
    name = cur.expect(IDENT, "process template name")

    entity_params: list[tuple[str, str]] = []
    parent: ast.ProcessTemplate | None = None
    if cur.peek().type == "(":
        cur.advance()
        while cur.peek().type != ")":
            pname = cur.expect(IDENT, "parameter name")
            cur.expect(":")
            ptype = cur.expect(IDENT, "entity template name")
            if ptype.text not in entities:
                raise ValidationError("unknown-template", f"unknown entity template {ptype.text!r}",
                                      ptype.line, ptype.column, symbol=ptype.text)
            if any(p == pname.text for p, _ in entity_params):
                raise ValidationError("duplicate-name", f"parameter {pname.text!r} repeated",
                                      pname.line, pname.column, symbol=pname.text)
            entity_params.append((pname.text, ptype.text))
            if cur.peek().type == ",":
                cur.advance()
        cur.expect(")")
    if cur.peek().type == ":":
        cur.advance()
        ref, reftok = _parse_template_ref(cur)
        parent = _resolve_template_ref(processes, ref, reftok)
        if entity_params:
            raise ValidationError("parameters-on-child",
                                  "a child template inherits its parameters and cannot declare new ones",
                                  name.line, name.column, symbol=name.text)
        entity_params = list(parent.entity_params)
    elif not entity_params:
        raise ValidationError("missing-parameters",
                              f"root template {name.text!r} must declare entity parameters",
                              name.line, name.column, symbol=name.text)

    cur.expect("{")
    own_consts: list[ast.ConstDecl] = []
    equations: list[ast.Equation] = []
    inherited = {c.name for c in parent.consts} if parent else set()
    seen = set(inherited)
    while cur.peek().type != "}":
        section = cur.expect(IDENT, "'consts' or 'equations'")
        cur.expect(":")
        if section.text == "consts":
            own_consts.extend(_parse_const_decls(cur, seen, name.text))
        elif section.text == "equations":
            equations.append(_parse_equation(cur))
            while cur.peek().type == ",":
                cur.advance()
                equations.append(_parse_equation(cur))
            cur.expect(";")
        else:
            raise ParseError("syntax", f"expected 'consts' or 'equations', found {section.text!r}",
                             section.line, section.column, symbol=section.text)
    cur.expect("}")

    qualname = f"{parent.qualname}.{name.text}" if parent else name.text
    if qualname in processes:
        raise ValidationError("duplicate-template", f"process template {qualname!r} already declared",
                              name.line, name.column, symbol=qualname)
    # guard against pathological parent chains (unreachable with declare-before-use)
    chain, node = {qualname}, parent
    while node is not None:
        if node.qualname in chain:
            raise ValidationError("cyclic-hierarchy", f"template hierarchy around {qualname!r} is cyclic",
                                  name.line, name.column, symbol=qualname)
        chain.add(node.qualname)
        node = processes.get(node.parent) if node.parent else None

    consts = tuple(parent.consts) + tuple(own_consts) if parent else tuple(own_consts)
    tmpl = ast.ProcessTemplate(
        name=name.text, qualname=qualname,
        parent=parent.qualname if parent else None,
        entity_params=tuple(entity_params), own_consts=tuple(own_consts),
        consts=consts, equations=tuple(equations),
    )
    _validate_equations(tmpl, entities)
    processes[qualname] = tmpl
    if parent is None:
        roots.append(qualname)
    else:
        children.setdefault(parent.qualname, []).append(qualname)


def _validate_equations(tmpl: ast.ProcessTemplate, entities: dict[str, ast.EntityTemplate]) -> None:
    params = dict(tmpl.entity_params)
    const_names = {c.name for c in tmpl.consts}

    def check_ref(ref: ast.Ref) -> None:
        if ref.prop is None:
            if ref.base not in const_names:
                raise ValidationError("unresolved-symbol",
                                      f"unresolved symbol {ref.text!r} in equations of {tmpl.qualname!r}",
                                      ref.line, ref.column, symbol=ref.text)
            return
        if ref.base not in params:
            raise ValidationError("unresolved-symbol",
                                  f"{ref.base!r} is not a parameter of {tmpl.qualname!r}",
                                  ref.line, ref.column, symbol=ref.text)
        entity = entities[params[ref.base]]
        if entity.var(ref.prop) is None and entity.const(ref.prop) is None:
            raise ValidationError("unresolved-symbol",
                                  f"unresolved symbol {ref.text!r} in equations of {tmpl.qualname!r}",
                                  ref.line, ref.column, symbol=ref.text)

    def walk(expr: ast.Expr) -> None:
        if isinstance(expr, ast.Ref):
            check_ref(expr)
        elif isinstance(expr, ast.Unary):
            walk(expr.operand)
        elif isinstance(expr, ast.Binary):
            walk(expr.left)
            walk(expr.right)
        elif isinstance(expr, ast.Call):
            for arg in expr.args:
                walk(arg)

    for eq in tmpl.equations:
        target = eq.target
        if target.base not in params:
            raise ValidationError("unresolved-symbol",
                                  f"{target.base!r} is not a parameter of {tmpl.qualname!r}",
                                  target.line, target.column, symbol=target.text)
        entity = entities[params[target.base]]
        if entity.var(target.prop) is None:
            raise ValidationError("unresolved-symbol",
                                  f"td target {target.text!r} is not a declared variable",
                                  target.line, target.column, symbol=target.text)
        walk(eq.rhs)


# ------------------------------------------------------------------ scenario

def parse_scenario(text: str, lib: ast.Library) -> ast.Scenario:
    """Parse a modeling scenario and resolve all bindings against `lib`."""
    cur = _Cursor(tokenize(text))
    if cur.peek().type == EOF:
        raise ParseError("syntax", "empty input: expected entity and process declarations", 1, 1)

    instances: list[ast.EntityInstance] = []
    skeletons: list[ast.ProcessSkeleton] = []
    while cur.peek().type != EOF:
        head = cur.expect(IDENT, "'entity' or 'process'")
        if head.text == "entity":
            inst = _parse_entity_instance(cur, lib)
            if any(e.name == inst.name for e in instances):
                raise ValidationError("duplicate-name", f"entity instance {inst.name!r} already declared",
                                      head.line, head.column, symbol=inst.name)
            instances.append(inst)
        elif head.text == "process":
            skel = _parse_skeleton(cur, lib, instances)
            if any(s.name == skel.name for s in skeletons):
                raise ValidationError("duplicate-name", f"process {skel.name!r} already declared",
                                      head.line, head.column, symbol=skel.name)
            skeletons.append(skel)
        else:
            raise ParseError("syntax", f"expected 'entity' or 'process', found {head.text!r}",
                             head.line, head.column, symbol=head.text)
    return ast.Scenario(tuple(instances), tuple(skeletons))


def _parse_const_value(cur: _Cursor, name: Token) -> ast.ConstBinding:
    tok = cur.peek()
    if tok.type == IDENT and tok.text == "null":
        cur.advance()
        return ast.ConstBinding(name.text, ast.FREE)
    if tok.type == IDENT and tok.text == "promoted":
        cur.advance()
        return ast.ConstBinding(name.text, ast.PROMOTED)
    if tok.type in (NUMBER, "-"):
        return ast.ConstBinding(name.text, ast.FIXED, _parse_number(cur))
    raise ParseError("syntax", f"expected number, 'null' or 'promoted', found {tok.text!r}",
                     tok.line, tok.column, symbol=tok.text or None)


def _parse_entity_instance(cur: _Cursor, lib: ast.Library) -> ast.EntityInstance:
    name = cur.expect(IDENT, "entity instance name")
    cur.expect(":")
    tmplname = cur.expect(IDENT, "entity template name")
    tmpl = lib.entity_templates.get(tmplname.text)
    if tmpl is None:
        raise ValidationError("unknown-template", f"unknown entity template {tmplname.text!r}",
                              tmplname.line, tmplname.column, symbol=tmplname.text)
    cur.expect("{")
    var_bindings: dict[str, ast.VarBinding] = {}
    const_bindings: dict[str, ast.ConstBinding] = {}
    while cur.peek().type != "}":
        section = cur.expect(IDENT, "'vars' or 'consts'")
        cur.expect(":")
        if section.text == "vars":
            while True:
                vname = cur.expect(IDENT, "variable name")
                if tmpl.var(vname.text) is None:
                    raise ValidationError("unknown-variable",
                                          f"template {tmpl.name!r} declares no variable {vname.text!r}",
                                          vname.line, vname.column, symbol=vname.text)
                role = None
                initial = None
                data = None
                for key, keytok in _parse_attr_block(cur):
                    if key == "role":
                        value = cur.expect(IDENT, "role")
                        if value.text not in ROLES:
                            raise ValidationError("bad-role", f"role must be one of {ROLES}, got {value.text!r}",
                                                  value.line, value.column, symbol=value.text)
                        role = value.text
                    elif key == "initial":
                        initial = _parse_number(cur)
                    elif key == "data":
                        data = cur.expect(IDENT, "column name").text
                    else:
                        raise ParseError("syntax", f"unknown variable attribute {key!r}",
                                         keytok.line, keytok.column, symbol=key)
                if role is None:
                    raise ValidationError("missing-role", f"variable {vname.text!r} needs a role",
                                          vname.line, vname.column, symbol=vname.text)
                if role == "endogenous" and initial is None:
                    raise ValidationError("missing-initial",
                                          f"endogenous variable {vname.text!r} needs an initial value",
                                          vname.line, vname.column, symbol=vname.text)
                if vname.text in var_bindings:
                    raise ValidationError("duplicate-name", f"variable {vname.text!r} bound twice",
                                          vname.line, vname.column, symbol=vname.text)
                var_bindings[vname.text] = ast.VarBinding(vname.text, role, initial, data)
                if cur.peek().type == ",":
                    cur.advance()
                    continue
                cur.expect(";")
                break
        elif section.text == "consts":
            while True:
                cname = cur.expect(IDENT, "constant name")
                if tmpl.const(cname.text) is None:
                    raise ValidationError("unknown-constant",
                                          f"template {tmpl.name!r} declares no constant {cname.text!r}",
                                          cname.line, cname.column, symbol=cname.text)
                cur.expect("=")
                binding = _parse_const_value(cur, cname)
                if cname.text in const_bindings:
                    raise ValidationError("duplicate-name", f"constant {cname.text!r} bound twice",
                                          cname.line, cname.column, symbol=cname.text)
                const_bindings[cname.text] = binding
                if cur.peek().type == ",":
                    cur.advance()
                    continue
                cur.expect(";")
                break
        else:
            raise ParseError("syntax", f"expected 'vars' or 'consts', found {section.text!r}",
                             section.line, section.column, symbol=section.text)
    cur.expect("}")

    for var in tmpl.vars:
        if var.name not in var_bindings:
            raise ValidationError("missing-role",
                                  f"variable {var.name!r} of {name.text!r} has no role",
                                  name.line, name.column, symbol=f"{name.text}.{var.name}")
    # unmentioned constants are free
    consts = tuple(const_bindings.get(c.name, ast.ConstBinding(c.name, ast.FREE)) for c in tmpl.consts)
    vars_ = tuple(var_bindings[v.name] for v in tmpl.vars)
    return ast.EntityInstance(name.text, tmpl.name, vars_, consts)


def _parse_skeleton(cur: _Cursor, lib: ast.Library,
                    instances: list[ast.EntityInstance]) -> ast.ProcessSkeleton:
    name = cur.expect(IDENT, "process name")
    cur.expect("(")
    args: list[Token] = []
    while cur.peek().type != ")":
        args.append(cur.expect(IDENT, "entity instance name"))
        if cur.peek().type == ",":
            cur.advance()
    cur.expect(")")
    cur.expect(":")
    ref, reftok = _parse_template_ref(cur)
    tmpl = _resolve_template_ref(lib.process_templates, ref, reftok)

    if len(args) > len(tmpl.entity_params):
        raise ValidationError("arity", f"{tmpl.qualname!r} takes at most {len(tmpl.entity_params)} entities",
                              reftok.line, reftok.column, symbol=tmpl.qualname)
    bound: list[str] = []
    for tok, (pname, ptype) in zip(args, tmpl.entity_params):
        inst = next((e for e in instances if e.name == tok.text), None)
        if inst is None:
            raise ValidationError("unknown-entity", f"unknown entity instance {tok.text!r}",
                                  tok.line, tok.column, symbol=tok.text)
        if inst.template != ptype:
            raise ValidationError("entity-type-mismatch",
                                  f"{tok.text!r} is a {inst.template}, but parameter {pname!r} needs a {ptype}",
                                  tok.line, tok.column, symbol=tok.text)
        bound.append(inst.name)

    cur.expect("{")
    const_bindings: dict[str, ast.ConstBinding] = {}
    while cur.peek().type != "}":
        section = cur.expect(IDENT, "'consts'")
        cur.expect(":")
        if section.text != "consts":
            raise ParseError("syntax", f"expected 'consts', found {section.text!r}",
                             section.line, section.column, symbol=section.text)
        while True:
            cname = cur.expect(IDENT, "constant name")
            if tmpl.const(cname.text) is None:
                raise ValidationError("unknown-constant",
                                      f"template {tmpl.qualname!r} declares no constant {cname.text!r}",
                                      cname.line, cname.column, symbol=cname.text)
            cur.expect("=")
            binding = _parse_const_value(cur, cname)
            if cname.text in const_bindings:
                raise ValidationError("duplicate-name", f"constant {cname.text!r} bound twice",
                                      cname.line, cname.column, symbol=cname.text)
            const_bindings[cname.text] = binding
            if cur.peek().type == ",":
                cur.advance()
                continue
            cur.expect(";")
            break
    cur.expect("}")

    consts = tuple(const_bindings.get(c.name, ast.ConstBinding(c.name, ast.FREE)) for c in tmpl.consts)
    return ast.ProcessSkeleton(name.text, tmpl.qualname, tuple(bound), consts)
