"""Typed AST for domain libraries and modeling scenarios.

All nodes are immutable; parsed trees can be shared freely across threads.
Source positions are carried for diagnostics but excluded from equality, so
two parses of equivalent text compare equal structurally.
"""

from __future__ import annotations

from dataclasses import dataclass, field


# ---------------------------------------------------------------- expressions

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Ref:
    """A symbol reference: bare process constant `G` or property `t1.h`."""

    base: str
    prop: str | None = None
    line: int = field(default=0, compare=False)
    column: int = field(default=0, compare=False)

    @property
    def text(self) -> str:
        return self.base if self.prop is None else f"{self.base}.{self.prop}"


@dataclass(frozen=True)
class Unary:
    op: str  # only '-'
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str  # one of + - * /
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str  # pow | exp
    args: tuple["Expr", ...]


Expr = Num | Ref | Unary | Binary | Call


@dataclass(frozen=True)
class Equation:
    """`td(param.var) = rhs`: contribution to the time derivative of a variable."""

    target: Ref  # always of the param.var form
    rhs: Expr


# ------------------------------------------------------------------- library

@dataclass(frozen=True)
class VarDecl:
    name: str
    aggregation: str | None = None  # only "sum" is legal
    range: tuple[float, float] | None = None


@dataclass(frozen=True)
class ConstDecl:
    name: str
    range: tuple[float, float] | None = None


@dataclass(frozen=True)
class EntityTemplate:
    name: str
    vars: tuple[VarDecl, ...]
    consts: tuple[ConstDecl, ...]

    def var(self, name: str) -> VarDecl | None:
        return next((v for v in self.vars if v.name == name), None)

    def const(self, name: str) -> ConstDecl | None:
        return next((c for c in self.consts if c.name == name), None)


@dataclass(frozen=True)
class ProcessTemplate:
    """One node of a process hierarchy.

    `entity_params` and `consts` are materialized: they include everything
    inherited from ancestors. `own_consts` holds only this node's declarations.
    """

    name: str
    qualname: str  # dotted path from the hierarchy root, e.g. "Outflow.Linear"
    parent: str | None  # parent qualname
    entity_params: tuple[tuple[str, str], ...]  # (param name, entity template name)
    own_consts: tuple[ConstDecl, ...]
    consts: tuple[ConstDecl, ...]
    equations: tuple[Equation, ...]
    children: tuple[str, ...] = ()  # child qualnames, declaration order

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def const(self, name: str) -> ConstDecl | None:
        return next((c for c in self.consts if c.name == name), None)


@dataclass(frozen=True)
class Library:
    """Parsed domain knowledge: entity templates plus a forest of process templates."""

    entity_templates: dict[str, EntityTemplate]
    process_templates: dict[str, ProcessTemplate]  # keyed by qualname
    roots: tuple[str, ...]  # root qualnames, declaration order

    def leaves_of(self, qualname: str) -> list[ProcessTemplate]:
        """Leaf descendants-or-self of a template, declaration order."""
        node = self.process_templates[qualname]
        if node.is_leaf:
            return [node]
        out: list[ProcessTemplate] = []
        for child in node.children:
            out.extend(self.leaves_of(child))
        return out


# ------------------------------------------------------------------ scenario

#: const binding kinds
FIXED = "fixed"
FREE = "free"
PROMOTED = "promoted"


@dataclass(frozen=True)
class ConstBinding:
    name: str
    kind: str  # FIXED | FREE | PROMOTED
    value: float | None = None  # set iff kind == FIXED


@dataclass(frozen=True)
class VarBinding:
    name: str
    role: str  # "endogenous" | "exogenous"
    initial: float | None = None
    data: str | None = None  # dataset column carrying this signal; defaults to "<instance>.<var>"


@dataclass(frozen=True)
class EntityInstance:
    name: str
    template: str
    var_bindings: tuple[VarBinding, ...]
    const_bindings: tuple[ConstBinding, ...]

    def var(self, name: str) -> VarBinding | None:
        return next((v for v in self.var_bindings if v.name == name), None)

    def const(self, name: str) -> ConstBinding | None:
        return next((c for c in self.const_bindings if c.name == name), None)


@dataclass(frozen=True)
class ProcessSkeleton:
    """A known interaction: bound entities plus the declared (possibly non-leaf) template."""

    name: str
    template: str  # qualname after resolution
    entities: tuple[str, ...]  # instance names, template-parameter order (may be a prefix)
    const_bindings: tuple[ConstBinding, ...]

    def const(self, name: str) -> ConstBinding | None:
        return next((c for c in self.const_bindings if c.name == name), None)


@dataclass(frozen=True)
class Scenario:
    entity_instances: tuple[EntityInstance, ...]
    skeletons: tuple[ProcessSkeleton, ...]

    def instance(self, name: str) -> EntityInstance | None:
        return next((e for e in self.entity_instances if e.name == name), None)
