"""Modeling-language front end: parsing, validation, printing."""

from .ast import (
    Binary,
    Call,
    ConstBinding,
    ConstDecl,
    EntityInstance,
    EntityTemplate,
    Equation,
    Expr,
    FIXED,
    FREE,
    Library,
    Num,
    PROMOTED,
    ProcessSkeleton,
    ProcessTemplate,
    Ref,
    Scenario,
    Unary,
    VarBinding,
    VarDecl,
)
from .errors import ParseError, SourceError, ValidationError
from .parser import parse_library, parse_scenario
from .printer import (
    fmt_expr,
    fmt_number,
    library_to_json,
    print_library,
    print_scenario,
    scenario_to_json,
)

__all__ = [
    "Binary", "Call", "ConstBinding", "ConstDecl", "EntityInstance",
    "EntityTemplate", "Equation", "Expr", "FIXED", "FREE", "Library", "Num",
    "PROMOTED", "ProcessSkeleton", "ProcessTemplate", "Ref", "Scenario",
    "Unary", "VarBinding", "VarDecl",
    "ParseError", "SourceError", "ValidationError",
    "parse_library", "parse_scenario",
    "fmt_expr", "fmt_number", "library_to_json", "print_library",
    "print_scenario", "scenario_to_json",
]
