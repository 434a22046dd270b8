"""Errors raised by the modeling-language front end."""

from __future__ import annotations


class SourceError(Exception):
    """A failure tied to a location in the input text.

    Attributes:
        kind: short machine-readable category, e.g. "syntax" or "unknown-template".
        line, column: 1-based location in the offending input.
        symbol: the offending identifier, when one exists.
    """

    def __init__(self, kind: str, message: str, line: int, column: int, symbol: str | None = None):
        self.kind = kind
        self.message = message
        self.line = line
        self.column = column
        self.symbol = symbol
        super().__init__(f"line {line}, col {column}: {message}")


class ParseError(SourceError):
    """Lexical or grammatical error; parsing stopped at (line, column)."""


class ValidationError(SourceError):
    """Well-formed text that violates a language rule (unknown name, bad range, ...)."""
