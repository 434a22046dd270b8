"""Tokenizer for library and scenario files."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ParseError

PUNCT = "{}():;,=<>.+-*/"

IDENT = "ident"
NUMBER = "number"
EOF = "eof"


@dataclass(frozen=True)
class Token:
    type: str  # IDENT, NUMBER, EOF, or the punctuation character itself
    text: str
    line: int
    column: int


def _is_ident_start(ch: str) -> bool:
    return ch.isalpha() or ch == "_"


def _is_ident(ch: str) -> bool:
    return ch.isalnum() or ch == "_"


def tokenize(text: str) -> list[Token]:
    """Split input into tokens; `//` comments run to end of line."""
    tokens: list[Token] = []
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "/" and i + 1 < n and text[i + 1] == "/":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if _is_ident_start(ch):
            j = i
            while j < n and _is_ident(text[j]):
                j += 1
            tokens.append(Token(IDENT, text[i:j], line, col))
            col += j - i
            i = j
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            if j < n and text[j] == ".":
                j += 1
                while j < n and text[j].isdigit():
                    j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            tokens.append(Token(NUMBER, text[i:j], line, col))
            col += j - i
            i = j
            continue
        if ch in PUNCT:
            tokens.append(Token(ch, ch, line, col))
            i += 1
            col += 1
            continue
        raise ParseError("syntax", f"unexpected character {ch!r}", line, col, symbol=ch)
    tokens.append(Token(EOF, "", line, col))
    return tokens
