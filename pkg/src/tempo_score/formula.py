"""Temporal-property syntax trees and the textual query language.

The query grammar, loosest to tightest binding:

    or    := and ('|' and)*            left-associative
    and   := until ('&' until)*        left-associative
    until := unary ('U' until)?        right-associative
    unary := ('!' | 'X' | 'G' | 'F') unary | primary
    primary := 'true' | 'false' | atom | '(' or ')'

Atoms are bare identifiers (``[A-Za-z_][A-Za-z0-9_]*``) or double-quoted
strings for class names that are not identifiers ("hand clap").  The words
``true``, ``false`` and the operator letters ``X``, ``G``, ``F``, ``U`` are
reserved; quote them to use them as class names.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

__all__ = [
    "Formula",
    "TrueConst",
    "FalseConst",
    "Atom",
    "Not",
    "And",
    "Or",
    "Next",
    "Always",
    "Eventually",
    "Until",
    "FormulaSyntaxError",
    "parse_formula",
    "format_formula",
    "index_formula",
    "formula_size",
    "subformulas",
    "atom_names",
    "substitute_atoms",
]

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_RESERVED = {"true", "false", "X", "G", "F", "U"}


@dataclass(eq=True)
class Formula:
    """Base node.  ``nid`` is a post-order index, unique within one tree."""

    nid: int = field(default=-1, init=False, compare=False, repr=False)

    @property
    def children(self) -> tuple["Formula", ...]:
        return ()


@dataclass(eq=True)
class TrueConst(Formula):
    pass


@dataclass(eq=True)
class FalseConst(Formula):
    pass


@dataclass(eq=True)
class Atom(Formula):
    name: str

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("atom class name must be non-empty")


@dataclass(eq=True)
class _Unary(Formula):
    child: Formula

    @property
    def children(self) -> tuple[Formula, ...]:
        return (self.child,)


@dataclass(eq=True)
class _Binary(Formula):
    left: Formula
    right: Formula

    @property
    def children(self) -> tuple[Formula, ...]:
        return (self.left, self.right)


@dataclass(eq=True)
class Not(_Unary):
    pass


@dataclass(eq=True)
class Next(_Unary):
    pass


@dataclass(eq=True)
class Always(_Unary):
    pass


@dataclass(eq=True)
class Eventually(_Unary):
    pass


@dataclass(eq=True)
class And(_Binary):
    pass


@dataclass(eq=True)
class Or(_Binary):
    pass


@dataclass(eq=True)
class Until(_Binary):
    pass


def index_formula(root: Formula) -> Formula:
    """Assign post-order node ids 0..size-1.  Children get smaller ids than
    their parent, so a pass over ids in ascending order visits bottom-up.
    Idempotent; returns ``root``."""
    counter = 0

    def walk(node: Formula) -> None:
        nonlocal counter
        for child in node.children:
            walk(child)
        node.nid = counter
        counter += 1

    walk(root)
    return root


def formula_size(root: Formula) -> int:
    """Total node count (used as the formula-size factor in cost bounds)."""
    return 1 + sum(formula_size(c) for c in root.children)


def subformulas(root: Formula):
    """Yield every node in post-order (children before parents)."""
    for child in root.children:
        yield from subformulas(child)
    yield root


def atom_names(root: Formula) -> set[str]:
    return {n.name for n in subformulas(root) if isinstance(n, Atom)}


def substitute_atoms(root: Formula, mapping: dict[str, str]) -> Formula:
    """Rebuild the tree with atom names replaced per ``mapping``.

    Unmapped atoms are kept.  The result is a fresh, indexed tree; the input
    is not modified.
    """

    def rebuild(node: Formula) -> Formula:
        if isinstance(node, Atom):
            return Atom(mapping.get(node.name, node.name))
        if isinstance(node, TrueConst):
            return TrueConst()
        if isinstance(node, FalseConst):
            return FalseConst()
        if isinstance(node, _Unary):
            return type(node)(rebuild(node.child))
        assert isinstance(node, _Binary)
        return type(node)(rebuild(node.left), rebuild(node.right))

    return index_formula(rebuild(root))


class FormulaSyntaxError(ValueError):
    """Raised on malformed query text; carries the UTF-8 byte offset and the
    set of token descriptions that would have been accepted there."""

    def __init__(self, message: str, offset: int, expected: tuple[str, ...] = ()):
        self.offset = offset
        self.expected = tuple(expected)
        detail = f"{message} at offset {offset}"
        if expected:
            detail += " (expected " + ", ".join(expected) + ")"
        super().__init__(detail)


@dataclass
class _Token:
    kind: str
    value: str
    offset: int  # UTF-8 byte position in the input


_SINGLE = {"(": "LPAREN", ")": "RPAREN", "!": "NOT", "&": "AND", "|": "OR"}
_KEYWORD = {
    "true": "TRUE",
    "false": "FALSE",
    "X": "NEXT",
    "G": "ALWAYS",
    "F": "EVENTUALLY",
    "U": "UNTIL",
}


def _tokenize(text: str) -> list[_Token]:
    data = text.encode("utf-8").decode("utf-8")  # reject invalid surrogates early
    # map character index -> UTF-8 byte offset, so errors report byte positions
    byte_at = [0]
    for ch in data:
        byte_at.append(byte_at[-1] + len(ch.encode("utf-8")))
    tokens: list[_Token] = []
    i, n = 0, len(data)
    while i < n:
        ch = data[i]
        if ch.isspace():
            i += 1
            continue
        if ch in _SINGLE:
            tokens.append(_Token(_SINGLE[ch], ch, byte_at[i]))
            i += 1
            continue
        if ch == '"':
            j = i + 1
            chars: list[str] = []
            while j < n:
                c = data[j]
                if c == "\\":
                    if j + 1 >= n:
                        raise FormulaSyntaxError("unterminated string", byte_at[i])
                    chars.append(data[j + 1])
                    j += 2
                    continue
                if c == '"':
                    break
                chars.append(c)
                j += 1
            else:
                raise FormulaSyntaxError("unterminated string", byte_at[i])
            if not chars:
                raise FormulaSyntaxError("empty quoted atom", byte_at[i])
            tokens.append(_Token("ATOM", "".join(chars), byte_at[i]))
            i = j + 1
            continue
        m = _IDENT_RE.match(data, i)
        if m:
            word = m.group(0)
            tokens.append(_Token(_KEYWORD.get(word, "ATOM"), word, byte_at[i]))
            i = m.end()
            continue
        raise FormulaSyntaxError(f"unexpected character {ch!r}", byte_at[i])
    tokens.append(_Token("EOF", "", byte_at[n]))
    return tokens


_PRIMARY_EXPECTED = ("atom", "'true'", "'false'", "'('", "'!'", "'X'", "'G'", "'F'")


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def parse(self) -> Formula:
        node = self.parse_or()
        tok = self.peek()
        if tok.kind != "EOF":
            raise FormulaSyntaxError(
                f"unexpected token {tok.value!r}",
                tok.offset,
                ("'&'", "'|'", "'U'", "end of input"),
            )
        return node

    def parse_or(self) -> Formula:
        node = self.parse_and()
        while self.peek().kind == "OR":
            self.advance()
            node = Or(node, self.parse_and())
        return node

    def parse_and(self) -> Formula:
        node = self.parse_until()
        while self.peek().kind == "AND":
            self.advance()
            node = And(node, self.parse_until())
        return node

    def parse_until(self) -> Formula:
        left = self.parse_unary()
        if self.peek().kind == "UNTIL":
            self.advance()
            return Until(left, self.parse_until())
        return left

    def parse_unary(self) -> Formula:
        kind = self.peek().kind
        if kind == "NOT":
            self.advance()
            return Not(self.parse_unary())
        if kind == "NEXT":
            self.advance()
            return Next(self.parse_unary())
        if kind == "ALWAYS":
            self.advance()
            return Always(self.parse_unary())
        if kind == "EVENTUALLY":
            self.advance()
            return Eventually(self.parse_unary())
        return self.parse_primary()

    def parse_primary(self) -> Formula:
        tok = self.peek()
        if tok.kind == "TRUE":
            self.advance()
            return TrueConst()
        if tok.kind == "FALSE":
            self.advance()
            return FalseConst()
        if tok.kind == "ATOM":
            self.advance()
            return Atom(tok.value)
        if tok.kind == "LPAREN":
            self.advance()
            node = self.parse_or()
            closing = self.peek()
            if closing.kind != "RPAREN":
                raise FormulaSyntaxError(
                    f"unexpected token {closing.value!r}", closing.offset, ("')'",)
                )
            self.advance()
            return node
        raise FormulaSyntaxError(
            f"unexpected token {tok.value!r}" if tok.kind != "EOF" else "unexpected end of input",
            tok.offset,
            _PRIMARY_EXPECTED,
        )


def parse_formula(text: str) -> Formula:
    """Parse query text into an indexed syntax tree."""
    tokens = _tokenize(text)
    if tokens[0].kind == "EOF":
        raise FormulaSyntaxError("empty input", 0, _PRIMARY_EXPECTED)
    return index_formula(_Parser(tokens).parse())


def _format_atom(name: str) -> str:
    if _IDENT_RE.fullmatch(name) and name not in _RESERVED:
        return name
    escaped = name.replace("\\", "\\\\").replace('"', '\\"')
    return f'"{escaped}"'


def format_formula(node: Formula) -> str:
    """Canonical fully-parenthesized text; parses back to an identical tree."""
    if isinstance(node, TrueConst):
        return "true"
    if isinstance(node, FalseConst):
        return "false"
    if isinstance(node, Atom):
        return _format_atom(node.name)
    if isinstance(node, Not):
        return f"(! {format_formula(node.child)})"
    if isinstance(node, Next):
        return f"(X {format_formula(node.child)})"
    if isinstance(node, Always):
        return f"(G {format_formula(node.child)})"
    if isinstance(node, Eventually):
        return f"(F {format_formula(node.child)})"
    if isinstance(node, And):
        return f"({format_formula(node.left)} & {format_formula(node.right)})"
    if isinstance(node, Or):
        return f"({format_formula(node.left)} | {format_formula(node.right)})"
    if isinstance(node, Until):
        return f"({format_formula(node.left)} U {format_formula(node.right)})"
    raise TypeError(f"not a formula node: {node!r}")
