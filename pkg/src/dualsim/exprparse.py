"""Text form of rate expressions.

The CLI and JSON configs write channel rates as plain arithmetic over
parameter and species names, e.g. ``"p*T/(g+T)"``.  The grammar is
numbers, identifiers, ``+ - * / ^``, unary minus, and parentheses, with
the usual precedence (``^`` over ``* /`` over ``+ -``) and all binary
operators left-associative, so ``a^b^c`` parses as ``(a^b)^c``.

Identifiers resolve against the surrounding model: a species name
becomes a live-count reference, anything in the parameter set becomes a
parameter reference (species win on a name clash), and any other name
is rejected with its column.  All error positions are 1-based columns
into the original text.
"""

from __future__ import annotations

import re
from collections import namedtuple
from collections.abc import Mapping, Sequence

from .core import SimulationError, param_names
from .rates import BinOp, Const, Count, Param, RateExpr, UnboundIdentifier

Token = namedtuple("Token", ["kind", "text", "column"])

_TOKEN_RE = re.compile(
    r"""
    (?P<number>(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
  | (?P<ws>\s+)
    """,
    re.VERBOSE,
)


class RateSyntaxError(SimulationError):
    """The rate text is not well-formed; `column` points at the problem
    (1-based)."""

    def __init__(self, message: str, column: int):
        super().__init__(f"{message} (column {column})")
        self.column = column


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise RateSyntaxError(f"unexpected character {text[pos]!r}", pos + 1)
        if m.lastgroup == "number":
            tokens.append(Token("number", m.group(), pos + 1))
        elif m.lastgroup == "ident":
            tokens.append(Token("ident", m.group(), pos + 1))
        elif m.lastgroup == "op":
            tokens.append(Token(m.group(), m.group(), pos + 1))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, tokens: list[Token], text_len: int, species, params):
        self.tokens = tokens
        self.pos = 0
        self.end_column = text_len + 1
        self.species = set(species)
        self.params = set(params)

    def peek(self) -> Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self) -> Token:
        tok = self.peek()
        if tok is None:
            raise RateSyntaxError("unexpected end of expression", self.end_column)
        self.pos += 1
        return tok

    def expr(self) -> RateExpr:
        node = self.term()
        while (tok := self.peek()) is not None and tok.kind in ("+", "-"):
            self.take()
            node = BinOp(tok.kind, node, self.term())
        return node

    def term(self) -> RateExpr:
        node = self.power()
        while (tok := self.peek()) is not None and tok.kind in ("*", "/"):
            self.take()
            node = BinOp(tok.kind, node, self.power())
        return node

    def power(self) -> RateExpr:
        node = self.atom()
        while (tok := self.peek()) is not None and tok.kind == "^":
            self.take()
            node = BinOp("^", node, self.atom())
        return node

    def atom(self) -> RateExpr:
        tok = self.take()
        if tok.kind == "number":
            return Const(float(tok.text))
        if tok.kind == "ident":
            if tok.text in self.species:
                return Count(tok.text)
            if tok.text in self.params:
                return Param(tok.text)
            raise UnboundIdentifier(
                f"unknown name {tok.text!r} (column {tok.column}): not a "
                f"species or parameter",
                tok.text,
                tok.column,
            )
        if tok.kind == "-":
            return BinOp("-", Const(0.0), self.atom())
        if tok.kind == "(":
            node = self.expr()
            closing = self.take()
            if closing.kind != ")":
                raise RateSyntaxError(
                    f"expected ')', found {closing.text!r}", closing.column
                )
            return node
        raise RateSyntaxError(f"unexpected token {tok.text!r}", tok.column)


def parse_rate_expr(text: str, params, species: Sequence[str]) -> RateExpr:
    """Parse rate text into a RateExpr bound to the given names.

    `params` may be a parameter record, a mapping, or an iterable of
    names; `species` is the model's species tuple.
    """
    if isinstance(params, Mapping):
        names = tuple(params.keys())
    elif isinstance(params, (list, tuple, set, frozenset)):
        names = tuple(params)
    else:
        names = param_names(params)
    tokens = tokenize(text)
    parser = _Parser(tokens, len(text), species, names)
    node = parser.expr()
    trailing = parser.peek()
    if trailing is not None:
        raise RateSyntaxError(f"unexpected token {trailing.text!r}", trailing.column)
    return node
