"""Rate-expression trees for stochastic transition channels.

A rate expression is a small arithmetic tree over numeric constants,
named model parameters, and current species counts.  The same tree
serves three consumers: direct evaluation (the reference engines),
constant-folded postfix compilation (the fast tau-leap kernel), and the
text parser in `exprparse`.

Expressions support +, -, *, /, ^ plus a saturating-fraction helper
x/(g + x) that appears in every immune-recruitment term.  Trees are
immutable; operators on nodes build larger trees, so builders can write
`param("p") * saturating(count(TUMOUR), param("g"))`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .core import SimulationError, param_value


class DivisionByZero(SimulationError):
    """A rate expression divided by zero for the given state/parameters."""


class UnboundIdentifier(SimulationError):
    """An expression referenced a name that is neither a parameter of the
    model nor one of its species."""

    def __init__(self, message: str, name: str, column: int | None = None):
        super().__init__(message)
        self.name = name
        self.column = column


def wrap(value) -> "RateExpr":
    """Coerce plain numbers to Const nodes; pass RateExpr through."""
    if isinstance(value, RateExpr):
        return value
    if isinstance(value, (int, float, np.integer, np.floating)):
        return Const(float(value))
    raise TypeError(f"cannot use {type(value).__name__} in a rate expression")


class RateExpr:
    """Base node.  Subclasses are frozen dataclasses; arithmetic operators
    compose new trees."""

    def __add__(self, other):
        return BinOp("+", self, wrap(other))

    def __radd__(self, other):
        return BinOp("+", wrap(other), self)

    def __sub__(self, other):
        return BinOp("-", self, wrap(other))

    def __rsub__(self, other):
        return BinOp("-", wrap(other), self)

    def __mul__(self, other):
        return BinOp("*", self, wrap(other))

    def __rmul__(self, other):
        return BinOp("*", wrap(other), self)

    def __truediv__(self, other):
        return BinOp("/", self, wrap(other))

    def __rtruediv__(self, other):
        return BinOp("/", wrap(other), self)

    def __pow__(self, other):
        return BinOp("^", self, wrap(other))

    def __neg__(self):
        return BinOp("-", Const(0.0), self)

    def children(self) -> tuple["RateExpr", ...]:
        return ()

    def walk(self) -> Iterator["RateExpr"]:
        yield self
        for child in self.children():
            yield from child.walk()

    def identifiers(self) -> set[str]:
        """All Param and Count names referenced anywhere in the tree."""
        names: set[str] = set()
        for node in self.walk():
            if isinstance(node, Param):
                names.add(node.name)
            elif isinstance(node, Count):
                names.add(node.species)
        return names


@dataclass(frozen=True)
class Const(RateExpr):
    value: float


@dataclass(frozen=True)
class Param(RateExpr):
    name: str


@dataclass(frozen=True)
class Count(RateExpr):
    """Current total count of one species."""

    species: str


@dataclass(frozen=True)
class BinOp(RateExpr):
    op: str
    lhs: RateExpr
    rhs: RateExpr

    _OPS = ("+", "-", "*", "/", "^")

    def __post_init__(self):
        if self.op not in self._OPS:
            raise ValueError(f"unknown operator {self.op!r}")

    def children(self):
        return (self.lhs, self.rhs)


@dataclass(frozen=True)
class Saturating(RateExpr):
    """x / (g + x): the Michaelis-Menten style fraction used by
    recruitment and kill terms.  Equivalent to the explicit BinOp tree
    but reads better in model builders."""

    x: RateExpr
    g: RateExpr

    def children(self):
        return (self.x, self.g)


def const(value) -> Const:
    return Const(float(value))


def param(name: str) -> Param:
    return Param(name)


def count(species: str) -> Count:
    return Count(species)


def saturating(x, g) -> Saturating:
    return Saturating(wrap(x), wrap(g))


# ---------------------------------------------------------------------------
# Evaluation


def evaluate(expr: RateExpr, counts, params) -> float:
    """Evaluate a rate tree against species counts and parameters.

    `counts` maps species name to current count; `params` is a parameter
    record or mapping.  Raises UnboundIdentifier for unknown names and
    DivisionByZero when a denominator evaluates to exactly zero.
    """
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, Param):
        try:
            return param_value(params, expr.name)
        except (AttributeError, KeyError):
            raise UnboundIdentifier(
                f"unknown parameter {expr.name!r}", expr.name
            ) from None
    if isinstance(expr, Count):
        try:
            return float(counts[expr.species])
        except KeyError:
            raise UnboundIdentifier(
                f"unknown species {expr.species!r}", expr.species
            ) from None
    if isinstance(expr, BinOp):
        a = evaluate(expr.lhs, counts, params)
        b = evaluate(expr.rhs, counts, params)
        if expr.op == "+":
            return a + b
        if expr.op == "-":
            return a - b
        if expr.op == "*":
            return a * b
        if expr.op == "/":
            if b == 0.0:
                raise DivisionByZero(f"division by zero evaluating rate (num={a!r})")
            return a / b
        try:
            return float(a**b)
        except OverflowError:
            # Match IEEE semantics (and the jitted kernel): overflowing
            # powers become inf and are rejected downstream as
            # non-finite rates rather than blowing up mid-evaluation.
            negative = a < 0 and float(b).is_integer() and int(b) % 2 == 1
            return float("-inf") if negative else float("inf")
    if isinstance(expr, Saturating):
        x = evaluate(expr.x, counts, params)
        g = evaluate(expr.g, counts, params)
        denom = g + x
        if denom == 0.0:
            raise DivisionByZero("saturating fraction with zero denominator")
        return x / denom
    raise TypeError(f"not a rate expression: {type(expr).__name__}")


# ---------------------------------------------------------------------------
# Postfix compilation (for the jitted tau-leap kernel)

OP_CONST = 0  # push immediate argument
OP_COUNT = 1  # push current count of species[arg]
OP_ADD = 2
OP_SUB = 3
OP_MUL = 4
OP_DIV = 5
OP_POW = 6


def _fold(expr: RateExpr, params) -> RateExpr:
    """Resolve Param nodes against `params` and fold constant subtrees."""
    if isinstance(expr, Param):
        return Const(param_value(params, expr.name))
    if isinstance(expr, (Const, Count)):
        return expr
    if isinstance(expr, Saturating):
        expr = BinOp("/", expr.x, BinOp("+", expr.g, expr.x))
    if isinstance(expr, BinOp):
        lhs = _fold(expr.lhs, params)
        rhs = _fold(expr.rhs, params)
        if isinstance(lhs, Const) and isinstance(rhs, Const):
            return Const(evaluate(BinOp(expr.op, lhs, rhs), {}, {}))
        return BinOp(expr.op, lhs, rhs)
    raise TypeError(f"not a rate expression: {type(expr).__name__}")


def compile_rate(
    expr: RateExpr, species: tuple[str, ...], params
) -> tuple[np.ndarray, np.ndarray]:
    """Flatten a rate tree to postfix opcode/argument arrays.

    Parameters are baked in as constants (so the compiled form is only
    valid for one parameter record).  Count references become indices
    into the model's species tuple.  Returns (ops, args) as int64 and
    float64 arrays of equal length.
    """
    index = {name: i for i, name in enumerate(species)}
    ops: list[int] = []
    args: list[float] = []

    def emit(node: RateExpr):
        if isinstance(node, Const):
            ops.append(OP_CONST)
            args.append(node.value)
        elif isinstance(node, Count):
            if node.species not in index:
                raise UnboundIdentifier(
                    f"unknown species {node.species!r}", node.species
                )
            ops.append(OP_COUNT)
            args.append(float(index[node.species]))
        elif isinstance(node, BinOp):
            emit(node.lhs)
            emit(node.rhs)
            ops.append({"+": OP_ADD, "-": OP_SUB, "*": OP_MUL, "/": OP_DIV, "^": OP_POW}[node.op])
            args.append(0.0)
        else:  # Param/Saturating were removed by folding
            raise TypeError(f"unexpected node after folding: {type(node).__name__}")

    emit(_fold(expr, params))
    return np.asarray(ops, dtype=np.int64), np.asarray(args, dtype=np.float64)


# Closed-form summaries of common rate shapes.  The kernel evaluates
# classified channels directly instead of interpreting their programs,
# which matters when a 600-day run takes fifteen million substeps.
PAT_GENERAL = 0
PAT_CONST = 1
PAT_AFFINE = 2
PAT_SAT = 3


def _affine(node):
    """Summarize a folded tree as a + b*count(species), or None."""
    if isinstance(node, Const):
        return (node.value, 0.0, None)
    if isinstance(node, Count):
        return (0.0, 1.0, node.species)
    if isinstance(node, BinOp):
        lhs = _affine(node.lhs)
        rhs = _affine(node.rhs)
        if lhs is None or rhs is None:
            return None
        a1, b1, s1 = lhs
        a2, b2, s2 = rhs
        if node.op in ("+", "-"):
            if s1 is not None and s2 is not None and s1 != s2:
                return None
            s = s1 if s1 is not None else s2
            if node.op == "+":
                return (a1 + a2, b1 + b2, s)
            return (a1 - a2, b1 - b2, s)
        if node.op == "*":
            if s1 is None:
                return (a1 * a2, a1 * b2, s2)
            if s2 is None:
                return (a1 * a2, b1 * a2, s1)
            return None
        if node.op == "/":
            if s2 is None and a2 != 0.0:
                return (a1 / a2, b1 / a2, s1)
            return None
    return None


def _match_sat_core(node):
    """Match Count(s) / (g + Count(s)) with constant g; None otherwise."""
    if not (isinstance(node, BinOp) and node.op == "/"):
        return None
    num, den = node.lhs, node.rhs
    if not isinstance(num, Count):
        return None
    if not (isinstance(den, BinOp) and den.op == "+"):
        return None
    a, b = den.lhs, den.rhs
    if isinstance(a, Const) and isinstance(b, Count) and b.species == num.species:
        return (a.value, num.species)
    if isinstance(b, Const) and isinstance(a, Count) and a.species == num.species:
        return (b.value, num.species)
    return None


def _match_sat(node):
    """Match c * x/(g+x) in either factor order; returns (c, g, species)."""
    if isinstance(node, BinOp) and node.op == "*":
        for const_side, other in ((node.lhs, node.rhs), (node.rhs, node.lhs)):
            if isinstance(const_side, Const):
                core = _match_sat_core(other)
                if core is not None:
                    g, s = core
                    return (const_side.value, g, s)
    core = _match_sat_core(node)
    if core is not None:
        g, s = core
        return (1.0, g, s)
    return None


def classify_rate(
    expr: RateExpr, species: tuple[str, ...], params
) -> tuple[int, float, float, int]:
    """Closed-form summary (pattern, a, b, species_index) of a rate.

    pattern PAT_CONST:  value = a
    pattern PAT_AFFINE: value = a + b * counts[species_index]
    pattern PAT_SAT:    value = a * x / (b + x), x = counts[species_index]
    pattern PAT_GENERAL: none of the above; run the compiled program.

    PAT_SAT requires b > 0 so the denominator can never vanish on
    non-negative counts.  Results may differ from the program by
    round-off only (for instance a*(1 - b*T) summarizes to a - a*b*T).
    """
    index = {name: i for i, name in enumerate(species)}
    folded = _fold(expr, params)
    aff = _affine(folded)
    if aff is not None:
        a, b, s = aff
        if np.isfinite(a) and np.isfinite(b):
            if b == 0.0 or s is None:
                return (PAT_CONST, a, 0.0, -1)
            if s in index:
                return (PAT_AFFINE, a, b, index[s])
        return (PAT_GENERAL, 0.0, 0.0, -1)
    sat = _match_sat(folded)
    if sat is not None:
        c, g, s = sat
        if np.isfinite(c) and np.isfinite(g) and g > 0.0 and s in index:
            return (PAT_SAT, c, g, index[s])
    return (PAT_GENERAL, 0.0, 0.0, -1)


def stack_depth(ops: np.ndarray) -> int:
    """Maximum operand-stack depth needed to run a compiled program."""
    depth = 0
    worst = 0
    for op in ops:
        if op in (OP_CONST, OP_COUNT):
            depth += 1
        else:
            depth -= 1
        worst = max(worst, depth)
    return worst
