"""Operability states, the IDR operators and expression evaluation.

States are plain ints: 0 is non-operational, 1 is reduced operation and
2 is full operation.  The binary IIM dialect uses only 0 and 2 so both
dialects share one evaluator.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence, Union

FAILED = 0
REDUCED = 1
FULL = 2
MAX_STATE = FULL
STATES = (FAILED, REDUCED, FULL)


class Dialect(str, enum.Enum):
    IIM = "iim"
    MIIM = "miim"

    @property
    def states(self) -> tuple[int, ...]:
        return (FAILED, FULL) if self is Dialect.IIM else STATES


class IdrError(Exception):
    """Base class for model errors (bad input, not bugs)."""


class UnboundEntityError(IdrError):
    def __init__(self, entity: str):
        super().__init__(f"no state bound for entity {entity}")
        self.entity = entity


class DialectError(IdrError):
    pass


def check_state(value: int, dialect: Dialect = Dialect.MIIM) -> int:
    if value not in dialect.states:
        if value in STATES:
            raise DialectError(f"state {value} is not allowed in the {dialect.value} dialect")
        raise ValueError(f"invalid state {value!r}; expected one of {STATES}")
    return value


def min_and(a: int, b: int) -> int:
    return a if a < b else b


def max_or(a: int, b: int) -> int:
    return a if a > b else b


def new_xor(inputs: Sequence[int]) -> int:
    """Common value when every input agrees, otherwise reduced operation."""
    if len(inputs) < 2:
        raise ValueError("new_xor needs at least two inputs")
    first = inputs[0]
    for v in inputs[1:]:
        if v != first:
            return REDUCED
    return first


def _xor_star(*inputs: int) -> int:
    first = inputs[0]
    for v in inputs[1:]:
        if v != first:
            return REDUCED
    return first


# --- expression trees -------------------------------------------------------

@dataclass(frozen=True)
class Ref:
    name: str

    def entities(self) -> frozenset[str]:
        return frozenset((self.name,))


@dataclass(frozen=True)
class _Op:
    operands: tuple["Expr", ...]

    symbol = "?"
    # binding strength used for minimal parenthesisation; higher binds tighter
    strength = 0

    def __init__(self, *operands: "Expr"):
        if len(operands) == 1 and isinstance(operands[0], (list, tuple)):
            operands = tuple(operands[0])
        if len(operands) < 2:
            raise ValueError(f"{type(self).__name__} needs at least two operands")
        object.__setattr__(self, "operands", tuple(operands))

    def entities(self) -> frozenset[str]:
        out: set[str] = set()
        for op in self.operands:
            out |= op.entities()
        return frozenset(out)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({', '.join(map(repr, self.operands))})"


class MinAnd(_Op):
    symbol = "&"
    strength = 3

    @staticmethod
    def apply(values: Sequence[int]) -> int:
        return min(values)


class MaxOr(_Op):
    symbol = "|"
    strength = 2

    @staticmethod
    def apply(values: Sequence[int]) -> int:
        return max(values)


class NewXor(_Op):
    symbol = "@"
    strength = 1

    @staticmethod
    def apply(values: Sequence[int]) -> int:
        return new_xor(values)


Expr = Union[Ref, MinAnd, MaxOr, NewXor]
Assignment = Mapping[str, int]


def iter_nodes(expr: Expr):
    yield expr
    if isinstance(expr, _Op):
        for op in expr.operands:
            yield from iter_nodes(op)


def check_dialect(expr: Expr, dialect: Dialect) -> None:
    if dialect is Dialect.IIM:
        for node in iter_nodes(expr):
            if isinstance(node, NewXor):
                raise DialectError("new_XOR ('@') is not part of the iim dialect")


def _leaf_state(name: str, assignment: Assignment, dialect: Dialect) -> int:
    try:
        value = assignment[name]
    except KeyError:
        raise UnboundEntityError(name) from None
    return check_state(value, dialect)


def eval_expr(expr: Expr, assignment: Assignment, dialect: Dialect = Dialect.MIIM) -> int:
    check_dialect(expr, dialect)
    return _eval(expr, assignment, dialect)


def _eval(expr: Expr, assignment: Assignment, dialect: Dialect) -> int:
    if isinstance(expr, Ref):
        return _leaf_state(expr.name, assignment, dialect)
    return expr.apply([_eval(op, assignment, dialect) for op in expr.operands])


# --- rendering --------------------------------------------------------------

def render(expr: Expr, minimal: bool = True) -> str:
    """ASCII text for an expression.

    ``minimal=False`` parenthesises every nested operator, which is the
    layout used by step-by-step traces.
    """
    return _render(expr, 0, minimal)


def _render(node, parent_strength: int, minimal: bool) -> str:
    if isinstance(node, Ref):
        return node.name
    if isinstance(node, int):
        return str(node)
    if isinstance(node, _PartialOp):
        op_cls, operands = node.op_cls, node.operands
    else:
        op_cls, operands = type(node), node.operands
    inner = f" {op_cls.symbol} ".join(_render(o, op_cls.strength, minimal) for o in operands)
    if parent_strength == 0:
        return inner
    if minimal and parent_strength < op_cls.strength:
        return inner
    return f"({inner})"


# --- traces -----------------------------------------------------------------

@dataclass(frozen=True)
class _PartialOp:
    op_cls: type
    operands: tuple


@dataclass(frozen=True)
class EvalTrace:
    """Layer-by-layer reduction of one expression.

    ``steps`` starts with the fully substituted expression and ends with
    the bare final state.  ``event`` names the leaves that are not fully
    operational, which is how a failure-driven reduction table opens.
    """

    event: str
    steps: tuple[str, ...]
    final: int

    def rows(self) -> list[str]:
        return [self.event, *self.steps] if self.event else list(self.steps)

    def render(self, target: str | None = None) -> str:
        lines = []
        for i, row in enumerate(self.rows(), 1):
            prefix = f"{target} <- " if target and (i > 1 or not self.event) else ""
            lines.append(f"STEP {i}: {prefix}{row}")
        return "\n".join(lines)


def _substitute(expr: Expr, assignment: Assignment, dialect: Dialect):
    if isinstance(expr, Ref):
        return _leaf_state(expr.name, assignment, dialect)
    return _PartialOp(type(expr), tuple(_substitute(o, assignment, dialect) for o in expr.operands))


def _reduce_layer(node):
    if isinstance(node, int):
        return node
    if all(isinstance(o, int) for o in node.operands):
        return node.op_cls.apply(node.operands)
    return _PartialOp(node.op_cls, tuple(_reduce_layer(o) for o in node.operands))


def eval_trace(expr: Expr, assignment: Assignment, dialect: Dialect = Dialect.MIIM) -> EvalTrace:
    check_dialect(expr, dialect)
    node = _substitute(expr, assignment, dialect)
    steps = [_render(node, 0, False)]
    while not isinstance(node, int):
        node = _reduce_layer(node)
        steps.append(_render(node, 0, False))
    degraded = sorted(n for n in expr.entities() if assignment[n] != FULL)
    event = ", ".join(f"{n} -> {assignment[n]}" for n in degraded)
    return EvalTrace(event=event, steps=tuple(steps), final=node)


# --- compilation for the cascade hot loop ------------------------------------

_DEFAULT_NAMES = {"MinAnd": "min", "MaxOr": "max", "NewXor": "_xor"}


def compile_expr(
    expr: Expr, index: Mapping[str, int], names: Mapping[str, str] | None = None
) -> Callable[[Sequence[int]], int]:
    """Turn an expression into a function of a state list indexed by ``index``.

    ``names`` maps operator class names to the builtin used for them
    (``min``, ``max`` or ``_xor``), which lets the search reuse the tree
    for its cost bounds.
    """
    code = _codegen(expr, index, names or _DEFAULT_NAMES)
    return eval(f"lambda s: {code}", {"_xor": _xor_star})  # noqa: S307 - generated from a parsed tree


def _codegen(expr: Expr, index: Mapping[str, int], names: Mapping[str, str]) -> str:
    if isinstance(expr, Ref):
        try:
            return f"s[{index[expr.name]}]"
        except KeyError:
            raise UnboundEntityError(expr.name) from None
    parts = ", ".join(_codegen(o, index, names) for o in expr.operands)
    return f"{names[type(expr).__name__]}({parts})"
