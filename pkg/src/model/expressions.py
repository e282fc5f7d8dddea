"""
CF-Safe - Expressions
Guard, update and label expressions of the PRISM subset

Nodes are immutable and compare by value, so two parses of the same text give
equal trees. `compile()` turns a tree into a closure over the state's feature
tuple; `render()` prints it with the minimum parentheses needed to parse back
to the same tree.
"""

import operator
from dataclasses import dataclass
from typing import Callable, Iterator, Tuple, Union

from src.model.errors import ArithmeticOverflow

INT64_MIN = -(2 ** 63)
INT64_MAX = 2 ** 63 - 1

Value = Union[int, bool]
Evaluator = Callable[[Tuple[int, ...]], Value]

# Binding strength, loosest first
PREC_OR = 1
PREC_AND = 2
PREC_NOT = 3
PREC_REL = 4
PREC_ADD = 5
PREC_MUL = 6
PREC_NEG = 7
PREC_ATOM = 8

BINARY_PRECEDENCE = {
    "|": PREC_OR,
    "&": PREC_AND,
    "=": PREC_REL, "!=": PREC_REL, "<": PREC_REL, "<=": PREC_REL, ">": PREC_REL, ">=": PREC_REL,
    "+": PREC_ADD, "-": PREC_ADD,
    "*": PREC_MUL,
}

RELATIONS = {"=", "!=", "<", "<=", ">", ">="}
ARITHMETIC = {"+", "-", "*"}
CONNECTIVES = {"&", "|"}

_PY_OPS = {
    "=": operator.eq, "!=": operator.ne,
    "<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge,
    "+": operator.add, "-": operator.sub, "*": operator.mul,
}


def check_int64(value: int) -> int:
    if value < INT64_MIN or value > INT64_MAX:
        raise ArithmeticOverflow(f"integer overflow: {value} does not fit in 64 bits")
    return value


class Expr:
    """Base class for expression nodes"""

    kind = "int"
    precedence = PREC_ATOM

    def compile(self) -> Evaluator:
        raise NotImplementedError

    def render(self) -> str:
        raise NotImplementedError

    def children(self) -> Tuple["Expr", ...]:
        return ()

    def walk(self) -> Iterator["Expr"]:
        yield self
        for child in self.children():
            yield from child.walk()

    def __str__(self) -> str:
        return self.render()


@dataclass(frozen=True)
class IntLit(Expr):
    value: int

    def compile(self) -> Evaluator:
        value = self.value
        return lambda values: value

    def render(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class BoolLit(Expr):
    value: bool
    kind = "bool"

    def compile(self) -> Evaluator:
        value = self.value
        return lambda values: value

    def render(self) -> str:
        return "true" if self.value else "false"


@dataclass(frozen=True)
class VarRef(Expr):
    name: str
    index: int

    def compile(self) -> Evaluator:
        index = self.index
        return lambda values: values[index]

    def render(self) -> str:
        return self.name


@dataclass(frozen=True)
class ConstRef(Expr):
    name: str
    value: int

    def compile(self) -> Evaluator:
        value = self.value
        return lambda values: value

    def render(self) -> str:
        return self.name


@dataclass(frozen=True)
class Not(Expr):
    operand: Expr
    kind = "bool"
    precedence = PREC_NOT

    def children(self):
        return (self.operand,)

    def compile(self) -> Evaluator:
        inner = self.operand.compile()
        return lambda values: not inner(values)

    def render(self) -> str:
        text = self.operand.render()
        if self.operand.precedence < PREC_NOT:
            text = f"({text})"
        return f"!{text}"


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr
    precedence = PREC_NEG

    def children(self):
        return (self.operand,)

    def compile(self) -> Evaluator:
        inner = self.operand.compile()
        return lambda values: check_int64(-inner(values))

    def render(self) -> str:
        text = self.operand.render()
        if self.operand.precedence < PREC_NEG:
            text = f"({text})"
        return f"-{text}"


@dataclass(frozen=True)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr

    @property
    def kind(self) -> str:
        return "int" if self.op in ARITHMETIC else "bool"

    @property
    def precedence(self) -> int:
        return BINARY_PRECEDENCE[self.op]

    def children(self):
        return (self.left, self.right)

    def compile(self) -> Evaluator:
        left = self.left.compile()
        right = self.right.compile()
        op = self.op
        if op == "&":
            return lambda values: bool(left(values)) and bool(right(values))
        if op == "|":
            return lambda values: bool(left(values)) or bool(right(values))
        fn = _PY_OPS[op]
        if op in ARITHMETIC:
            return lambda values: check_int64(fn(left(values), right(values)))
        return lambda values: fn(left(values), right(values))

    def render(self) -> str:
        prec = self.precedence
        left = self.left.render()
        right = self.right.render()
        if self.op in RELATIONS:
            # relations do not chain
            if self.left.precedence <= prec:
                left = f"({left})"
            if self.right.precedence <= prec:
                right = f"({right})"
        else:
            if self.left.precedence < prec:
                left = f"({left})"
            if self.right.precedence <= prec:
                right = f"({right})"
        return f"{left} {self.op} {right}"


def negate(operand: Expr) -> Expr:
    """Unary minus, folding integer literals so printing and re-parsing agree"""
    if isinstance(operand, IntLit):
        return IntLit(-operand.value)
    return Neg(operand)
