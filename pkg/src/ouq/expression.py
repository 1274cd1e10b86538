"""Arithmetic expressions over input variables x1..xm.

Precedence from loosest to tightest: ``+ -``, ``* /``, unary minus, ``^``
(right-associative).  Evaluation is vectorized over rows of an (N, m) array.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np


class ExpressionError(ValueError):
    pass


class ParseError(ExpressionError):
    """Syntax or name error with the byte offset where it was detected."""

    def __init__(self, message: str, offset: int, expected: Sequence[str] = ()):
        self.offset = offset
        self.expected = tuple(sorted(set(expected)))
        detail = f" (expected one of: {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message} at offset {offset}{detail}")


class DomainError(ExpressionError):
    def __init__(self, message: str, point=None):
        self.point = None if point is None else tuple(float(v) for v in point)
        super().__init__(message if point is None else f"{message} at point {self.point}")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # zero-based


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple["Node", ...]


Node = Union[Num, Var, Neg, BinOp, Call]

FUNCTIONS: dict[str, int] = {
    "cos": 1,
    "sin": 1,
    "tanh": 1,
    "exp": 1,
    "log": 1,
    "abs": 1,
    "pos": 1,
    "max": 2,
    "min": 2,
}
CONSTANTS = {"pi": math.pi}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)
_OPERAND_START = ("number", "identifier", "(", "-")


@dataclass(frozen=True)
class _Tok:
    kind: str  # num, name, op, end
    text: str
    offset: int


def _tokenize(text: str) -> list[_Tok]:
    data = text.encode("utf-8")
    if len(data) != len(text):
        # offsets are byte offsets; reject non-ASCII up front so they stay unambiguous
        bad = next(i for i, ch in enumerate(text) if ord(ch) > 127)
        raise ParseError(f"unexpected character {text[bad]!r}", len(text[:bad].encode("utf-8")))
    toks = []
    pos = 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            toks.append(_Tok("end", "", pos))
            return toks
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        toks.append(_Tok(kind, m.group(kind), m.start(kind)))
        pos = m.end()


class _Parser:
    def __init__(self, text: str, names: Mapping[str, int], dim: int | None):
        self.toks = _tokenize(text)
        self.i = 0
        self.names = names
        self.dim = dim

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def advance(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text: str) -> None:
        if self.tok.text != text or self.tok.kind == "end":
            raise ParseError(f"unexpected {self._describe(self.tok)}", self.tok.offset, [text])
        self.advance()

    @staticmethod
    def _describe(t: _Tok) -> str:
        return "end of input" if t.kind == "end" else f"token {t.text!r}"

    def parse(self) -> Node:
        node = self.additive()
        if self.tok.kind != "end":
            raise ParseError(
                f"unexpected {self._describe(self.tok)}",
                self.tok.offset,
                ["+", "-", "*", "/", "^", "end of input"],
            )
        return node

    def additive(self) -> Node:
        node = self.multiplicative()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            node = BinOp(op, node, self.multiplicative())
        return node

    def multiplicative(self) -> Node:
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.advance().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self.tok.kind == "op" and self.tok.text == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Node:
        base = self.primary()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def primary(self) -> Node:
        t = self.tok
        if t.kind == "num":
            self.advance()
            value = float(t.text)
            if not math.isfinite(value):
                raise ParseError(f"literal {t.text} is out of range", t.offset)
            return Num(value)
        if t.kind == "op" and t.text == "(":
            self.advance()
            node = self.additive()
            self.expect(")")
            return node
        if t.kind == "name":
            self.advance()
            if self.tok.kind == "op" and self.tok.text == "(":
                return self.call(t)
            return self.identifier(t)
        raise ParseError(f"unexpected {self._describe(t)}", t.offset, _OPERAND_START)

    def identifier(self, t: _Tok) -> Node:
        if t.text in self.names:
            return Var(self.names[t.text])
        m = re.fullmatch(r"x([1-9]\d*)", t.text)
        if m:
            idx = int(m.group(1))
            if self.dim is not None and idx > self.dim:
                raise ParseError(f"variable {t.text} exceeds dimension {self.dim}", t.offset)
            return Var(idx - 1)
        if t.text in CONSTANTS:
            return Num(CONSTANTS[t.text])
        if t.text in FUNCTIONS:
            raise ParseError(f"function {t.text!r} needs arguments", self.tok.offset, ["("])
        raise ParseError(f"unknown identifier {t.text!r}", t.offset)

    def call(self, t: _Tok) -> Node:
        if t.text not in FUNCTIONS:
            raise ParseError(f"unknown function {t.text!r}", t.offset)
        self.expect("(")
        args = [self.additive()]
        while self.tok.kind == "op" and self.tok.text == ",":
            self.advance()
            args.append(self.additive())
        self.expect(")")
        arity = FUNCTIONS[t.text]
        if len(args) != arity:
            raise ParseError(f"{t.text} takes {arity} argument(s), got {len(args)}", t.offset)
        return Call(t.text, tuple(args))


def parse_expression(text: str, dim: int | None = None, names: Sequence[str] | Mapping[str, int] = ()) -> Node:
    """Parse ``text`` into an expression tree.

    ``names`` optionally aliases axis names to variables (a sequence maps the
    i-th name to the i-th axis).  ``x1..xm`` are always accepted.
    """
    if not text or not text.strip():
        raise ParseError("empty expression", 0, _OPERAND_START)
    if not isinstance(names, Mapping):
        names = {n: i for i, n in enumerate(names)}
    return _Parser(text, dict(names), dim).parse()


def to_text(node: Node) -> str:
    """Fully parenthesized text that parses back to the same tree."""
    if isinstance(node, Num):
        if node.value < 0:
            return f"(-{repr(-node.value)})"
        return repr(node.value)
    if isinstance(node, Var):
        return f"x{node.index + 1}"
    if isinstance(node, Neg):
        return f"(-{to_text(node.operand)})"
    if isinstance(node, BinOp):
        return f"({to_text(node.left)} {node.op} {to_text(node.right)})"
    if isinstance(node, Call):
        return f"{node.name}({', '.join(to_text(a) for a in node.args)})"
    raise TypeError(f"not an expression node: {node!r}")


def variables(node: Node) -> frozenset[int]:
    if isinstance(node, Var):
        return frozenset({node.index})
    if isinstance(node, Num):
        return frozenset()
    if isinstance(node, Neg):
        return variables(node.operand)
    if isinstance(node, BinOp):
        return variables(node.left) | variables(node.right)
    return frozenset().union(*(variables(a) for a in node.args))


def _eval(node: Node, x: np.ndarray) -> np.ndarray:
    if isinstance(node, Num):
        return np.full(x.shape[0], node.value)
    if isinstance(node, Var):
        if node.index >= x.shape[1]:
            raise ExpressionError(f"x{node.index + 1} is not defined for {x.shape[1]} inputs")
        return x[:, node.index]
    if isinstance(node, Neg):
        return -_eval(node.operand, x)
    if isinstance(node, BinOp):
        a = _eval(node.left, x)
        b = _eval(node.right, x)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            return a / b
        return np.power(a, b)
    args = [_eval(a, x) for a in node.args]
    name = node.name
    if name == "cos":
        return np.cos(args[0])
    if name == "sin":
        return np.sin(args[0])
    if name == "tanh":
        return np.tanh(args[0])
    if name == "exp":
        return np.exp(args[0])
    if name == "log":
        return np.log(args[0])
    if name == "abs":
        return np.abs(args[0])
    if name == "pos":
        return np.maximum(args[0], 0.0)
    if name == "max":
        return np.maximum(args[0], args[1])
    return np.minimum(args[0], args[1])


def evaluate(node: Node, x: np.ndarray) -> np.ndarray:
    """Evaluate on rows of ``x`` (shape (N, m), or (m,) for one point).

    Raises DomainError naming the first point where the value is not finite.
    """
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    with np.errstate(all="ignore"):
        out = np.asarray(_eval(node, arr), dtype=float)
    bad = np.flatnonzero(~np.isfinite(out))
    if bad.size:
        raise DomainError(f"expression {to_text(node)} is undefined", arr[bad[0]])
    return out[0] if single else out
