"""A small recursive-descent parser for coordinate expressions such as ``x[0]*x[0]*(1-x[0])``.

Grammar (``^`` binds tightest and is right associative; unary minus sits
between ``^`` and ``* /``)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := primary ('^' unary)?
    primary := NUMBER | 'pi' | 'x' '[' INT ']' | FUNC '(' expr ')' | '(' expr ')'
    FUNC    := sin | cos | exp | sqrt

Exponents may not reference coordinates.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt}
BINARY = {"+": np.add, "-": np.subtract, "*": np.multiply, "/": np.divide, "^": np.power}


class ExprError(ValueError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class ExprDimensionError(ExprError):
    def __init__(self, index: int, dim: int):
        super().__init__(f"coordinate x[{index}] is out of range for dimension {dim}")
        self.index = index
        self.dim = dim


class ExprEvalError(ExprError):
    """Raised when a subexpression evaluates to inf or nan."""

    def __init__(self, node: "Node", point=None):
        where = "" if point is None else f" at {np.asarray(point).tolist()}"
        super().__init__(f"non-finite value in subexpression {to_string(node)!r}{where}")
        self.node = node
        self.point = point


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Pi:
    pass


@dataclass(frozen=True)
class Coord:
    index: int


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
    func: str
    arg: "Node"


Node = Union[Num, Pi, Coord, Neg, BinOp, Call]


@dataclass(frozen=True)
class Expression:
    """A parsed expression over ``x[0] .. x[dim-1]``."""

    root: Node
    dim: int

    def __call__(self, points) -> np.ndarray:
        return evaluate(self, points)

    def __str__(self) -> str:
        return to_string(self.root)


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()\[\]]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.lastgroup is None:
            bad = len(text) - len(text[pos:].lstrip()) if m is None else m.end()
            raise ExprSyntaxError(f"unexpected character {text[bad]!r}", _byte_offset(text, bad))
        start = m.start(m.lastgroup)
        tokens.append((m.lastgroup, m.group(m.lastgroup), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


class _Parser:
    def __init__(self, text: str, dim: int):
        self.text = text
        self.dim = dim
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        return ExprSyntaxError(message, _byte_offset(self.text, tok[2]))

    def expect(self, value):
        tok = self.take()
        if tok[1] != value or tok[0] == "num":
            shown = "end of input" if tok[0] == "end" else repr(tok[1])
            raise self.error(f"expected {value!r} but found {shown}", tok)
        return tok

    def parse(self) -> Node:
        node = self.expr()
        if self.peek()[0] != "end":
            raise self.error(f"unexpected {self.peek()[1]!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[1] == "-" and self.peek()[0] == "op":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.primary()
        if self.peek()[1] == "^" and self.peek()[0] == "op":
            tok = self.take()
            exponent = self.unary()
            if _has_coord(exponent):
                raise self.error("exponent must not depend on coordinates", tok)
            return BinOp("^", base, exponent)
        return base

    def primary(self):
        kind, value, _ = tok = self.take()
        if kind == "num":
            return Num(float(value))
        if kind == "name":
            if value == "pi":
                return Pi()
            if value == "x":
                self.expect("[")
                idx_tok = self.take()
                if idx_tok[0] != "num" or not idx_tok[1].isdigit():
                    raise self.error("coordinate index must be a non-negative integer", idx_tok)
                self.expect("]")
                index = int(idx_tok[1])
                if index >= self.dim:
                    raise ExprDimensionError(index, self.dim)
                return Coord(index)
            if value in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(value, arg)
            raise self.error(f"unknown name {value!r}", tok)
        if value == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "end":
            raise self.error("unexpected end of input", tok)
        raise self.error(f"unexpected {value!r}", tok)


def _has_coord(node: Node) -> bool:
    if isinstance(node, Coord):
        return True
    if isinstance(node, Neg):
        return _has_coord(node.operand)
    if isinstance(node, BinOp):
        return _has_coord(node.left) or _has_coord(node.right)
    if isinstance(node, Call):
        return _has_coord(node.arg)
    return False


def parse(text: str, dim: int) -> Expression:
    """Parse ``text`` into an expression over ``dim`` coordinates.

    Raises:
        ExprSyntaxError: malformed input; ``offset`` is the byte position.
        ExprDimensionError: a coordinate index ``>= dim``.
    """
    if dim not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {dim}")
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0)
    return Expression(_Parser(text, dim).parse(), dim)


def _eval(node: Node, x: np.ndarray):
    if isinstance(node, Num):
        out = node.value
    elif isinstance(node, Pi):
        out = math.pi
    elif isinstance(node, Coord):
        out = x[..., node.index]
    elif isinstance(node, Neg):
        out = np.negative(_eval(node.operand, x))
    elif isinstance(node, BinOp):
        out = BINARY[node.op](_eval(node.left, x), _eval(node.right, x))
    elif isinstance(node, Call):
        out = FUNCTIONS[node.func](_eval(node.arg, x))
    else:
        raise TypeError(f"not an expression node: {node!r}")
    if not np.all(np.isfinite(out)):
        bad = None
        if np.ndim(out):
            flat = np.reshape(x, (-1, x.shape[-1]))
            bad = flat[np.flatnonzero(~np.isfinite(np.ravel(out)))[0]]
        elif x.ndim == 1:
            bad = x
        raise ExprEvalError(node, bad)
    return out


def evaluate(expr: Expression, points) -> np.ndarray:
    """Evaluate at one point ``(dim,)`` or many ``(n, dim)``; result has the leading shape."""
    x = np.asarray(points, dtype=float)
    if x.ndim == 0 or x.shape[-1] != expr.dim:
        raise ValueError(f"points must have {expr.dim} coordinates, got shape {x.shape}")
    with np.errstate(all="ignore"):
        out = _eval(expr.root, x)
    return np.broadcast_to(np.asarray(out, dtype=float), x.shape[:-1]).copy()


def eval_expr(expr: Expression, point) -> float:
    """Evaluate at a single point."""
    return float(evaluate(expr, np.asarray(point, dtype=float).reshape(-1)))


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}
_NEG_PREC = 3
_POW_PREC = 4
_ATOM_PREC = 5


def _prec(node: Node) -> int:
    if isinstance(node, BinOp):
        return _POW_PREC if node.op == "^" else _PREC[node.op]
    if isinstance(node, Neg):
        return _NEG_PREC
    return _ATOM_PREC


def to_string(node: Node) -> str:
    """Render with the fewest parentheses that parse back to the same tree."""
    if isinstance(node, Expression):
        node = node.root
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Pi):
        return "pi"
    if isinstance(node, Coord):
        return f"x[{node.index}]"
    if isinstance(node, Call):
        return f"{node.func}({to_string(node.arg)})"
    if isinstance(node, Neg):
        inner = to_string(node.operand)
        return "-" + (f"({inner})" if _prec(node.operand) < _NEG_PREC else inner)
    p = _prec(node)
    left, right = to_string(node.left), to_string(node.right)
    if node.op == "^":
        if _prec(node.left) <= _POW_PREC:
            left = f"({left})"
        if _prec(node.right) < _NEG_PREC:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(node.left) < p:
        left = f"({left})"
    if _prec(node.right) <= p:
        right = f"({right})"
    return f"{left}{node.op}{right}"
