"""Small arithmetic expression language for coefficient fields.

Grammar (lowest to highest binding)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := primary ('^' unary)?
    primary := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'

``^`` is right-associative and binds tighter than unary minus, so ``-x^2``
is ``-(x^2)`` and ``2^3^2`` is ``2^(3^2)``. Variables are ``x``, ``y`` and
``t``; ``pi`` is a named constant. Functions are ``sin``, ``cos``, ``sqrt``,
``exp``, ``abs`` (one argument) and ``min``, ``max`` (two arguments).

Evaluation works on floats or on numpy arrays of matching shape, which is
how the assembler samples fields at all quadrature points at once.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "Expr",
    "ExprError",
    "ParseError",
    "EvalError",
    "parse",
    "evaluate",
    "to_string",
    "diff",
    "free_variables",
    "VARIABLES",
    "FUNCTIONS",
]

VARIABLES = ("x", "y", "t")
CONSTANTS = {"pi": math.pi}
FUNCTIONS = {"sin": 1, "cos": 1, "sqrt": 1, "exp": 1, "abs": 1, "min": 2, "max": 2}


class ExprError(ValueError):
    pass


class ParseError(ExprError):
    """Malformed input; ``offset`` is the byte offset of the offending token."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.message = message
        self.offset = offset


class EvalError(ExprError):
    pass


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


Expr = Union[Num, Var, Neg, BinOp, Call]


# --------------------------------------------------------------------------
# tokenizer / parser

_TOKEN = re.compile(
    rb"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


def _tokenize(data: bytes):
    pos = 0
    tokens = []
    while pos < len(data):
        m = _TOKEN.match(data, pos)
        if m is None:
            ch = data[pos:].decode("utf-8", errors="replace")[:1]
            raise ParseError(f"unexpected character {ch!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(kind).decode(), pos))
        pos = m.end()
    tokens.append(("end", "", len(data)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text.encode("utf-8"))
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.tok
        if text != value or kind == "end":
            found = "end of input" if kind == "end" else repr(text)
            if value == ")":
                raise ParseError(f"unbalanced parentheses: expected ')', found {found}", pos)
            raise ParseError(f"expected {value!r}, found {found}", pos)
        self.advance()

    def parse(self) -> Expr:
        e = self.expr()
        kind, text, pos = self.tok
        if kind != "end":
            if text == ")":
                raise ParseError("unbalanced parentheses: unexpected ')'", pos)
            raise ParseError(f"unexpected token {text!r}", pos)
        return e

    def expr(self) -> Expr:
        left = self.term()
        while self.tok[1] in ("+", "-") and self.tok[0] == "op":
            op = self.advance()[1]
            left = BinOp(op, left, self.term())
        return left

    def term(self) -> Expr:
        left = self.unary()
        while self.tok[1] in ("*", "/") and self.tok[0] == "op":
            op = self.advance()[1]
            left = BinOp(op, left, self.unary())
        return left

    def unary(self) -> Expr:
        if self.tok[0] == "op" and self.tok[1] == "-":
            self.advance()
            return Neg(self.unary())
        base = self.primary()
        if self.tok[0] == "op" and self.tok[1] == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def primary(self) -> Expr:
        kind, text, pos = self.advance()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if text in FUNCTIONS:
                if self.tok[1] != "(":
                    raise ParseError(f"expected '(' after function {text!r}", self.tok[2])
                self.advance()
                args = [self.expr()]
                while self.tok[1] == ",":
                    self.advance()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != FUNCTIONS[text]:
                    raise ParseError(
                        f"arity mismatch: {text} takes {FUNCTIONS[text]} argument(s), got {len(args)}",
                        pos,
                    )
                return Call(text, tuple(args))
            if text in VARIABLES:
                return Var(text)
            if text in CONSTANTS:
                return Num(CONSTANTS[text])
            raise ParseError(f"unknown identifier {text!r}", pos)
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "end":
            raise ParseError("unexpected end of input", pos)
        if text == ")":
            raise ParseError("unbalanced parentheses: unexpected ')'", pos)
        raise ParseError(f"unexpected token {text!r}", pos)


def parse(text: str) -> Expr:
    """Parse ``text`` into an expression tree."""
    return _Parser(text).parse()


# --------------------------------------------------------------------------
# evaluation


def _check(cond, message):
    if np.any(cond):
        raise EvalError(message)


def _eval(e: Expr, env):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return env[e.name]
    if isinstance(e, Neg):
        return -_eval(e.operand, env)
    if isinstance(e, BinOp):
        a = _eval(e.left, env)
        b = _eval(e.right, env)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            _check(np.asarray(b) == 0, "division by zero")
            return a / b
        with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
            r = np.power(np.asarray(a, dtype=float), b)
        _check(~np.isfinite(r) & np.isfinite(a) & np.isfinite(b), "power domain error")
        return r
    args = [_eval(a, env) for a in e.args]
    f = e.func
    if f == "sqrt":
        _check(np.asarray(args[0]) < 0, "sqrt of negative value")
        return np.sqrt(args[0])
    if f == "sin":
        return np.sin(args[0])
    if f == "cos":
        return np.cos(args[0])
    if f == "exp":
        return np.exp(args[0])
    if f == "abs":
        return np.abs(args[0])
    if f == "min":
        return np.minimum(args[0], args[1])
    return np.maximum(args[0], args[1])


def evaluate(e: Expr, x=0.0, y=0.0, t=0.0):
    """Evaluate ``e`` at ``(x, y, t)``.

    Scalars give a float; arrays broadcast and give an array of the
    broadcast shape. Division by zero and domain violations raise
    :class:`EvalError`.
    """
    scalar = np.ndim(x) == 0 and np.ndim(y) == 0 and np.ndim(t) == 0
    x, y, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float), np.asarray(t, float))
    out = np.broadcast_to(np.asarray(_eval(e, {"x": x, "y": y, "t": t}), dtype=float), x.shape)
    return float(out) if scalar else np.array(out)


def free_variables(e: Expr) -> set:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Num):
        return set()
    if isinstance(e, Neg):
        return free_variables(e.operand)
    if isinstance(e, BinOp):
        return free_variables(e.left) | free_variables(e.right)
    out = set()
    for a in e.args:
        out |= free_variables(a)
    return out


# --------------------------------------------------------------------------
# printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return 3
    return 5


def _fmt_num(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_string(e: Expr) -> str:
    """Canonical text form; ``parse(to_string(e)) == e`` for parsed trees."""

    def wrap(child, minimum):
        s = to_string(child)
        return f"({s})" if _prec(child) < minimum else s

    if isinstance(e, Num):
        if e.value < 0 or not math.isfinite(e.value):
            raise ExprError(f"literal {e.value!r} has no text form")
        return _fmt_num(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return "-" + wrap(e.operand, 3)
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        if e.op == "^":
            return f"{wrap(e.left, 5)}^{wrap(e.right, 3)}"
        return f"{wrap(e.left, p)} {e.op} {wrap(e.right, p + 1)}"
    return f"{e.func}({', '.join(to_string(a) for a in e.args)})"


# --------------------------------------------------------------------------
# symbolic differentiation (used to build manufactured forcing terms)


def _is_num(e, v=None):
    return isinstance(e, Num) and (v is None or e.value == v)


def add(a, b):
    if _is_num(a, 0):
        return b
    if _is_num(b, 0):
        return a
    if _is_num(a) and _is_num(b):
        return Num(a.value + b.value)
    if isinstance(b, Neg):
        return sub(a, b.operand)
    return BinOp("+", a, b)


def sub(a, b):
    if _is_num(b, 0):
        return a
    if _is_num(a, 0):
        return neg(b)
    if _is_num(a) and _is_num(b) and a.value >= b.value:
        return Num(a.value - b.value)
    return BinOp("-", a, b)


def mul(a, b):
    if _is_num(a, 0) or _is_num(b, 0):
        return Num(0.0)
    if _is_num(a, 1):
        return b
    if _is_num(b, 1):
        return a
    if _is_num(a) and _is_num(b):
        return Num(a.value * b.value)
    if isinstance(a, Neg):
        return neg(mul(a.operand, b))
    if isinstance(b, Neg):
        return neg(mul(a, b.operand))
    return BinOp("*", a, b)


def div(a, b):
    if _is_num(a, 0):
        return Num(0.0)
    if _is_num(b, 1):
        return a
    return BinOp("/", a, b)


def neg(a):
    if _is_num(a, 0):
        return a
    if isinstance(a, Neg):
        return a.operand
    return Neg(a)


def num(v: float) -> Expr:
    return Num(float(v)) if v >= 0 else Neg(Num(float(-v)))


def call(f, *args):
    return Call(f, tuple(args))


def diff(e: Expr, var: str) -> Expr:
    """Derivative of ``e`` with respect to ``var``.

    ``min``/``max`` and powers with a variable exponent are rejected; the
    derivative of ``abs(u)`` is written ``u/abs(u) * u'`` and is undefined
    where ``u = 0``.
    """
    if isinstance(e, Num):
        return Num(0.0)
    if isinstance(e, Var):
        return Num(1.0 if e.name == var else 0.0)
    if isinstance(e, Neg):
        return neg(diff(e.operand, var))
    if isinstance(e, BinOp):
        a, b = e.left, e.right
        da, db = diff(a, var), diff(b, var)
        if e.op == "+":
            return add(da, db)
        if e.op == "-":
            return sub(da, db)
        if e.op == "*":
            return add(mul(da, b), mul(a, db))
        if e.op == "/":
            return div(sub(mul(da, b), mul(a, db)), BinOp("^", b, Num(2.0)))
        if var in free_variables(b):
            raise ExprError("cannot differentiate a power with a variable exponent")
        expo = num(b.value - 1.0) if _is_num(b) else sub(b, Num(1.0))
        return mul(mul(b, BinOp("^", a, expo)), da)
    (arg, *rest) = e.args
    if rest:
        raise ExprError(f"cannot differentiate {e.func}")
    d = diff(arg, var)
    if _is_num(d, 0):
        return Num(0.0)
    if e.func == "sin":
        return mul(call("cos", arg), d)
    if e.func == "cos":
        return neg(mul(call("sin", arg), d))
    if e.func == "exp":
        return mul(e, d)
    if e.func == "sqrt":
        return div(d, mul(Num(2.0), e))
    return mul(div(arg, e), d)
