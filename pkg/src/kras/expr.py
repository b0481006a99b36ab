"""Scalar expressions in the delay variable ``t``.

The grammar is deliberately small: real literals, the variable ``t``,
``+ - * /``, integer powers ``^``, unary minus and the functions
``sin``, ``cos``, ``exp`` and ``ln``.  Precedence from tightest to
loosest is ``^``, unary minus, ``* /``, ``+ -``; all binary operators
associate to the left.

Expressions are immutable trees.  :func:`evaluate` accepts scalars or
numpy arrays and is deterministic.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .exceptions import EvalError, ParseError

__all__ = [
    "ScalarExpr",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Pow",
    "Func",
    "parse",
    "differentiate",
    "evaluate",
    "to_string",
    "as_expr",
    "FUNCTIONS",
]

FUNCTIONS = ("sin", "cos", "exp", "ln")


class ScalarExpr:
    """Base class of expression nodes."""

    __slots__ = ()

    def __str__(self) -> str:
        return to_string(self)

    def __call__(self, tau):
        return evaluate(self, tau)


@dataclass(frozen=True, slots=True)
class Num(ScalarExpr):
    value: float

    def __repr__(self):
        return f"Num({self.value!r})"


@dataclass(frozen=True, slots=True)
class Var(ScalarExpr):
    def __repr__(self):
        return "t"


@dataclass(frozen=True, slots=True)
class Neg(ScalarExpr):
    arg: ScalarExpr

    def __repr__(self):
        return f"Neg({self.arg!r})"


_OPNAMES = {"+": "Add", "-": "Sub", "*": "Mul", "/": "Div"}


@dataclass(frozen=True, slots=True)
class BinOp(ScalarExpr):
    op: str
    left: ScalarExpr
    right: ScalarExpr

    def __repr__(self):
        return f"{_OPNAMES[self.op]}({self.left!r}, {self.right!r})"


@dataclass(frozen=True, slots=True)
class Pow(ScalarExpr):
    base: ScalarExpr
    exponent: int

    def __repr__(self):
        return f"Pow({self.base!r}, {self.exponent})"


@dataclass(frozen=True, slots=True)
class Func(ScalarExpr):
    name: str
    arg: ScalarExpr

    def __repr__(self):
        return f"{self.name.capitalize()}({self.arg!r})"


# --------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


class _Tokens:
    def __init__(self, text: str):
        self.text = text
        self.items = []  # (kind, value, offset)
        pos = 0
        n = len(text)
        while pos < n:
            if text[pos:].strip() == "":
                break
            m = _TOKEN_RE.match(text, pos)
            if m is None or m.end() == pos:
                off = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
                raise ParseError(f"unexpected character {text[off]!r}", _byte(text, off),
                                 {"number", "t", "function", "(", "operator"})
            kind = m.lastgroup
            start = m.start(kind)
            self.items.append((kind, m.group(kind), start))
            pos = m.end()
        self.items.append(("end", "", len(text)))
        self.i = 0

    def peek(self):
        return self.items[self.i]

    def next(self):
        tok = self.items[self.i]
        self.i += 1
        return tok


def _byte(text: str, char_offset: int) -> int:
    return len(text[:char_offset].encode("utf-8"))


_OPERAND = {"number", "t", "function", "(", "-"}


def parse(text: str) -> ScalarExpr:
    """Parse an expression string.

    Parameters
    ----------
    text : str
        Source text, for example ``"1 + sin(cos(10*t))"``.

    Returns
    -------
    ScalarExpr

    Raises
    ------
    ParseError
        On malformed input; carries the byte offset and the set of
        acceptable tokens.
    """
    if not isinstance(text, str) or not text.strip():
        raise ParseError("empty expression", 0, _OPERAND)
    toks = _Tokens(text)

    def fail(msg, tok, expected):
        raise ParseError(msg, _byte(text, tok[2]), expected)

    def expr():
        node = term()
        while toks.peek()[0] == "op" and toks.peek()[1] in "+-":
            op = toks.next()[1]
            node = BinOp(op, node, term())
        return node

    def term():
        node = unary()
        while toks.peek()[0] == "op" and toks.peek()[1] in "*/":
            op = toks.next()[1]
            node = BinOp(op, node, unary())
        return node

    def unary():
        tok = toks.peek()
        if tok[0] == "op" and tok[1] == "-":
            toks.next()
            return Neg(unary())
        if tok[0] == "op" and tok[1] == "+":
            toks.next()
            return unary()
        return power()

    def power():
        node = atom()
        while toks.peek()[0] == "op" and toks.peek()[1] == "^":
            toks.next()
            node = Pow(node, exponent())
        return node

    def exponent():
        sign = 1
        tok = toks.peek()
        paren = False
        if tok[0] == "op" and tok[1] == "(":
            toks.next()
            paren = True
            tok = toks.peek()
        if tok[0] == "op" and tok[1] in "+-":
            toks.next()
            sign = -1 if tok[1] == "-" else 1
            tok = toks.peek()
        if tok[0] != "num" or not re.fullmatch(r"\d+", tok[1]):
            fail("exponent must be a constant integer", tok, {"integer"})
        toks.next()
        if paren:
            close = toks.next()
            if close[:2] != ("op", ")"):
                fail("missing ')'", close, {")"})
        return sign * int(tok[1])

    def atom():
        tok = toks.next()
        kind, val, _ = tok
        if kind == "num":
            return Num(float(val))
        if kind == "name":
            if val == "t":
                return Var()
            if val in FUNCTIONS:
                op = toks.next()
                if op[:2] != ("op", "("):
                    fail(f"expected '(' after {val}", op, {"("})
                arg = expr()
                close = toks.next()
                if close[:2] != ("op", ")"):
                    fail("missing ')'", close, {")", "operator"})
                return Func(val, arg)
            fail(f"unknown identifier {val!r}", tok, {"t", "sin", "cos", "exp", "ln"})
        if kind == "op" and val == "(":
            node = expr()
            close = toks.next()
            if close[:2] != ("op", ")"):
                fail("missing ')'", close, {")", "operator"})
            return node
        fail("unexpected token" if kind != "end" else "unexpected end of input", tok, _OPERAND)

    node = expr()
    tok = toks.peek()
    if tok[0] != "end":
        fail("unexpected trailing input", tok, {"operator", "end"})
    return node


def as_expr(value) -> ScalarExpr:
    """Coerce a string, number or expression into a :class:`ScalarExpr`."""
    if isinstance(value, ScalarExpr):
        return value
    if isinstance(value, str):
        return parse(value)
    if isinstance(value, (int, float, np.integer, np.floating)):
        return Num(float(value))
    raise TypeError(f"cannot interpret {value!r} as an expression")


# --------------------------------------------------------------------------
# constant folding constructors

def _is(e, v):
    return isinstance(e, Num) and e.value == v


def _add(a, b):
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    return BinOp("+", a, b)


def _sub(a, b):
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return _neg(b)
    return BinOp("-", a, b)


def _mul(a, b):
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    if _is(a, 0.0) or _is(b, 0.0):
        return Num(0.0)
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    if isinstance(b, Num) and not isinstance(a, Num):
        a, b = b, a
    if isinstance(a, Num) and isinstance(b, BinOp) and b.op == "*" and isinstance(b.left, Num):
        return _mul(Num(a.value * b.left.value), b.right)
    return BinOp("*", a, b)


def _div(a, b):
    if isinstance(a, Num) and isinstance(b, Num) and b.value != 0.0:
        return Num(a.value / b.value)
    if _is(a, 0.0):
        return Num(0.0)
    if _is(b, 1.0):
        return a
    return BinOp("/", a, b)


def _neg(a):
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _pow(a, k):
    if k == 0:
        return Num(1.0)
    if k == 1:
        return a
    if isinstance(a, Num):
        try:
            return Num(float(a.value ** k))
        except ZeroDivisionError:
            return Pow(a, k)
    return Pow(a, k)


def differentiate(e: ScalarExpr) -> ScalarExpr:
    """Symbolic derivative with respect to ``t``.

    Only literal arithmetic is folded; no other simplification is done.
    """
    if isinstance(e, Num):
        return Num(0.0)
    if isinstance(e, Var):
        return Num(1.0)
    if isinstance(e, Neg):
        return _neg(differentiate(e.arg))
    if isinstance(e, BinOp):
        a, b = e.left, e.right
        da, db = differentiate(a), differentiate(b)
        if e.op == "+":
            return _add(da, db)
        if e.op == "-":
            return _sub(da, db)
        if e.op == "*":
            return _add(_mul(da, b), _mul(a, db))
        # quotient rule, written as da/b - a*db/b^2 to keep zero terms foldable
        return _sub(_div(da, b), _div(_mul(a, db), _pow(b, 2)))
    if isinstance(e, Pow):
        return _mul(_mul(Num(float(e.exponent)), _pow(e.base, e.exponent - 1)), differentiate(e.base))
    if isinstance(e, Func):
        du = differentiate(e.arg)
        u = e.arg
        if e.name == "sin":
            outer = Func("cos", u)
        elif e.name == "cos":
            outer = _neg(Func("sin", u))
        elif e.name == "exp":
            outer = e
        else:  # ln
            return _div(du, u)
        return _mul(du, outer)
    raise TypeError(f"unknown node {e!r}")


# --------------------------------------------------------------------------
# evaluation

Scalar = Union[float, np.ndarray]


def _eval(e, tau):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return tau
    if isinstance(e, Neg):
        return -_eval(e.arg, tau)
    if isinstance(e, BinOp):
        a = _eval(e.left, tau)
        b = _eval(e.right, tau)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if np.any(np.asarray(b) == 0.0):
            raise EvalError(f"division by zero in {to_string(e)}")
        return a / b
    if isinstance(e, Pow):
        a = _eval(e.base, tau)
        if e.exponent < 0:
            if np.any(np.asarray(a) == 0.0):
                raise EvalError(f"division by zero in {to_string(e)}")
            return 1.0 / (np.asarray(a, dtype=float) ** (-e.exponent)) if np.ndim(a) else 1.0 / (a ** (-e.exponent))
        return np.asarray(a, dtype=float) ** e.exponent if np.ndim(a) else float(a) ** e.exponent
    if isinstance(e, Func):
        a = _eval(e.arg, tau)
        if e.name == "sin":
            return np.sin(a)
        if e.name == "cos":
            return np.cos(a)
        if e.name == "exp":
            return np.exp(a)
        if np.any(np.asarray(a) <= 0.0):
            raise EvalError(f"logarithm of a non-positive value in {to_string(e)}")
        return np.log(a)
    raise TypeError(f"unknown node {e!r}")


def evaluate(e: ScalarExpr, tau) -> Scalar:
    """Evaluate ``e`` at ``tau``.

    Parameters
    ----------
    e : ScalarExpr or str
    tau : float or ndarray
        Evaluation point(s).

    Returns
    -------
    float or ndarray
        Same shape as ``tau``.

    Raises
    ------
    EvalError
        Division by zero or ``ln`` of a non-positive value.
    """
    e = as_expr(e)
    if np.ndim(tau) == 0:
        return float(_eval(e, float(tau)))
    tau = np.asarray(tau, dtype=float)
    with np.errstate(over="ignore"):
        out = _eval(e, tau)
    return np.broadcast_to(np.asarray(out, dtype=float), tau.shape).copy()


# --------------------------------------------------------------------------
# printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _fmt_num(v: float) -> str:
    s = repr(float(v))
    if s in ("inf", "-inf", "nan"):
        raise ValueError("non-finite literal cannot be printed")
    return s


def _str(e, ctx: int) -> str:
    # ctx: binding strength required by the parent (0 top, 1 sum, 2 product, 3 unary, 4 power base)
    if isinstance(e, Num):
        s = _fmt_num(abs(e.value))
        if e.value < 0 or (e.value == 0 and math.copysign(1, e.value) < 0):
            s = "-" + s
            return f"({s})" if ctx >= 2 else s
        return s
    if isinstance(e, Var):
        return "t"
    if isinstance(e, Neg):
        s = "-" + _str(e.arg, 3)
        return f"({s})" if ctx >= 2 else s
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        s = f"{_str(e.left, p)} {e.op} {_str(e.right, p + 1)}"
        return f"({s})" if ctx > p else s
    if isinstance(e, Pow):
        ex = str(e.exponent) if e.exponent >= 0 else f"({e.exponent})"
        return f"{_str(e.base, 4)}^{ex}"
    if isinstance(e, Func):
        return f"{e.name}({_str(e.arg, 0)})"
    raise TypeError(f"unknown node {e!r}")


def to_string(e: ScalarExpr) -> str:
    """Render ``e`` as text that :func:`parse` maps back to an equal tree."""
    return _str(as_expr(e), 0)
