"""Tiny arithmetic-expression language for user-defined fields and certificates.

One expression per vector-field component.  Variables are ``x1 .. xn`` plus
``t``; scalar maps (feedback laws, sector shapes) use the single variable
``y``.  Operators ``+ - * / ^`` with the usual precedence, ``^`` binding
tightest and associating right.  Functions: sin cos exp ln abs sqrt.

This deliberately avoids ``eval`` so config files stay inert data.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .exceptions import ExpressionError

_FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "ln": np.log,
    "abs": np.abs,
    "sqrt": np.sqrt,
}

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(source: str):
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None or m.end() == pos:
            stripped = source[pos:].lstrip()
            if not stripped:
                break
            bad = len(source) - len(stripped)
            raise ExpressionError(f"unexpected character {source[bad]!r}", bad)
        if m.lastgroup is not None:
            tokens.append((m.lastgroup, m.group(m.lastgroup), m.start(m.lastgroup)))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str, variables: Sequence[str]):
        self.source = source
        self.tokens = _tokenize(source)
        self.pos = 0
        self.var_index = {name: i for i, name in enumerate(variables)}
        self.uses_time = False

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, value):
        kind, text, at = self.advance()
        if text != value:
            raise ExpressionError(f"expected {value!r}, found {text or 'end of input'!r}", at)

    def parse(self):
        node = self.expression()
        kind, text, at = self.peek()
        if kind != "end":
            raise ExpressionError(f"unexpected trailing input {text!r}", at)
        return node

    def expression(self):
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.advance()[1]
            rhs = self.term()
            node = _binary(op, node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.advance()[1]
            rhs = self.unary()
            node = _binary(op, node, rhs)
        return node

    def unary(self):
        kind, text, _ = self.peek()
        if text == "-":
            self.advance()
            inner = self.unary()
            return lambda t, x: -inner(t, x)
        if text == "+":
            self.advance()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^":
            self.advance()
            expo = self.unary()
            return lambda t, x: base(t, x) ** expo(t, x)
        return base

    def atom(self):
        kind, text, at = self.advance()
        if kind == "num":
            value = float(text)
            return lambda t, x: value
        if kind == "name":
            if self.peek()[1] == "(":
                fn = _FUNCTIONS.get(text)
                if fn is None:
                    raise ExpressionError(f"unknown function {text!r}", at)
                self.expect("(")
                arg = self.expression()
                self.expect(")")
                return lambda t, x: fn(arg(t, x))
            if text == "t":
                self.uses_time = True
                return lambda t, x: t
            idx = self.var_index.get(text)
            if idx is None:
                known = ", ".join(sorted(self.var_index) + ["t"])
                raise ExpressionError(f"unknown variable {text!r} (known: {known})", at)
            return lambda t, x, i=idx: x[i]
        if text == "(":
            node = self.expression()
            self.expect(")")
            return node
        raise ExpressionError(f"unexpected token {text or 'end of input'!r}", at)


def _binary(op, lhs, rhs):
    if op == "+":
        return lambda t, x: lhs(t, x) + rhs(t, x)
    if op == "-":
        return lambda t, x: lhs(t, x) - rhs(t, x)
    if op == "*":
        return lambda t, x: lhs(t, x) * rhs(t, x)
    return lambda t, x: lhs(t, x) / rhs(t, x)


@dataclass(frozen=True)
class ScalarExpression:
    """A compiled scalar-valued expression over state variables and time."""

    source: str
    variables: tuple[str, ...]
    uses_time: bool
    _fn: Callable

    def __call__(self, t, x):
        return self._fn(t, x)

    def evaluate(self, x, t: float = 0.0):
        return self._fn(t, x)


def parse_expression(source: str, variables: Sequence[str]) -> ScalarExpression:
    """Compile one expression; raises ExpressionError with a column position."""
    parser = _Parser(source, variables)
    fn = parser.parse()
    return ScalarExpression(
        source=source,
        variables=tuple(variables),
        uses_time=parser.uses_time,
        _fn=fn,
    )


def state_variables(dim: int) -> tuple[str, ...]:
    return tuple(f"x{i + 1}" for i in range(dim))


def parse_state_function(source: str, dim: int) -> ScalarExpression:
    """Scalar map of the state vector, e.g. a certificate or output expression."""
    return parse_expression(source, state_variables(dim))


def parse_scalar_map(source: str) -> Callable[[float], float]:
    """Map of a single real variable ``y`` (feedback laws, sector shapes)."""
    expr = parse_expression(source, ("y",))
    if expr.uses_time:
        raise ExpressionError("scalar maps of y may not reference t")
    return lambda y: expr.evaluate(np.array([y]))
