"""Noise-expression mini-language.

Grammar (whitespace-insensitive)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom ("^" unary)?
    atom   := number | name | func "(" expr ("," expr)* ")" | "(" expr ")"

Names are state variables ``x1..xn`` or scenario constants.  Expressions are
compiled to nested closures once and evaluated many times.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np


class NoiseSyntaxError(ValueError):
    def __init__(self, msg: str, text: str, pos: int):
        super().__init__(f"{msg} at column {pos + 1} in {text!r}")
        self.pos = pos


class NoiseEvalError(ValueError):
    pass


def _sigm(t: float) -> float:
    if t >= 0:
        return 1.0 / (1.0 + math.exp(-t))
    z = math.exp(t)
    return z / (1.0 + z)


FUNCTIONS: dict[str, tuple[int, Callable[..., float]]] = {
    "abs": (1, abs),
    "min": (2, min),
    "max": (2, max),
    "atan2": (2, math.atan2),
    "sigm": (1, _sigm),
}

_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)|([A-Za-z_]\w*)|(\S))")

Node = Callable[[np.ndarray], float]


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            break
        if m.group(1) is not None:
            tokens.append(("num", m.group(1), m.start(1)))
        elif m.group(2) is not None:
            tokens.append(("name", m.group(2), m.start(2)))
        elif m.group(3) is not None:
            tokens.append(("op", m.group(3), m.start(3)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, n: int, constants: Mapping[str, float]):
        self.text = text
        self.n = n
        self.constants = constants
        self.tokens = _tokenize(text)
        self.i = 0
        self.variables: set[int] = set()

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        tok = self.take()
        if tok[1] != value:
            raise NoiseSyntaxError(f"expected {value!r}, found {tok[1] or 'end of input'!r}",
                                   self.text, tok[2])

    def parse(self) -> Node:
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise NoiseSyntaxError(f"unexpected {tok[1]!r}", self.text, tok[2])
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            rhs = self.term()
            node = _binary(op, node, rhs)
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            rhs = self.unary()
            node = _binary(op, node, rhs)
        return node

    def unary(self) -> Node:
        if self.peek()[1] == "-":
            self.take()
            inner = self.unary()
            return lambda x: -inner(x)
        if self.peek()[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            exponent = self.unary()
            return _binary("^", base, exponent)
        return base

    def atom(self) -> Node:
        kind, value, pos = self.take()
        if kind == "num":
            v = float(value)
            return lambda x: v
        if kind == "name":
            if value in FUNCTIONS:
                arity, fn = FUNCTIONS[value]
                self.expect("(")
                args = [self.expr()]
                while self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != arity:
                    raise NoiseSyntaxError(f"{value} takes {arity} argument(s), got {len(args)}",
                                           self.text, pos)
                if arity == 1:
                    a, = args
                    return lambda x: fn(a(x))
                a, b = args
                return lambda x: fn(a(x), b(x))
            m = re.fullmatch(r"x(\d+)", value)
            if m:
                idx = int(m.group(1))
                if not 1 <= idx <= self.n:
                    raise NoiseSyntaxError(f"variable {value} outside x1..x{self.n}", self.text, pos)
                self.variables.add(idx)
                j = idx - 1
                return lambda x: float(x[j])
            if value in self.constants:
                v = float(self.constants[value])
                return lambda x: v
            raise NoiseSyntaxError(f"unknown name {value!r}", self.text, pos)
        if value == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise NoiseSyntaxError(f"unexpected {value or 'end of input'!r}", self.text, pos)


def _binary(op: str, a: Node, b: Node) -> Node:
    if op == "+":
        return lambda x: a(x) + b(x)
    if op == "-":
        return lambda x: a(x) - b(x)
    if op == "*":
        return lambda x: a(x) * b(x)
    if op == "/":
        def div(x):
            den = b(x)
            if den == 0.0:
                raise NoiseEvalError("division by zero")
            return a(x) / den
        return div

    def power(x):
        base, ex = a(x), b(x)
        if ex == 2.0:
            return base * base
        try:
            return math.pow(base, ex)
        except (ValueError, OverflowError) as err:
            raise NoiseEvalError(f"invalid power {base}^{ex}") from err
    return power


@dataclass(frozen=True)
class NoiseExpr:
    """A compiled noise expression over ``x1..xn``."""

    text: str
    n: int
    _fn: Node
    variables: frozenset[int]

    @classmethod
    def parse(cls, text: str, n: int, constants: Mapping[str, float] | None = None) -> "NoiseExpr":
        p = _Parser(text, n, constants or {})
        fn = p.parse()
        return cls(text, n, fn, frozenset(p.variables))

    def __call__(self, x) -> float:
        return eval_noise(self, x)


def eval_noise(e: NoiseExpr, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.size != e.n:
        raise NoiseEvalError(f"state has {x.size} entries, expression expects {e.n}")
    if not np.all(np.isfinite(x)):
        raise NoiseEvalError("non-finite state")
    try:
        v = float(e._fn(x))
    except OverflowError as err:
        raise NoiseEvalError(f"overflow evaluating {e.text!r}") from err
    if not math.isfinite(v):
        raise NoiseEvalError(f"{e.text!r} evaluated to {v}")
    if v < 0.0:
        raise NoiseEvalError(f"{e.text!r} evaluated to negative {v}")
    return v
