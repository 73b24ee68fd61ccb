"""Abstract syntax, parser and printer for PrSTL formulas.

Concrete grammar (whitespace-insensitive)::

    formula := or
    or      := and ("|" and)*
    and     := until ("&" until)*
    until   := unary (("U" | "R") "[" int "," (int | "inf") "]" unary)?
    unary   := ("G" | "F") "[" int "," (int | "inf") "]" unary
             | "(" formula ")" | atom
    atom    := ["!"] "P[" real "](" affine "<=" real ")"
             | "mode{" int ("," int)* "}" | "true" | "false"
    affine  := ["-"] term (("+" | "-") term)*
    term    := real ["*"] "x" int | "x" int | real

``F[a,b] f`` is sugar for ``true U[a,b] f`` and ``f1 R[a,b] f2`` for
``(f2 U[a,b] f1) | G[a,b] f2``.  Both are expanded while parsing.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Union


class FormulaError(ValueError):
    """Semantic problem with a formula (eps range, dimension, interval)."""


class FormulaSyntaxError(FormulaError):
    def __init__(self, msg: str, text: str, pos: int):
        line = text.count("\n", 0, pos) + 1
        col = pos - (text.rfind("\n", 0, pos) + 1) + 1
        super().__init__(f"line {line}, column {col}: {msg}")
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Prob:
    """Chance constraint ``P(h @ x + c <= 0) >= 1 - eps``, optionally negated."""

    h: tuple[float, ...]
    c: float
    eps: float
    negated: bool = False
    id: int = field(default=-1, compare=True)

    @property
    def key(self):
        return (self.h, self.c, self.eps, self.negated)


@dataclass(frozen=True)
class ModePred:
    """Mode atom; ``modes=None`` is true, an empty set is false."""

    modes: frozenset[int] | None = None

    def holds(self, q: int) -> bool:
        return self.modes is None or q in self.modes


TRUE = ModePred(None)
FALSE = ModePred(frozenset())


@dataclass(frozen=True)
class And:
    children: tuple["Formula", ...]


@dataclass(frozen=True)
class Or:
    children: tuple["Formula", ...]


@dataclass(frozen=True)
class Until:
    left: "Formula"
    right: "Formula"
    a: int
    b: float   # int or math.inf


@dataclass(frozen=True)
class Always:
    child: "Formula"
    a: int
    b: float


Formula = Union[Prob, ModePred, And, Or, Until, Always]


def children(f: Formula) -> tuple[Formula, ...]:
    if isinstance(f, (And, Or)):
        return f.children
    if isinstance(f, Until):
        return (f.left, f.right)
    if isinstance(f, Always):
        return (f.child,)
    return ()


def walk(f: Formula) -> Iterator[Formula]:
    """Pre-order traversal, children left to right."""
    stack = [f]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(children(node)))


def predicates(f: Formula) -> list[Prob]:
    """Distinct probabilistic predicates ordered by id."""
    seen = {}
    for node in walk(f):
        if isinstance(node, Prob):
            seen.setdefault(node.id, node)
    return [seen[i] for i in sorted(seen)]


def closure(f: Formula) -> list[Formula]:
    """Every subformula of ``f`` (itself included), first occurrence order."""
    out = []
    seen = set()
    for node in walk(f):
        if node not in seen:
            seen.add(node)
            out.append(node)
    return out


def is_state_formula(f: Formula) -> bool:
    if isinstance(f, (Prob, ModePred)):
        return True
    if isinstance(f, And):
        return all(is_state_formula(c) for c in f.children)
    return False


def horizon(f: Formula) -> float:
    """Number of future instants the formula can look at (``inf`` if unbounded)."""
    if isinstance(f, (Prob, ModePred)):
        return 0
    if isinstance(f, (And, Or)):
        return max(horizon(c) for c in f.children)
    if isinstance(f, Until):
        return f.b + max(horizon(f.left), horizon(f.right))
    return f.b + horizon(f.child)


# --- parsing ----------------------------------------------------------------

_NUM = r"[0-9]+(?:\.[0-9]*)?(?:[eE][-+]?[0-9]+)?|\.[0-9]+(?:[eE][-+]?[0-9]+)?"
_TOKEN = re.compile(
    rf"(?P<ws>\s+)|(?P<num>{_NUM})|(?P<var>x[0-9]+)|(?P<kw>mode|true|false|inf|P|U|R|G|F)\b"
    rf"|(?P<kw2>P|U|R|G|F)(?=\[)|(?P<op><=|[()\[\]{{}},&|!*+-])"
)


@dataclass
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Tok]:
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise FormulaSyntaxError(f"unexpected character {text[pos]!r}", text, pos)
        kind = m.lastgroup
        if kind != "ws":
            if kind == "kw2":
                kind = "kw"
            out.append(_Tok(kind, m.group(), m.start()))
        pos = m.end()
    out.append(_Tok("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str, n: int, modes: Iterable[int] | None):
        self.text = text
        self.n = n
        self.modes = None if modes is None else frozenset(modes)
        self.toks = _tokenize(text)
        self.i = 0
        self.ids: dict[tuple, int] = {}

    # token helpers
    def peek(self, ahead: int = 0) -> _Tok:
        return self.toks[min(self.i + ahead, len(self.toks) - 1)]

    def take(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def error(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.peek()
        return FormulaSyntaxError(msg, self.text, tok.pos)

    def expect(self, text: str) -> _Tok:
        t = self.peek()
        if t.text != text:
            found = t.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")
        return self.take()

    def number(self) -> float:
        neg = False
        if self.peek().text in ("-", "+"):
            neg = self.take().text == "-"
        t = self.peek()
        if t.kind != "num":
            raise self.error(f"expected a number, found {t.text or 'end of input'!r}")
        self.take()
        v = float(t.text)
        return -v if neg else v

    def integer(self) -> int:
        t = self.peek()
        if t.kind != "num" or not t.text.isdigit():
            raise self.error(f"expected a nonnegative integer, found {t.text or 'end of input'!r}")
        self.take()
        return int(t.text)

    def interval(self) -> tuple[int, float]:
        start = self.expect("[")
        a = self.integer()
        self.expect(",")
        if self.peek().text == "inf":
            self.take()
            b = math.inf
        else:
            b = self.integer()
        self.expect("]")
        if a > b:
            raise FormulaSyntaxError(f"interval [{a},{b}] has a > b", self.text, start.pos)
        return a, b

    # grammar
    def parse(self) -> Formula:
        f = self.disjunction()
        if self.peek().kind != "end":
            raise self.error(f"unexpected {self.peek().text!r}")
        return f

    def disjunction(self) -> Formula:
        parts = [self.conjunction()]
        while self.peek().text == "|":
            self.take()
            parts.append(self.conjunction())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def conjunction(self) -> Formula:
        parts = [self.until()]
        while self.peek().text == "&":
            self.take()
            parts.append(self.until())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def until(self) -> Formula:
        left = self.unary()
        t = self.peek()
        if t.kind == "kw" and t.text in ("U", "R"):
            self.take()
            a, b = self.interval()
            right = self.unary()
            nxt = self.peek()
            if nxt.kind == "kw" and nxt.text in ("U", "R"):
                raise self.error("chained until/release needs parentheses", nxt)
            if t.text == "U":
                return Until(left, right, a, b)
            return Or((Until(right, left, a, b), Always(right, a, b)))
        return left

    def unary(self) -> Formula:
        t = self.peek()
        if t.kind == "kw" and t.text in ("G", "F"):
            self.take()
            a, b = self.interval()
            child = self.unary()
            return Always(child, a, b) if t.text == "G" else Until(TRUE, child, a, b)
        if t.text == "(":
            self.take()
            f = self.disjunction()
            self.expect(")")
            return f
        return self.atom()

    def atom(self) -> Formula:
        t = self.peek()
        if t.text == "true":
            self.take()
            return TRUE
        if t.text == "false":
            self.take()
            return FALSE
        if t.text == "mode":
            self.take()
            self.expect("{")
            ids = [self.integer()]
            while self.peek().text == ",":
                self.take()
                ids.append(self.integer())
            self.expect("}")
            modes = frozenset(ids)
            if self.modes is not None and not modes <= self.modes:
                raise FormulaSyntaxError(f"unknown modes {sorted(modes - self.modes)}",
                                         self.text, t.pos)
            return ModePred(modes)
        negated = False
        if t.text == "!":
            self.take()
            negated = True
        t = self.peek()
        if t.text != "P":
            raise self.error(f"expected a predicate, found {t.text or 'end of input'!r}")
        self.take()
        self.expect("[")
        eps_tok = self.peek()
        eps = self.number()
        if not 0.0 <= eps <= 0.5:
            raise FormulaSyntaxError(f"eps {eps} outside [0, 0.5]", self.text, eps_tok.pos)
        self.expect("]")
        open_tok = self.expect("(")
        h, c = self.affine()
        self.expect("<=")
        c -= self.number()
        self.expect(")")
        if not any(h):
            raise FormulaSyntaxError("predicate has a zero normal vector", self.text, open_tok.pos)
        key = (tuple(h), c, eps, negated)
        pid = self.ids.setdefault(key, len(self.ids))
        return Prob(tuple(h), c, eps, negated, pid)

    def affine(self) -> tuple[list[float], float]:
        h = [0.0] * self.n
        c = 0.0
        sign = 1.0
        if self.peek().text in ("-", "+"):
            sign = -1.0 if self.take().text == "-" else 1.0
        while True:
            coef = 1.0
            t = self.peek()
            if t.kind == "num":
                self.take()
                coef = float(t.text)
                if self.peek().text == "*":
                    self.take()
                    if self.peek().kind != "var":
                        raise self.error("expected a variable after '*'")
                elif self.peek().kind != "var":
                    c += sign * coef
                    coef = None
            elif t.kind != "var":
                raise self.error(f"expected a term, found {t.text or 'end of input'!r}")
            if coef is not None:
                v = self.take()
                idx = int(v.text[1:])
                if not 1 <= idx <= self.n:
                    raise FormulaSyntaxError(f"variable {v.text} outside x1..x{self.n}",
                                             self.text, v.pos)
                h[idx - 1] += sign * coef
            if self.peek().text in ("+", "-"):
                sign = -1.0 if self.take().text == "-" else 1.0
            else:
                return h, c


def parse(text: str, n: int, modes: Iterable[int] | None = None) -> Formula:
    """Parse ``text`` over state dimension ``n`` (and optionally the mode set).

    Predicate ids follow the left-to-right order of the desugared tree, so
    printing and re-parsing reproduces them.
    """
    return _renumber(_Parser(text, n, modes).parse())


def _renumber(f: Formula) -> Formula:
    ids: dict[tuple, int] = {}
    for node in walk(f):
        if isinstance(node, Prob):
            ids.setdefault(node.key, len(ids))

    def rebuild(g: Formula) -> Formula:
        if isinstance(g, Prob):
            return Prob(g.h, g.c, g.eps, g.negated, ids[g.key])
        if isinstance(g, ModePred):
            return g
        if isinstance(g, (And, Or)):
            return type(g)(tuple(rebuild(c) for c in g.children))
        if isinstance(g, Until):
            return Until(rebuild(g.left), rebuild(g.right), g.a, g.b)
        return Always(rebuild(g.child), g.a, g.b)

    return rebuild(f)


# --- printing ---------------------------------------------------------------

def _num(v: float) -> str:
    return repr(float(v))


def _interval(a: int, b: float) -> str:
    return f"[{a},{'inf' if b == math.inf else int(b)}]"


def _affine(h: tuple[float, ...], c: float) -> str:
    parts = []
    for i, coef in enumerate(h):
        if coef == 0.0:
            continue
        mag = _num(abs(coef))
        if not parts:
            parts.append(("-" if coef < 0 else "") + f"{mag}*x{i + 1}")
        else:
            parts.append(("- " if coef < 0 else "+ ") + f"{mag}*x{i + 1}")
    parts.append(("- " if c < 0 or (c == 0 and math.copysign(1, c) < 0) else "+ ") + _num(abs(c)))
    return " ".join(parts)


def _is_tight(f: Formula) -> bool:
    """Prints as a single unary without needing parentheses."""
    return isinstance(f, (Prob, ModePred, Always)) or (isinstance(f, Until) and f.left == TRUE)


def to_text(f: Formula) -> str:
    """Concrete syntax that parses back to the same tree."""
    if isinstance(f, Prob):
        bang = "!" if f.negated else ""
        return f"{bang}P[{_num(f.eps)}]({_affine(f.h, f.c)} <= 0)"
    if isinstance(f, ModePred):
        if f.modes is None:
            return "true"
        if not f.modes:
            return "false"
        return "mode{" + ",".join(str(q) for q in sorted(f.modes)) + "}"
    if isinstance(f, (And, Or)):
        sep = " & " if isinstance(f, And) else " | "
        return sep.join(_wrap(c) for c in f.children)
    if isinstance(f, Always):
        return f"G{_interval(f.a, f.b)} {_paren_unless_tight(f.child)}"
    if f.left == TRUE:
        return f"F{_interval(f.a, f.b)} {_paren_unless_tight(f.right)}"
    return f"{_paren_unless_tight(f.left)} U{_interval(f.a, f.b)} {_paren_unless_tight(f.right)}"


def _paren_unless_tight(f: Formula) -> str:
    s = to_text(f)
    return s if _is_tight(f) else f"({s})"


def _wrap(f: Formula) -> str:
    # until binds tighter than & and |, so only nested connectives need parentheses
    s = to_text(f)
    return f"({s})" if isinstance(f, (And, Or)) else s


@dataclass(frozen=True)
class StateFormula:
    """Conjunction of predicates: a label of predicate ids plus the allowed modes."""

    label: frozenset[int]
    modes: frozenset[int] | None


def _conjoin(parts: Iterable[Formula]) -> StateFormula:
    label: set[int] = set()
    modes: frozenset[int] | None = None
    stack = list(parts)
    while stack:
        node = stack.pop()
        if isinstance(node, Prob):
            label.add(node.id)
        elif isinstance(node, ModePred):
            if node.modes is not None:
                modes = node.modes if modes is None else modes & node.modes
        else:
            stack.extend(node.children)
    return StateFormula(frozenset(label), modes)


def state_formulas(f: Formula) -> list[StateFormula]:
    """Maximal predicate-only conjunctions of ``f`` in first-occurrence order.

    Inside a conjunction that also has temporal conjuncts, the predicate-only
    conjuncts are grouped into a single state formula.
    """
    out: list[StateFormula] = []

    def emit(sf: StateFormula):
        if sf not in out:
            out.append(sf)

    def visit(node: Formula):
        if is_state_formula(node):
            emit(_conjoin([node]))
            return
        if isinstance(node, And):
            local = [c for c in node.children if is_state_formula(c)]
            if local:
                emit(_conjoin(local))
            for c in node.children:
                if not is_state_formula(c):
                    visit(c)
            return
        for c in children(node):
            visit(c)

    visit(f)
    return out
