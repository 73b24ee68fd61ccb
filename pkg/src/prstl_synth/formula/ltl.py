"""Untimed LTL image of a PrSTL formula (no next operator)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .syntax import Always, And, Formula, ModePred, Or, Prob, Until


@dataclass(frozen=True)
class LAnd:
    children: tuple["Ltl", ...]


@dataclass(frozen=True)
class LOr:
    children: tuple["Ltl", ...]


@dataclass(frozen=True)
class LUntil:
    left: "Ltl"
    right: "Ltl"


@dataclass(frozen=True)
class LAlways:
    child: "Ltl"


@dataclass(frozen=True)
class LEventually:
    child: "Ltl"


# atoms are the source formula's Prob and ModePred nodes
Ltl = Union[Prob, ModePred, LAnd, LOr, LUntil, LAlways, LEventually]


def to_ltl(f: Formula) -> Ltl:
    """Drop delays and deadlines.

    A positive delay becomes a leading eventually, grouped as
    ``F (f1 U f2)`` and ``F G f``.
    """
    if isinstance(f, (Prob, ModePred)):
        return f
    if isinstance(f, And):
        return LAnd(tuple(to_ltl(c) for c in f.children))
    if isinstance(f, Or):
        return LOr(tuple(to_ltl(c) for c in f.children))
    if isinstance(f, Until):
        core = LUntil(to_ltl(f.left), to_ltl(f.right))
        return core if f.a == 0 else LEventually(core)
    core = LAlways(to_ltl(f.child))
    return core if f.a == 0 else LEventually(core)


def ltl_text(f: Ltl) -> str:
    from .syntax import to_text
    if isinstance(f, (Prob, ModePred)):
        return to_text(f) if isinstance(f, ModePred) else f"p{f.id}"
    if isinstance(f, (LAnd, LOr)):
        sep = " & " if isinstance(f, LAnd) else " | "
        return "(" + sep.join(ltl_text(c) for c in f.children) + ")"
    if isinstance(f, LUntil):
        return f"({ltl_text(f.left)} U {ltl_text(f.right)})"
    if isinstance(f, LAlways):
        return f"G {ltl_text(f.child)}"
    return f"F {ltl_text(f.child)}"
