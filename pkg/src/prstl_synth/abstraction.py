"""Finite simulation abstraction over belief cones.

Each state formula of the specification becomes one abstraction state whose
concrete region is the belief cone of its predicates.  A trailing
unconstrained state stands for every belief outside those cones.  Transitions
are decided by a one-step reachability LP in mean space, which ignores the
covariance terms and so can only add transitions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dynamics import SwitchedSystem
from .formula import Formula, Prob, StateFormula, predicates, state_formulas
from .geometry import BeliefCone, ChanceConstraint, GaussianBelief, Polytope, cone_contains
from .linprog import LpStatus, linprog


class InitialBeliefError(Exception):
    """The initial belief lies in none of the state-formula cones."""


@dataclass(frozen=True)
class AbstractionState:
    id: int
    label: frozenset[int]
    allowed_modes: frozenset[int]
    cone: BeliefCone
    mean_polytope: Polytope
    reach_polytope: Polytope = field(repr=False)
    top: bool = False

    def allows(self, q: int) -> bool:
        return q in self.allowed_modes


@dataclass(frozen=True)
class AbstractionTS:
    states: tuple[AbstractionState, ...]
    initial: int
    actions: tuple[int, ...]
    transitions: frozenset[tuple[int, int, int]]

    def __post_init__(self):
        succ: dict[int, list[tuple[int, int]]] = {s.id: [] for s in self.states}
        for s, q, t in sorted(self.transitions, key=lambda e: (e[0], e[2], e[1])):
            succ[s].append((t, q))
        object.__setattr__(self, "_succ", {k: tuple(v) for k, v in succ.items()})

    def state(self, sid: int) -> AbstractionState:
        if not 0 <= sid < len(self.states):
            raise KeyError(f"unknown abstraction state {sid}")
        return self.states[sid]

    def successors(self, sid: int) -> tuple[tuple[int, int], ...]:
        """``(next state, mode)`` pairs ordered by state id, then mode."""
        return self._succ[sid]

    def has(self, s: int, q: int, t: int) -> bool:
        return (s, q, t) in self.transitions

    def to_dict(self) -> dict:
        return {
            "initial": self.initial,
            "actions": list(self.actions),
            "states": [
                {
                    "id": s.id,
                    "label": sorted(s.label),
                    "allowed_modes": sorted(s.allowed_modes),
                    "top": s.top,
                    "constraints": [
                        {"h": con.h.tolist(), "c": con.c, "eps": con.eps, "negated": con.negated}
                        for con in s.cone.constraints
                    ],
                }
                for s in self.states
            ],
            "transitions": [list(e) for e in sorted(self.transitions)],
        }


def label_of(ts: AbstractionTS, sid: int) -> frozenset[int]:
    return ts.state(sid).label


def _make_state(sid: int, sf: StateFormula, preds: dict[int, Prob], modes: frozenset[int],
                sys: SwitchedSystem, top: bool = False) -> AbstractionState:
    n = sys.n
    cons = [ChanceConstraint(np.asarray(preds[i].h), preds[i].c, preds[i].eps, preds[i].negated)
            for i in sorted(sf.label)]
    cone = BeliefCone(cons)
    plain = [c for c in cons if not c.negated]
    # negated predicates admit any mean once the covariance is large enough,
    # so the region used for reachability keeps only the plain halfspaces
    reach = (Polytope(np.array([c.h for c in plain]), np.array([c.c for c in plain]))
             if plain else Polytope.universe(n))
    allowed = modes if sf.modes is None else frozenset(sf.modes) & modes
    return AbstractionState(sid, sf.label, allowed, cone, cone.mean_polytope(n),
                            reach.intersect(sys.workspace), top)


def transition_feasible(s: AbstractionState, q: int, t: AbstractionState, sys: SwitchedSystem) -> bool:
    """Is some mean in ``s`` steered into ``t`` by an admissible input under mode ``q``?"""
    if not t.allows(q):
        return False
    mode = sys.mode(q)
    n, m = sys.n, sys.m
    P, U, T = s.reach_polytope, sys.input_polytope, t.reach_polytope
    G = np.vstack([
        np.hstack([P.H, np.zeros((P.H.shape[0], m))]),
        np.hstack([np.zeros((U.H.shape[0], n)), U.H]),
        np.hstack([T.H @ mode.A, T.H @ mode.B]),
    ])
    g = -np.concatenate([P.c, U.c, T.c])
    res = linprog(np.zeros(n + m), G, g)
    if res.status not in (LpStatus.OPTIMAL, LpStatus.INFEASIBLE):
        raise RuntimeError(f"transition LP failed: {res.status.value}")
    return res.status is LpStatus.OPTIMAL


def build_abstraction(f: Formula, sys: SwitchedSystem, init: GaussianBelief) -> AbstractionTS:
    preds = {p.id: p for p in predicates(f)}
    modes = frozenset(sys.mode_ids)
    sfs = state_formulas(f)
    states = [_make_state(i, sf, preds, modes, sys) for i, sf in enumerate(sfs)]
    top_sf = StateFormula(frozenset(), None)
    if not any(s.label == frozenset() and s.allowed_modes == modes for s in states):
        states.append(_make_state(len(states), top_sf, preds, modes, sys, top=True))

    containing = [s for s in states if not s.top and cone_contains(s.cone, init)]
    if not containing:
        raise InitialBeliefError("initial belief satisfies no state formula of the specification")
    initial = min(containing, key=lambda s: (-len(s.label), s.id)).id

    transitions = set()
    for s in states:
        for t in states:
            for q in sys.mode_ids:
                if transition_feasible(s, q, t, sys):
                    transitions.add((s.id, q, t.id))
    return AbstractionTS(tuple(states), initial, tuple(sys.mode_ids), frozenset(transitions))


def transition_table(ts: AbstractionTS, states: Sequence[int] | None = None) -> dict[tuple[int, int], set[int]]:
    """``(state, mode) -> successor set`` restricted to ``states``."""
    keep = set(range(len(ts.states))) if states is None else set(states)
    table = {(s, q): set() for s in keep for q in ts.actions}
    for s, q, t in ts.transitions:
        if s in keep and t in keep:
            table[(s, q)].add(t)
    return table
