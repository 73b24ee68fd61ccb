"""Bounded search for lasso witnesses of the untimed formula.

The search walks the product of the abstraction with one tracker per
counterexample.  A tracker follows the refuted abstraction trajectory up to
stutters and single back-steps; any other move sends it to an absorbing
accepting state.  A witness must drive every tracker into that state, which
rules out the refuted trajectory and its pumped variants.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator, Sequence

from .abstraction import AbstractionTS
from .formula import LAlways, LAnd, LEventually, LOr, LUntil, Ltl, ModePred, Prob

Obs = tuple[int, int, int]


@dataclass(frozen=True)
class FairTS:
    """Counterexample tracker for an excluded abstraction trajectory.

    With ``L`` set, the trajectory is a lasso ``states[0..K]`` closing back to
    ``L``.  With ``L = None`` it is a finite prefix whose last transition
    failed; reaching its end traps the tracker in a non-accepting sink.
    """

    states: tuple[int, ...]
    actions: tuple[int, ...]
    L: int | None

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(int(s) for s in self.states))
        object.__setattr__(self, "actions", tuple(int(q) for q in self.actions))
        if len(self.actions) != len(self.states) - 1:
            raise ValueError("a trajectory of K+1 states needs K actions")
        if self.L is not None and not 1 <= self.L <= self.K:
            raise ValueError(f"loop index {self.L} outside [1, {self.K}]")

    @property
    def K(self) -> int:
        return len(self.actions)

    @property
    def accepting(self) -> int:
        return self.K + 1

    def to_dict(self) -> dict:
        return {"states": list(self.states), "actions": list(self.actions), "L": self.L}


def fair_step(cex: FairTS, k: int, obs: Obs) -> int:
    S, Q, K = cex.states, cex.actions, cex.K
    if k == K + 1 or (k == K and cex.L is None):
        return k
    s, q, t = obs
    if s != S[k]:
        return K + 1
    if k == K:
        if (q, t) == (Q[cex.L - 1], S[cex.L]):
            return cex.L
        if K > 0 and (q, t) == (Q[K - 1], S[K]):
            return K
        return K + 1
    if (q, t) == (Q[k], S[k + 1]):
        return k + 1
    if k > 0 and (q, t) == (Q[k - 1], S[k]):
        return k
    if k > 0 and (q, t) == (Q[k - 1], S[k - 1]):
        return k - 1
    return K + 1


@dataclass(frozen=True)
class LassoWitness:
    """Abstraction lasso: ``states[K]`` equals ``states[L-1]`` and play resumes at ``L``."""

    states: tuple[int, ...]
    actions: tuple[int, ...]
    L: int

    @property
    def K(self) -> int:
        return len(self.actions)

    def successor(self, k: int) -> int:
        return self.L if k == self.K else k + 1

    def cex(self) -> FairTS:
        return FairTS(self.states, self.actions, self.L)

    def prefix_cex(self, i: int) -> FairTS:
        """Exclude every run that reaches index ``i`` and then takes the next witness step."""
        nxt = self.successor(i)
        if i == self.K:
            return self.cex()
        return FairTS(self.states[:i + 1] + (self.states[nxt],), self.actions[:i + 1], None)

    def to_dict(self) -> dict:
        return {"states": list(self.states), "actions": list(self.actions), "K": self.K, "L": self.L}


# --- lasso LTL ---------------------------------------------------------------

def lasso_ltl_sat(labels: Sequence[frozenset[int]], in_actions: Sequence[int | None], L: int,
                  f: Ltl, k: int = 0) -> bool:
    """Evaluate an LTL formula (no next) on the word ``w_0..w_K (w_L..w_K)^w``.

    ``in_actions[k]`` is the mode taken into position ``k`` (``None`` at 0).
    Until and eventually are least fixpoints, always a greatest fixpoint, each
    iterated around the loop until stable.
    """
    n = len(labels)
    K = n - 1
    succ = [i + 1 for i in range(K)] + [L]

    def fix(step, start: bool) -> list[bool]:
        val = [start] * n
        for _ in range(n + 2):
            changed = False
            for i in range(K, -1, -1):
                v = step(i, val[succ[i]])
                if v != val[i]:
                    val[i] = v
                    changed = True
            if not changed:
                break
        return val

    memo: dict[int, list[bool]] = {}

    def ev(g: Ltl) -> list[bool]:
        key = id(g)
        if key in memo:
            return memo[key]
        if isinstance(g, Prob):
            out = [g.id in labels[i] for i in range(n)]
        elif isinstance(g, ModePred):
            out = [i == 0 or in_actions[i] is None or g.holds(in_actions[i]) for i in range(n)]
        elif isinstance(g, LAnd):
            parts = [ev(c) for c in g.children]
            out = [all(p[i] for p in parts) for i in range(n)]
        elif isinstance(g, LOr):
            parts = [ev(c) for c in g.children]
            out = [any(p[i] for p in parts) for i in range(n)]
        elif isinstance(g, LUntil):
            a, b = ev(g.left), ev(g.right)
            out = fix(lambda i, nxt: b[i] or (a[i] and nxt), False)
        elif isinstance(g, LAlways):
            a = ev(g.child)
            out = fix(lambda i, nxt: a[i] and nxt, True)
        elif isinstance(g, LEventually):
            a = ev(g.child)
            out = fix(lambda i, nxt: a[i] or nxt, False)
        else:
            raise TypeError(f"not an LTL node: {g!r}")
        memo[key] = out
        return out

    return ev(f)[k]


# --- search ------------------------------------------------------------------

class BmcStatus(enum.Enum):
    SAT = "sat"
    NO_WITNESS_AT_BOUND = "no_witness_at_bound"
    EXHAUSTED = "exhausted"


@dataclass(frozen=True)
class BmcResult:
    status: BmcStatus
    witness: LassoWitness | None = None
    paths_explored: int = 0


def witness_labels(ts: AbstractionTS, w: LassoWitness) -> tuple[list[frozenset[int]], list[int | None]]:
    labels = [ts.state(s).label for s in w.states]
    ins = [None] + list(w.actions)
    return labels, ins


def trackers_accept(cexs: Sequence[FairTS], w: LassoWitness) -> bool:
    """Does every tracker reach its accepting state on the infinite lasso word?"""
    S, Q, K, L = w.states, w.actions, w.K, w.L
    prefix = [(S[k], Q[k], S[k + 1]) for k in range(K)]
    loop = [(S[K], Q[L - 1], S[L])] + [(S[k], Q[k], S[k + 1]) for k in range(L, K)]
    for cex in cexs:
        t = 0
        for obs in prefix:
            t = fair_step(cex, t, obs)
        seen = set()
        while t != cex.accepting and t not in seen:
            seen.add(t)
            for obs in loop:
                t = fair_step(cex, t, obs)
        if t != cex.accepting:
            return False
    return True


def check_witness(ts: AbstractionTS, f: Ltl, cexs: Sequence[FairTS], w: LassoWitness) -> None:
    S, Q = w.states, w.actions
    for k in range(w.K):
        assert ts.has(S[k], Q[k], S[k + 1]), f"missing transition at {k}"
    assert S[0] == ts.initial
    assert S[w.K] == S[w.L - 1], "loop does not close"
    labels, ins = witness_labels(ts, w)
    assert lasso_ltl_sat(labels, ins, w.L, f), "witness violates the formula"
    assert trackers_accept(cexs, w), "witness is excluded by a counterexample"


def _paths(ts: AbstractionTS, cexs: Sequence[FairTS], K: int) -> Iterator[tuple[list, list, bool]]:
    """Depth-first product paths of length ``K``.

    Yields ``(states, actions, simple)`` where positions ``0..K-1`` are
    pairwise distinct product states and ``simple`` tells whether position
    ``K`` is distinct from all of them as well.
    """
    start = (ts.initial, tuple(0 for _ in cexs))
    states = [ts.initial]
    actions: list[int] = []
    visited = [start]
    on_path = {start}

    def rec():
        s, tr = visited[-1]
        for t, q in ts.successors(s):
            ntr = tuple(fair_step(c, x, (s, q, t)) for c, x in zip(cexs, tr))
            node = (t, ntr)
            states.append(t)
            actions.append(q)
            if len(actions) == K:
                yield list(states), list(actions), node not in on_path
            elif node not in on_path:
                visited.append(node)
                on_path.add(node)
                yield from rec()
                on_path.discard(node)
                visited.pop()
            states.pop()
            actions.pop()

    yield from rec()


def bmc_search(ts: AbstractionTS, f: Ltl, cexs: Sequence[FairTS], K: int) -> BmcResult:
    if K < 1:
        raise ValueError("bound must be at least 1")
    any_simple = False
    explored = 0
    for states, actions, simple in _paths(ts, cexs, K):
        explored += 1
        any_simple = any_simple or simple
        for L in range(1, K + 1):
            if states[K] != states[L - 1]:
                continue
            w = LassoWitness(tuple(states), tuple(actions), L)
            labels, ins = witness_labels(ts, w)
            if lasso_ltl_sat(labels, ins, L, f) and trackers_accept(cexs, w):
                check_witness(ts, f, cexs, w)
                return BmcResult(BmcStatus.SAT, w, explored)
    status = BmcStatus.NO_WITNESS_AT_BOUND if any_simple else BmcStatus.EXHAUSTED
    return BmcResult(status, None, explored)


def product_graph(ts: AbstractionTS, cexs: Sequence[FairTS], depth: int) -> dict:
    """Product states reachable within ``depth`` steps, for debugging."""
    start = (ts.initial, tuple(0 for _ in cexs))
    index = {start: 0}
    frontier = [start]
    edges = []
    for _ in range(depth):
        nxt = []
        for node in frontier:
            s, tr = node
            for t, q in ts.successors(s):
                child = (t, tuple(fair_step(c, x, (s, q, t)) for c, x in zip(cexs, tr)))
                if child not in index:
                    index[child] = len(index)
                    nxt.append(child)
                edges.append([index[node], q, index[child]])
        frontier = nxt
    nodes = [{"id": i, "state": s, "trackers": list(tr)} for (s, tr), i in index.items()]
    return {"nodes": nodes, "edges": sorted(set(map(tuple, edges)))}
