"""Boolean and quantitative semantics over (K,L)-lasso belief trajectories.

A lasso ``beliefs[0..K]`` with actions ``actions[0..K-1]`` stands for the
infinite trajectory that returns from ``K`` to ``L`` by re-applying
``actions[L-1]``.  Temporal operators whose window starts beyond ``L`` are
evaluated on an unrolled copy in which the loop is repeated often enough.
Unrolled covariances are re-propagated, so the lasso verdict is conservative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..dynamics import SwitchedSystem, mlo_step
from ..geometry import ChanceConstraint, GaussianBelief
from .syntax import And, Formula, ModePred, Or, Prob, Until

LOOP_TOL = 1e-6


class TrajectoryError(ValueError):
    pass


@dataclass(frozen=True)
class Action:
    q: int
    u: np.ndarray


@dataclass(frozen=True)
class KLTrajectory:
    beliefs: tuple[GaussianBelief, ...]
    actions: tuple[Action, ...]
    K: int
    L: int

    def __post_init__(self):
        object.__setattr__(self, "beliefs", tuple(self.beliefs))
        object.__setattr__(self, "actions", tuple(
            a if isinstance(a, Action) else Action(int(a[0]), np.asarray(a[1], dtype=float))
            for a in self.actions))
        if len(self.beliefs) != self.K + 1:
            raise TrajectoryError(f"{len(self.beliefs)} beliefs for K={self.K}")
        if len(self.actions) != self.K:
            raise TrajectoryError(f"{len(self.actions)} actions for K={self.K}")
        if not 1 <= self.L <= self.K:
            raise TrajectoryError(f"loop index L={self.L} outside [1, {self.K}]")

    @property
    def period(self) -> int:
        return self.K + 1 - self.L

    def loop_action(self) -> Action:
        return self.actions[self.L - 1]

    def mode_before(self, k: int) -> int | None:
        return None if k == 0 else self.actions[k - 1].q


def n_unroll(k: int, K: int, L: int) -> int:
    return max(math.ceil((k - L) / (K + 1 - L)), 0)


def loop_defects(t: KLTrajectory, preds: Sequence[Prob]) -> tuple[float, float]:
    """Mean gap ``|x_K - x_{L-1}|_inf`` and the worst growth of the predicate
    standard deviations over the loop (for predicates holding at ``L-1``)."""
    head = t.beliefs[t.L - 1]
    tail = t.beliefs[t.K]
    gap = float(np.max(np.abs(tail.mean - head.mean), initial=0.0))
    growth = 0.0
    for p in preds:
        if predicate_margin(p, head) >= 0:
            h = np.asarray(p.h)
            growth = max(growth, tail.std_along(h) - head.std_along(h))
    return gap, growth


def check_loop(t: KLTrajectory, preds: Sequence[Prob], eps_loop: float = LOOP_TOL) -> None:
    gap, growth = loop_defects(t, preds)
    if gap > eps_loop:
        raise TrajectoryError(f"loop mean gap {gap:.3g} exceeds {eps_loop:g}")
    if growth > eps_loop:
        raise TrajectoryError(f"loop uncertainty grows by {growth:.3g}")


def unroll(N: int, t: KLTrajectory, sys: SwitchedSystem, eps_loop: float = LOOP_TOL) -> KLTrajectory:
    """Repeat the loop ``N`` more times.

    Means are copied from the recorded loop; covariances are re-propagated
    with the planning dynamics starting from the covariance at ``K``.
    """
    if N < 0:
        raise ValueError("N must be nonnegative")
    if N == 0:
        return t
    P = t.period
    beliefs = list(t.beliefs)
    actions = list(t.actions)
    for j in range(1, N * P + 1):
        act = t.actions[t.L - 1 + (j - 1) % P]
        recorded = t.beliefs[t.L + (j - 1) % P].mean
        nxt = mlo_step(beliefs[-1], act.q, act.u, sys)
        mode = sys.mode(act.q)
        bound = eps_loop * max(1.0, float(np.linalg.norm(mode.A, 2))) + 1e-9
        if np.max(np.abs(nxt.mean - recorded), initial=0.0) > bound:
            raise TrajectoryError(f"loop action drives the mean off the recorded loop at step {j}")
        beliefs.append(GaussianBelief(recorded, nxt.cov, repair=False))
        actions.append(act)
    return KLTrajectory(tuple(beliefs), tuple(actions), t.K + N * P, t.L + N * P)


def predicate_margin(p: Prob, b: GaussianBelief) -> float:
    return ChanceConstraint(np.asarray(p.h), p.c, p.eps, p.negated).margin(b)


class _LassoEvaluator:
    """Shared machinery for both semantics; unrolled copies are cached by count."""

    def __init__(self, t: KLTrajectory, sys: SwitchedSystem, eps_loop: float):
        self.sys = sys
        self.eps_loop = eps_loop
        self.versions = {0: t}
        self.cache: dict[tuple[int, int, int], object] = {}

    def version(self, N: int) -> KLTrajectory:
        if N not in self.versions:
            have = max(n for n in self.versions if n < N)
            base = self.versions[have]
            # unrolling the unrolled copy equals unrolling the original N times
            self.versions[N] = unroll(N - have, base, self.sys, self.eps_loop)
        return self.versions[N]


class _Robustness(_LassoEvaluator):
    def value(self, f: Formula, k: int, N: int = 0):
        key = (id(f), k, N)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        t = self.version(N)
        if isinstance(f, Prob):
            v = predicate_margin(f, t.beliefs[k])
        elif isinstance(f, ModePred):
            v = math.inf if k == 0 or f.holds(t.actions[k - 1].q) else -math.inf
        elif isinstance(f, And):
            v = min(self.value(c, k, N) for c in f.children)
        elif isinstance(f, Or):
            v = max(self.value(c, k, N) for c in f.children)
        elif k + f.a > t.L:
            extra = n_unroll(k + f.a, t.K, t.L)
            v = self.value(f, k, N + extra)
        elif isinstance(f, Until):
            v = -math.inf
            hi = min(k + f.b, t.K)
            left = math.inf
            # running minimum of the left operand over [k, k']
            for kk in range(k, k + f.a):
                left = min(left, self.value(f.left, kk, N))
            for kp in range(k + f.a, int(hi) + 1):
                left = min(left, self.value(f.left, kp, N))
                v = max(v, min(self.value(f.right, kp, N), left))
        else:
            hi = min(k + f.b, t.K)
            v = min((self.value(f.child, kp, N) for kp in range(k + f.a, int(hi) + 1)),
                    default=math.inf)
        self.cache[key] = v
        return v


class _Satisfaction(_LassoEvaluator):
    def value(self, f: Formula, k: int, N: int = 0) -> bool:
        key = (id(f), k, N)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        t = self.version(N)
        if isinstance(f, Prob):
            v = predicate_margin(f, t.beliefs[k]) >= 0
        elif isinstance(f, ModePred):
            v = k == 0 or f.holds(t.actions[k - 1].q)
        elif isinstance(f, And):
            v = all(self.value(c, k, N) for c in f.children)
        elif isinstance(f, Or):
            v = any(self.value(c, k, N) for c in f.children)
        elif k + f.a > t.L:
            v = self.value(f, k, N + n_unroll(k + f.a, t.K, t.L))
        elif isinstance(f, Until):
            v = False
            hi = int(min(k + f.b, t.K))
            # the left operand must hold on [k+a, k'] including k'
            for kp in range(k + f.a, hi + 1):
                if not self.value(f.left, kp, N):
                    break
                if self.value(f.right, kp, N):
                    v = True
                    break
        else:
            hi = int(min(k + f.b, t.K))
            v = all(self.value(f.child, kp, N) for kp in range(k + f.a, hi + 1))
        self.cache[key] = v
        return v


def rho(t: KLTrajectory, f: Formula, k: int, sys: SwitchedSystem,
        eps_loop: float = LOOP_TOL) -> float:
    """Quantitative lasso semantics; nonnegative values certify satisfaction."""
    return _Robustness(t, sys, eps_loop).value(f, k)


def sat_bool(t: KLTrajectory, f: Formula, k: int, sys: SwitchedSystem,
             eps_loop: float = LOOP_TOL) -> bool:
    return _Satisfaction(t, sys, eps_loop).value(f, k)


# --- finite traces -----------------------------------------------------------

def rho_finite(f: Formula, k: int, margin: Callable[[Prob, int], float],
               mode_before: Callable[[int], int | None], length: int) -> float:
    """Quantitative semantics on a finite trace of ``length`` instants.

    ``margin(p, k)`` gives the predicate robustness at instant ``k``.  Windows
    are clipped at the end of the trace.
    """
    memo: dict[tuple[int, int], float] = {}

    def ev(g: Formula, i: int) -> float:
        key = (id(g), i)
        if key in memo:
            return memo[key]
        if isinstance(g, Prob):
            v = margin(g, i)
        elif isinstance(g, ModePred):
            q = mode_before(i)
            v = math.inf if q is None or g.holds(q) else -math.inf
        elif isinstance(g, And):
            v = min(ev(c, i) for c in g.children)
        elif isinstance(g, Or):
            v = max(ev(c, i) for c in g.children)
        elif isinstance(g, Until):
            v = -math.inf
            left = math.inf
            hi = int(min(i + g.b, length - 1))
            for kk in range(i, min(i + g.a, length)):
                left = min(left, ev(g.left, kk))
            for kp in range(i + g.a, hi + 1):
                left = min(left, ev(g.left, kp))
                v = max(v, min(ev(g.right, kp), left))
        else:
            hi = int(min(i + g.b, length - 1))
            v = min((ev(g.child, kp) for kp in range(i + g.a, hi + 1)), default=math.inf)
        memo[key] = v
        return v

    return ev(f, k)


def sat_finite(f: Formula, k: int, holds: Callable[[Prob, int], bool],
               mode_before: Callable[[int], int | None], length: int) -> bool:
    """Boolean semantics on a finite trace; windows clipped at the end."""
    memo: dict[tuple[int, int], bool] = {}

    def ev(g: Formula, i: int) -> bool:
        key = (id(g), i)
        if key in memo:
            return memo[key]
        if isinstance(g, Prob):
            v = holds(g, i)
        elif isinstance(g, ModePred):
            q = mode_before(i)
            v = q is None or g.holds(q)
        elif isinstance(g, And):
            v = all(ev(c, i) for c in g.children)
        elif isinstance(g, Or):
            v = any(ev(c, i) for c in g.children)
        elif isinstance(g, Until):
            v = False
            hi = int(min(i + g.b, length - 1))
            for kp in range(i + g.a, hi + 1):
                if not ev(g.left, kp):
                    break
                if ev(g.right, kp):
                    v = True
                    break
        else:
            hi = int(min(i + g.b, length - 1))
            v = all(ev(g.child, kp) for kp in range(i + g.a, hi + 1))
        memo[key] = v
        return v

    return ev(f, k)


def belief_rho_finite(beliefs: Sequence[GaussianBelief], modes: Sequence[int], f: Formula,
                      k: int = 0) -> float:
    """Quantitative semantics on a plain finite belief sequence."""
    return rho_finite(f, k, lambda p, i: predicate_margin(p, beliefs[i]),
                      lambda i: None if i == 0 else modes[i - 1], len(beliefs))
