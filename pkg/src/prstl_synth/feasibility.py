"""Sparse tree search for a belief lasso inside the tunnel of a BMC witness.

Nodes carry approximated beliefs and the witness index they simulate.  Each
iteration picks a node biased toward low uncertainty, steers its mean with a
small LP (a random walk inside the current region, or with probability
``bias`` a walk into the next region of the witness), re-propagates the
covariance with the maximum-likelihood-observation filter and keeps the
longest prefix that stays inside the belief cones.  Nodes in the witness loop
try to close a lasso; closed lassos are scored with the timed formula.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .abstraction import AbstractionState, AbstractionTS
from .bmc import FairTS, LassoWitness
from .dynamics import SwitchedSystem, mlo_step
from .formula import Formula, KLTrajectory, TrajectoryError, loop_defects, predicates, rho
from .geometry import GaussianBelief, Polytope, chance_coefficient, cone_contains, uniform_sample
from .linprog import LpStatus, linprog

WEIGHT_FLOOR = 1e-3


@dataclass(frozen=True)
class FeasibilityParams:
    iters: int = 500
    t_out_s: float = 15.0
    d_near: float = 1.0
    d_drain: float = 0.5
    bias: float = 0.25
    h_lb: int = 3
    h_ub: int = 8
    delta: float = 1e-4
    eps_loop: float = 1e-6

    def __post_init__(self):
        if self.iters < 0 or self.t_out_s <= 0:
            raise ValueError("iteration budget must be nonnegative and the timeout positive")
        if self.d_near <= 0 or self.d_drain <= 0 or self.delta <= 0 or self.eps_loop <= 0:
            raise ValueError("distances and tolerances must be positive")
        if not 0.0 <= self.bias <= 1.0:
            raise ValueError("bias must lie in [0, 1]")
        if not 1 <= self.h_lb <= self.h_ub:
            raise ValueError("need 1 <= h_lb <= h_ub")


@dataclass
class TreeNode:
    id: int
    parent: int | None
    k: int                                  # witness index simulated by this node
    belief: GaussianBelief
    segment: tuple[tuple[int, np.ndarray], ...] = ()
    beliefs: tuple[GaussianBelief, ...] = ()  # beliefs after each segment step
    cost: float = 0.0
    active: bool = True
    depth: int = 0                          # belief index of this node along its path

    @property
    def mean(self) -> np.ndarray:
        return self.belief.mean


def distance(v: TreeNode, target_mean) -> float:
    return float(np.linalg.norm(v.mean - np.asarray(target_mean, dtype=float)))


def belief_cost(belief: GaussianBelief, state: AbstractionState) -> float:
    """Largest chance-constraint spread over the state's predicates."""
    worst = 0.0
    for con in state.cone.constraints:
        sd = belief.std_along(con.h)
        if sd > 0.0:
            worst = max(worst, chance_coefficient(con.eps) * sd)
    return worst


def node_cost(v: TreeNode, witness: LassoWitness, ts: AbstractionTS) -> float:
    return belief_cost(v.belief, ts.state(witness.states[v.k]))


def best_nearest(sample_mean, active: Sequence[TreeNode], d_near: float) -> TreeNode:
    if not active:
        raise ValueError("no active nodes")
    dists = [(distance(v, sample_mean), v) for v in active]
    near = [v for d, v in dists if d <= d_near]
    if near:
        return min(near, key=lambda v: (v.cost, v.id))
    return min(dists, key=lambda dv: (dv[0], dv[1].id))[1]


def drain(active: list[TreeNode], v_new: TreeNode, d_drain: float) -> list[TreeNode]:
    """Deactivate dominated neighbours of ``v_new`` at the same witness index."""
    drained = []
    for v in active:
        if v is v_new or v.k != v_new.k:
            continue
        if distance(v, v_new.mean) <= d_drain and v.cost >= v_new.cost:
            v.active = False
            drained.append(v)
    active[:] = [v for v in active if v.active]
    return drained


# --- segment LPs -------------------------------------------------------------

@dataclass
class SegmentPlan:
    """Controls for a segment and the per-step tunnel slacks.

    ``prefix`` is the number of leading steps whose means the LP could keep
    inside the tunnel; ``slacks[j-1]`` is the violation at step ``j``.
    """

    modes: list[int]
    controls: np.ndarray
    slacks: np.ndarray
    prefix: int
    status: LpStatus = LpStatus.OPTIMAL


def _affine_maps(x0: np.ndarray, modes: Sequence[int], sys: SwitchedSystem):
    """``x_i = M[i] @ u + d[i]`` with ``u`` the stacked inputs."""
    n, m, h = sys.n, sys.m, len(modes)
    M = [np.zeros((n, h * m))]
    d = [np.asarray(x0, dtype=float)]
    for i, q in enumerate(modes):
        mode = sys.mode(q)
        Mi = mode.A @ M[-1]
        Mi[:, i * m:(i + 1) * m] += mode.B
        M.append(Mi)
        d.append(mode.A @ d[-1])
    return M, d


def _input_rows(sys: SwitchedSystem, h: int, extra: int):
    U = sys.input_polytope
    m = sys.m
    rows = []
    rhs = []
    for i in range(h):
        block = np.zeros((U.H.shape[0], h * m + extra))
        block[:, i * m:(i + 1) * m] = U.H
        rows.append(block)
        rhs.append(-U.c)
    return rows, rhs


def _region_rows(P: Polytope, Mi, di, extra: int, slack_col: int | None = None):
    """Rows of ``H x_i + c <= |h| t`` (or ``<= 0`` without a slack column)."""
    A = np.hstack([P.H @ Mi, np.zeros((P.H.shape[0], extra))])
    if slack_col is not None:
        A[:, slack_col] -= np.linalg.norm(P.H, axis=1)
    return A, -P.c - P.H @ di


def segment_lp(x0, modes: Sequence[int], tunnel: Sequence[Polytope], final, sys: SwitchedSystem,
               delta: float = 1e-4) -> SegmentPlan:
    """Steer ``x0`` for ``len(modes)`` steps.

    ``tunnel[i]`` constrains the mean after step ``i+1`` for the first
    ``len(modes) - 1`` steps.  ``final`` is ``("target", point)`` to minimise
    the Chebyshev distance of the last mean to a point, or ``("region", P)`` to
    minimise the normalised violation of ``P`` (negative values go deeper).

    Earlier tunnel violations dominate later ones lexicographically, which is
    the limit of the slack chain ``(lam_bar/delta) lam_{k-1} <= lam_k``; the
    first step whose least violation exceeds ``delta`` ends the feasible prefix.
    """
    h = len(modes)
    m = sys.m
    M, d = _affine_maps(np.asarray(x0, dtype=float), modes, sys)
    nv = h * m + 1
    t = h * m

    def solve(upto: int, objective: str, step: int | None = None):
        rows, rhs = _input_rows(sys, h, 1)
        for i in range(1, upto + 1):
            A, b = _region_rows(tunnel[i - 1], M[i], d[i], 1)
            rows.append(A)
            rhs.append(b)
        if objective == "final":
            kind, what = final
            if kind == "target":
                tgt = np.asarray(what, dtype=float)
                A = np.hstack([M[h], np.zeros((sys.n, 1))])
                A[:, t] = -1.0
                rows += [A, np.hstack([-M[h], -np.ones((sys.n, 1))])]
                rhs += [tgt - d[h], d[h] - tgt]
            else:
                A, b = _region_rows(what, M[h], d[h], 1, slack_col=t)
                rows.append(A)
                rhs.append(b)
        elif objective == "violation":
            A, b = _region_rows(tunnel[step - 1], M[step], d[step], 1, slack_col=t)
            rows.append(A)
            rhs.append(b)
        obj = np.zeros(nv)
        if objective != "none":
            obj[t] = 1.0
        G = np.vstack(rows) if rows else np.zeros((0, nv))
        g = np.concatenate(rhs) if rhs else np.zeros(0)
        return linprog(obj, G, g)

    slacks = np.zeros(h)
    res = solve(h - 1, "final")
    if res.status is LpStatus.OPTIMAL:
        slacks[-1] = res.x[t]
        return SegmentPlan(list(modes), res.x[:t].reshape(h, m), slacks, h)
    if res.status is not LpStatus.INFEASIBLE:
        return SegmentPlan(list(modes), np.zeros((0, m)), slacks, 0, res.status)
    first_bad = h - 1
    for j in range(1, h):
        if solve(j, "none").status is LpStatus.INFEASIBLE:
            first_bad = j
            break
    res = solve(first_bad - 1, "violation", step=first_bad)
    if res.status is not LpStatus.OPTIMAL:
        return SegmentPlan(list(modes), np.zeros((0, m)), slacks, 0, res.status)
    slacks[first_bad - 1] = res.x[t]
    prefix = first_bad - 1 if res.x[t] > delta else first_bad
    u = res.x[:t].reshape(h, m)[:first_bad]
    return SegmentPlan(list(modes[:first_bad]), u, slacks, prefix)


def loop_lp(x0, modes: Sequence[int], regions: Sequence[Polytope], sys: SwitchedSystem):
    """Controls returning the mean to ``x0`` after ``len(modes)`` steps.

    Intermediate means stay in ``regions[i]`` as deep as possible (largest
    common normalised margin).  Returns ``None`` when no cycle exists.
    """
    p = len(modes)
    m = sys.m
    M, d = _affine_maps(np.asarray(x0, dtype=float), modes, sys)
    nv = p * m + 1
    t = p * m
    rows, rhs = _input_rows(sys, p, 1)
    for i in range(1, p):
        A, b = _region_rows(regions[i - 1], M[i], d[i], 1)
        A[:, t] += np.linalg.norm(regions[i - 1].H, axis=1)
        rows.append(A)
        rhs.append(b)
    obj = np.zeros(nv)
    if p > 1:
        obj[t] = -1.0
        rows.append(np.eye(1, nv, t))
        rhs.append(np.array([1.0]))      # cap the margin so the LP stays bounded
        rows.append(-np.eye(1, nv, t))
        rhs.append(np.array([0.0]))
    else:
        rows.append(np.eye(1, nv, t))
        rhs.append(np.array([0.0]))
        rows.append(-np.eye(1, nv, t))
        rhs.append(np.array([0.0]))
    E = np.hstack([M[p], np.zeros((sys.n, 1))])
    e = np.asarray(x0, dtype=float) - d[p]
    res = linprog(obj, np.vstack(rows), np.concatenate(rhs), E, e)
    if res.status is not LpStatus.OPTIMAL:
        return None
    return res.x[:t].reshape(p, m)


# --- search ------------------------------------------------------------------

@dataclass
class FeasibilityResult:
    trajectory: KLTrajectory | None
    rho: float
    cex: FairTS | None
    iterations: int
    nodes: int
    max_index: int
    trace: list[dict] = field(default_factory=list)

    @property
    def found(self) -> bool:
        return self.trajectory is not None


class _Tunnel:
    """Witness-indexed regions, modes and cached samplers."""

    def __init__(self, w: LassoWitness, ts: AbstractionTS):
        self.w = w
        self.ts = ts
        self.K = w.K
        self.L = w.L

    def state(self, k: int) -> AbstractionState:
        return self.ts.state(self.w.states[k])

    def region(self, k: int) -> Polytope:
        return self.state(k).reach_polytope

    def stay_mode(self, k: int) -> int:
        return self.w.actions[k - 1] if k > 0 else self.w.actions[0]

    def next_index(self, k: int) -> int:
        return self.w.successor(k)

    def next_mode(self, k: int) -> int:
        return self.w.actions[k] if k < self.K else self.w.actions[self.L - 1]

    def in_loop(self, k: int) -> bool:
        return self.L <= k <= self.K

    def cycle(self, k: int) -> list[tuple[int, int]]:
        """``(mode, index)`` transitions once around the loop starting at ``k``."""
        out = []
        j = k
        while True:
            q = self.next_mode(j)
            j = self.next_index(j)
            out.append((q, j))
            if j == k:
                return out

    def holds(self, k: int, b: GaussianBelief, sys: SwitchedSystem) -> bool:
        return (cone_contains(self.state(k).cone, b)
                and sys.workspace.contains(b.mean, tol=1e-9))


class FeasibilitySearch:
    def __init__(self, witness: LassoWitness, ts: AbstractionTS, init: GaussianBelief,
                 sys: SwitchedSystem, f: Formula, params: FeasibilityParams,
                 rng: np.random.Generator):
        self.tun = _Tunnel(witness, ts)
        self.init = init
        self.sys = sys
        self.f = f
        self.params = params
        self.rng = rng
        self.preds = predicates(f)
        self.nodes: list[TreeNode] = []
        self.active: list[TreeNode] = []

    # tree bookkeeping
    def add_node(self, parent: TreeNode | None, k: int, segment, beliefs) -> TreeNode:
        belief = beliefs[-1] if beliefs else self.init
        assert self.tun.holds(k, belief, self.sys), "tree node outside its belief cone"
        v = TreeNode(len(self.nodes), None if parent is None else parent.id, k, belief,
                     tuple(segment), tuple(beliefs), belief_cost(belief, self.tun.state(k)),
                     True, 0 if parent is None else parent.depth + len(segment))
        self.nodes.append(v)
        return v

    def path(self, v: TreeNode) -> tuple[list[GaussianBelief], list[tuple[int, np.ndarray]]]:
        chain = []
        while v is not None:
            chain.append(v)
            v = None if v.parent is None else self.nodes[v.parent]
        chain.reverse()
        beliefs = [chain[0].belief]
        actions = []
        for node in chain[1:]:
            beliefs.extend(node.beliefs)
            actions.extend(node.segment)
        return beliefs, actions

    # steps of the algorithm
    def sample_in(self, k: int) -> np.ndarray:
        region = self.tun.region(k)
        return uniform_sample(region, region, self.rng)

    def select(self) -> TreeNode:
        costs = np.array([v.cost for v in self.active])
        w = 1.0 / (costs + WEIGHT_FLOOR)
        i = self.rng.choice(len(self.active), p=w / w.sum())
        return self.active[i]

    def propagate(self, v: TreeNode) -> TreeNode | None:
        p = self.params
        tun = self.tun
        h = int(self.rng.integers(p.h_lb, p.h_ub + 1))
        biased = self.rng.random() < p.bias
        k = v.k
        stay = tun.stay_mode(k)
        modes = [stay] * h
        tunnel = [tun.region(k)] * (h - 1)
        if biased:
            modes[-1] = tun.next_mode(k)
            final = ("region", tun.region(tun.next_index(k)))
        else:
            final = ("target", self.sample_in(k))
        plan = segment_lp(v.mean, modes, tunnel, final, self.sys, p.delta)
        if plan.controls.shape[0] == 0:
            return None
        b = v.belief
        beliefs, segment = [], []
        new_k = k
        last = plan.controls.shape[0]
        for i in range(last):
            q = plan.modes[i]
            u = plan.controls[i]
            if not self.sys.input_polytope.contains(u, tol=1e-7):
                break
            nb = mlo_step(b, q, u, self.sys)
            if biased and i == h - 1 and tun.holds(tun.next_index(k), nb, self.sys):
                new_k = tun.next_index(k)
            elif not (q == stay and tun.holds(k, nb, self.sys)):
                break
            beliefs.append(nb)
            segment.append((q, u.copy()))
            b = nb
        if not beliefs:
            return None
        return self.add_node(v, new_k, segment, beliefs)

    def close_loop(self, v: TreeNode) -> KLTrajectory | None:
        """Try loop horizons ``1..h_ub``; the first whose covariance does not grow wins."""
        tun = self.tun
        if not tun.in_loop(v.k):
            return None
        cyc = tun.cycle(v.k)
        stay = tun.stay_mode(v.k)
        for plen in range(len(cyc), self.params.h_ub + 1):
            extra = plen - len(cyc)
            modes = [stay] * extra + [q for q, _ in cyc]
            idx = [v.k] * extra + [j for _, j in cyc]
            regions = [tun.region(j) for j in idx[:-1]]
            u = loop_lp(v.mean, modes, regions, self.sys)
            if u is None:
                continue
            b = v.belief
            loop_beliefs = []
            ok = True
            for i, (q, j) in enumerate(zip(modes, idx)):
                if not self.sys.input_polytope.contains(u[i], tol=1e-7):
                    ok = False
                    break
                b = mlo_step(b, q, u[i], self.sys)
                if not tun.holds(j, b, self.sys):
                    ok = False
                    break
                loop_beliefs.append(b)
            if not ok:
                continue
            beliefs, actions = self.path(v)
            beliefs = beliefs + loop_beliefs
            actions = actions + [(q, u[i].copy()) for i, q in enumerate(modes)]
            K = len(actions)
            t = KLTrajectory(beliefs, actions, K, K - plen + 1)
            gap, growth = loop_defects(t, self.preds)
            if gap <= self.params.eps_loop and growth <= self.params.eps_loop:
                return t
        return None

    def score(self, t: KLTrajectory) -> float:
        try:
            return rho(t, self.f, 0, self.sys, self.params.eps_loop)
        except TrajectoryError:
            return -math.inf

    def run(self) -> FeasibilityResult:
        p = self.params
        start = time.monotonic()
        root = self.add_node(None, 0, (), ())
        self.active = [root]
        best: KLTrajectory | None = None
        best_rho = -math.inf
        trace = []
        it = 0
        for it in range(1, p.iters + 1):
            if time.monotonic() - start > p.t_out_s:
                it -= 1
                break
            if not self.active:
                break
            v_rand = self.select()
            x_rand = self.sample_in(v_rand.k)
            v_near = best_nearest(x_rand, self.active, p.d_near)
            v_new = self.propagate(v_near)
            if v_new is not None:
                t = self.close_loop(v_new)
                r = self.score(t) if t is not None else -math.inf
                if r >= 0:
                    v_new.active = False
                    if r > best_rho:
                        best, best_rho = t, r
                else:
                    self.active.append(v_new)
                    drain(self.active, v_new, p.d_drain)
            trace.append({"iteration": it, "nodes": len(self.nodes), "active": len(self.active),
                          "best_rho": best_rho})
        max_k = max((v.k for v in self.active), default=0)
        if best is not None:
            assert self.score(best) >= 0, "accepted lasso lost its robustness"
            return FeasibilityResult(best, best_rho, None, it, len(self.nodes), max_k, trace)
        w = self.tun.w
        cex = w.prefix_cex(max_k) if max_k < w.K else w.cex()
        return FeasibilityResult(None, best_rho, cex, it, len(self.nodes), max_k, trace)


def feasibility_search(witness: LassoWitness, ts: AbstractionTS, init: GaussianBelief,
                       sys: SwitchedSystem, f: Formula, params: FeasibilityParams,
                       rng: np.random.Generator) -> FeasibilityResult:
    return FeasibilitySearch(witness, ts, init, sys, f, params, rng).run()
