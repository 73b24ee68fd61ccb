"""Dense two-phase simplex solver.

Solves ``min c @ z  s.t.  G z <= g,  E z = e`` with free variables ``z``.
Problems handled here are small (tens of variables, at most a few hundred
rows), so a dense tableau with Bland's anti-cycling rule is fast enough and
fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

FEAS_TOL = 1e-7
PIVOT_TOL = 1e-10
MAX_ITER = 100_000


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


@dataclass
class LinearProgram:
    """``min objective @ z`` subject to ``G z <= g`` and ``E z = e``."""

    objective: np.ndarray
    G: np.ndarray | None = None
    g: np.ndarray | None = None
    E: np.ndarray | None = None
    e: np.ndarray | None = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).ravel()
        n = self.objective.size
        self.G, self.g = _as_block(self.G, self.g, n, "G")
        self.E, self.e = _as_block(self.E, self.e, n, "E")
        for name, arr in (("objective", self.objective), ("G", self.G), ("g", self.g),
                          ("E", self.E), ("e", self.e)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite entries in {name}")

    @property
    def n_vars(self) -> int:
        return self.objective.size


@dataclass
class LpResult:
    status: LpStatus
    x: np.ndarray | None = None
    value: float | None = None
    iterations: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


def _as_block(M, v, n, name):
    if M is None:
        return np.zeros((0, n)), np.zeros(0)
    M = np.atleast_2d(np.asarray(M, dtype=float))
    v = np.asarray(v, dtype=float).ravel()
    if M.size == 0:
        M = M.reshape(0, n)
    if M.shape[1] != n or M.shape[0] != v.size:
        raise ValueError(f"{name} has shape {M.shape}, rhs {v.shape}, expected (k, {n})")
    return M, v


class _IterationLimit(Exception):
    pass


class _Tableau:
    """Constraint rows ``T[:m]`` with rhs in the last column; reduced costs in ``T[m]``."""

    def __init__(self, T: np.ndarray, basis: list[int]):
        self.T = T
        self.basis = basis
        self.iterations = 0

    @property
    def m(self) -> int:
        return self.T.shape[0] - 1

    def pivot(self, r: int, col: int) -> None:
        T = self.T
        T[r] /= T[r, col]
        factors = T[:, col].copy()
        factors[r] = 0.0
        nz = np.flatnonzero(factors)
        if nz.size:
            T[nz] -= np.outer(factors[nz], T[r])
        T[:, col] = 0.0
        T[r, col] = 1.0
        self.basis[r] = col

    def run(self, ncols: int) -> str:
        """Iterate Bland's rule over columns ``[0, ncols)``; returns 'optimal' or 'unbounded'."""
        T = self.T
        m = self.m
        while True:
            d = T[m, :ncols]
            candidates = np.flatnonzero(d < -FEAS_TOL * 1e-2)
            if candidates.size == 0:
                return "optimal"
            col = int(candidates[0])
            column = T[:m, col]
            rows = np.flatnonzero(column > PIVOT_TOL)
            if rows.size == 0:
                return "unbounded"
            rhs = np.maximum(T[rows, -1], 0.0)
            ratios = rhs / column[rows]
            best = ratios.min()
            tied = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
            r = int(min(tied, key=lambda i: self.basis[i]))
            if self.iterations >= MAX_ITER:
                raise _IterationLimit
            self.iterations += 1
            self.pivot(r, col)


def solve(lp: LinearProgram) -> LpResult:
    """Solve ``lp`` with a two-phase dense simplex (Bland's rule).

    Free variables are split as ``z = z_pos - z_neg``.  Returns an
    :class:`LpResult`; numerical trouble shows up as ``ITERATION_LIMIT``.
    """
    n = lp.n_vars
    G, g, E, e = lp.G, lp.g, lp.E, lp.e
    mi, me = G.shape[0], E.shape[0]
    m = mi + me

    if m == 0:
        if np.any(lp.objective != 0):
            return LpResult(LpStatus.UNBOUNDED)
        return LpResult(LpStatus.OPTIMAL, np.zeros(n), 0.0)

    # columns: z_pos (n) | z_neg (n) | slacks (mi) | artificials (added as needed)
    A = np.zeros((m, 2 * n + mi))
    A[:mi, :n] = G
    A[:mi, n:2 * n] = -G
    A[:mi, 2 * n:] = np.eye(mi)
    A[mi:, :n] = E
    A[mi:, n:2 * n] = -E
    b = np.concatenate([g, e])
    flip = b < 0
    A[flip] *= -1.0
    b = np.where(flip, -b, b)

    # a slack with +1 coefficient can start in the basis; everything else gets an artificial
    needs_art = [i for i in range(m) if i >= mi or flip[i]]
    n_struct = A.shape[1]
    n_art = len(needs_art)
    ncols = n_struct + n_art
    T = np.zeros((m + 1, ncols + 1))
    T[:m, :n_struct] = A
    T[:m, -1] = b
    basis = [0] * m
    for i in range(mi):
        if not flip[i]:
            basis[i] = 2 * n + i
    for j, i in enumerate(needs_art):
        T[i, n_struct + j] = 1.0
        basis[i] = n_struct + j

    scale = max(1.0, float(np.abs(b).max(initial=0.0)))
    tab = _Tableau(T, basis)
    try:
        if n_art:
            T[m, n_struct:ncols] = 1.0
            for i in needs_art:
                T[m] -= T[i]
            tab.run(ncols)
            if -T[m, -1] > FEAS_TOL * scale:
                return LpResult(LpStatus.INFEASIBLE, iterations=tab.iterations)
            _drive_out_artificials(tab, n_struct)
            T = tab.T
            m = tab.m

        # phase 2 on structural columns only
        T2 = np.zeros((m + 1, n_struct + 1))
        T2[:m, :n_struct] = T[:m, :n_struct]
        T2[:m, -1] = T[:m, -1]
        cost = np.concatenate([lp.objective, -lp.objective, np.zeros(mi)])
        T2[m, :n_struct] = cost
        for i, bvar in enumerate(tab.basis):
            if cost[bvar] != 0.0:
                T2[m] -= cost[bvar] * T2[i]
        tab2 = _Tableau(T2, list(tab.basis))
        tab2.iterations = tab.iterations
        outcome = tab2.run(n_struct)
    except _IterationLimit:
        return LpResult(LpStatus.ITERATION_LIMIT, iterations=MAX_ITER)

    if outcome == "unbounded":
        return LpResult(LpStatus.UNBOUNDED, iterations=tab2.iterations)
    zfull = np.zeros(n_struct)
    for i, bvar in enumerate(tab2.basis):
        zfull[bvar] = max(tab2.T[i, -1], 0.0)
    x = zfull[:n] - zfull[n:2 * n]
    return LpResult(LpStatus.OPTIMAL, x, float(lp.objective @ x), tab2.iterations)


def _drive_out_artificials(tab: _Tableau, n_struct: int) -> None:
    T = tab.T
    m = tab.m
    keep = []
    for r in range(m):
        if tab.basis[r] < n_struct:
            keep.append(r)
            continue
        row = T[r, :n_struct]
        cols = np.flatnonzero(np.abs(row) > 1e-9)
        if cols.size:
            tab.pivot(r, int(cols[0]))
            keep.append(r)
        # otherwise the row is redundant and dropped
    if len(keep) < m:
        tab.T = np.vstack([T[keep], T[m:m + 1]])
        tab.basis = [tab.basis[r] for r in keep]


def linprog(c, G=None, g=None, E=None, e=None) -> LpResult:
    """Convenience wrapper building a :class:`LinearProgram`."""
    return solve(LinearProgram(c, G, g, E, e))
