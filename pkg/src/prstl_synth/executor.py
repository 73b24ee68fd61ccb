"""Monte Carlo execution of a plan on the true stochastic system.

The true state evolves with realised process and measurement noise, a Kalman
filter tracks it from the observations, and a receding-horizon LQR pulls the
estimate back onto the planned mean sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dynamics import SwitchedSystem, kf_step, simulate_step
from .formula import Formula, KLTrajectory, Prob, horizon, predicate_margin, predicates, rho_finite, sat_finite
from .geometry import GaussianBelief, Polytope, chebyshev_center, gauss_cdf


class ExecutorError(ValueError):
    pass


@dataclass(frozen=True)
class LqrParams:
    Q: np.ndarray
    R: np.ndarray
    horizon: int
    Q_by_mode: Mapping[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        by_mode = {int(q): np.atleast_2d(np.asarray(M, dtype=float)) for q, M in dict(self.Q_by_mode).items()}
        if self.horizon < 1:
            raise ExecutorError("LQR horizon must be at least 1")
        for name, M in [("Q", Q)] + [(f"Q_by_mode[{q}]", M) for q, M in by_mode.items()]:
            if M.shape != Q.shape or M.shape[0] != M.shape[1]:
                raise ExecutorError(f"{name} must be square with the shape of Q")
            if np.min(np.linalg.eigvalsh((M + M.T) / 2)) < -1e-12:
                raise ExecutorError(f"{name} is not positive semidefinite")
        if R.shape[0] != R.shape[1] or np.min(np.linalg.eigvalsh((R + R.T) / 2)) <= 0:
            raise ExecutorError("R must be positive definite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "Q_by_mode", by_mode)

    def Q_for(self, q: int) -> np.ndarray:
        return self.Q_by_mode.get(q, self.Q)


def lqr_gains(A, B, Q, R, h: int) -> list[np.ndarray]:
    """Finite-horizon gains ``[K_0, ..., K_{h-1}]`` for ``u_k = -K_k x_k``."""
    A, B, Q, R = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, B, Q, R))
    P = Q
    gains = []
    for _ in range(h):
        S = R + B.T @ P @ B
        try:
            K = np.linalg.solve(S, B.T @ P @ A)
        except np.linalg.LinAlgError as err:
            raise ExecutorError("R + B'PB is singular") from err
        P = Q + A.T @ P @ (A - B @ K)
        P = (P + P.T) / 2
        gains.append(K)
    gains.reverse()
    return gains


def _max_step(P: Polytope, x: np.ndarray, d: np.ndarray) -> float:
    """Largest ``a`` in ``[0, 1]`` with ``x + a d`` in ``P`` (``x`` inside)."""
    Hd = P.H @ d
    room = -P.c - P.H @ x
    a = 1.0
    for hd, r in zip(Hd, room):
        if hd > 0 and max(r, 0.0) < a * hd:
            a = max(r, 0.0) / hd
    return a


def clamp_input(U: Polytope, u_ff, du) -> np.ndarray:
    """Scale the correction ``du`` so that ``u_ff + du`` stays inside ``U``."""
    u_ff = np.asarray(u_ff, dtype=float)
    du = np.asarray(du, dtype=float)
    if not U.contains(u_ff, tol=0.0):
        centre, _ = chebyshev_center(U)
        u_ff = centre + _max_step(U, centre, u_ff - centre) * (u_ff - centre)
    return u_ff + _max_step(U, u_ff, du) * du


def plan_index(k: int, K: int, L: int) -> int:
    """Belief index of instant ``k`` of the infinite lasso."""
    return k if k <= K else L + (k - K - 1) % (K + 1 - L)


def execution_length(plan: KLTrajectory, f: Formula) -> int:
    """Steps simulated: the formula's deadline (or the plan prefix) plus one loop period."""
    h = horizon(f)
    reach = plan.K if math.isinf(h) else max(plan.K, int(h))
    return reach + plan.period


@dataclass
class ExecutionTrace:
    states: np.ndarray
    observations: np.ndarray
    estimates: list[GaussianBelief]
    inputs: np.ndarray
    modes: list[int]
    references: np.ndarray

    def rows(self) -> list[dict]:
        out = []
        for k in range(len(self.modes) + 1):
            b = self.estimates[k]
            row = {"k": k}
            row.update({f"x{i + 1}": v for i, v in enumerate(self.states[k])})
            ys = self.observations[k - 1] if k > 0 else [None] * self.observations.shape[1]
            row.update({f"y{i + 1}": v for i, v in enumerate(ys)})
            row.update({f"mean{i + 1}": v for i, v in enumerate(b.mean)})
            row.update({f"var{i + 1}": v for i, v in enumerate(np.diag(b.cov))})
            if k < len(self.modes):
                row.update({f"u{i + 1}": v for i, v in enumerate(self.inputs[k])})
                row["mode"] = self.modes[k]
            out.append(row)
        return out


def _sample_gaussian(b: GaussianBelief, rng: np.random.Generator) -> np.ndarray:
    w, V = np.linalg.eigh(b.cov)
    return b.mean + V @ (np.sqrt(np.clip(w, 0.0, None)) * rng.standard_normal(b.dim))


def execute(plan: KLTrajectory, sys: SwitchedSystem, lqr: LqrParams, rng: np.random.Generator,
            steps: int | None = None, x0=None) -> ExecutionTrace:
    steps = plan.K if steps is None else steps
    gains: dict[int, np.ndarray] = {}
    x = _sample_gaussian(plan.beliefs[0], rng) if x0 is None else np.asarray(x0, dtype=float)
    est = plan.beliefs[0]
    states, obs, ests, inputs, modes, refs = [x], [], [est], [], [], [plan.beliefs[0].mean]
    for k in range(steps):
        i = plan_index(k, plan.K, plan.L)
        act = plan.actions[i if i < plan.K else plan.L - 1]
        q = act.q
        if q not in gains:
            mode = sys.mode(q)
            gains[q] = lqr_gains(mode.A, mode.B, lqr.Q_for(q), lqr.R, lqr.horizon)[0]
        du = gains[q] @ (plan.beliefs[i].mean - est.mean)
        u = clamp_input(sys.input_polytope, act.u, du)
        x, y = simulate_step(x, q, u, sys, rng)
        est, _ = kf_step(est, q, u, y, sys)
        states.append(x)
        obs.append(y)
        ests.append(est)
        inputs.append(u)
        modes.append(q)
        refs.append(plan.beliefs[plan_index(k + 1, plan.K, plan.L)].mean)
    return ExecutionTrace(np.array(states), np.array(obs).reshape(steps, sys.p), ests,
                          np.array(inputs).reshape(steps, sys.m), modes, np.array(refs))


# --- statistics --------------------------------------------------------------

def stripped_margin(p: Prob, x) -> float:
    """Robustness of ``h x + c <= 0`` (or its negation) on a concrete state."""
    v = -(float(np.dot(p.h, x)) + p.c)
    return -v if p.negated else v


def stripped_holds(p: Prob, x) -> bool:
    v = float(np.dot(p.h, x)) + p.c
    return v > 0 if p.negated else v <= 0


def realized_sat(f: Formula, states: Sequence, modes: Sequence[int]) -> bool:
    return sat_finite(f, 0, lambda p, i: stripped_holds(p, states[i]),
                      lambda i: None if i == 0 else modes[i - 1], len(states))


def realized_rho(f: Formula, states: Sequence, modes: Sequence[int]) -> float:
    return rho_finite(f, 0, lambda p, i: stripped_margin(p, states[i]),
                      lambda i: None if i == 0 else modes[i - 1], len(states))


def per_instant_product(plan: KLTrajectory, preds: Sequence[Prob], estimates: Sequence[GaussianBelief]) -> float:
    """Product over instants of the probability that the estimated belief meets
    every predicate the planned belief meets at that instant."""
    total = 1.0
    for k, b in enumerate(estimates):
        ref = plan.beliefs[plan_index(k, plan.K, plan.L)]
        for p in preds:
            if predicate_margin(p, ref) < 0:
                continue
            h = np.asarray(p.h)
            sd = math.sqrt(max(float(h @ b.cov @ h), 0.0))
            mu = float(h @ b.mean) + p.c
            if sd == 0.0:
                prob = float(stripped_holds(p, b.mean))
            else:
                prob = gauss_cdf(-mu / sd)
                prob = 1.0 - prob if p.negated else prob
            total *= prob
    return total


@dataclass
class MonteCarloStats:
    success_rate: float
    mean_rho: float
    successes: list[bool]
    rhos: list[float]
    final_states: list[np.ndarray]
    per_instant: list[float]

    @property
    def runs(self) -> int:
        return len(self.successes)

    def rows(self) -> list[dict]:
        out = []
        for i, (ok, r, xf, pi) in enumerate(zip(self.successes, self.rhos, self.final_states, self.per_instant)):
            row = {"run_index": i, "success": int(ok), "rho_realized": r, "per_instant_product": pi}
            row.update({f"final_x{j + 1}": v for j, v in enumerate(xf)})
            out.append(row)
        return out


def monte_carlo(plan: KLTrajectory, sys: SwitchedSystem, f: Formula, runs: int, seed: int,
                lqr: LqrParams) -> MonteCarloStats:
    if runs < 1:
        raise ExecutorError("need at least one run")
    preds = predicates(f)
    steps = execution_length(plan, f)
    oks, rhos, finals, products = [], [], [], []
    for i in range(runs):
        trace = execute(plan, sys, lqr, np.random.default_rng(seed ^ i), steps)
        oks.append(realized_sat(f, trace.states, trace.modes))
        rhos.append(realized_rho(f, trace.states, trace.modes))
        finals.append(trace.states[-1])
        products.append(per_instant_product(plan, preds, trace.estimates))
    return MonteCarloStats(sum(oks) / runs, float(np.mean(rhos)), oks, rhos, finals, products)
