"""Counterexample-guided synthesis loop with iterative deepening on the lasso bound."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .abstraction import AbstractionTS, InitialBeliefError, build_abstraction
from .bmc import BmcStatus, FairTS, LassoWitness, bmc_search
from .dynamics import SwitchedSystem, mlo_step
from .feasibility import feasibility_search
from .formula import Formula, KLTrajectory, rho, to_ltl
from .geometry import GaussianBelief
from .scenario import Scenario

MAX_ROUNDS = 50
MAX_BOUND = 64
REPLAY_TOL = 1e-9


@dataclass
class Plan:
    trajectory: KLTrajectory
    witness: LassoWitness
    rho: float
    provenance: dict = field(default_factory=dict)

    @property
    def controls(self) -> list[tuple[int, np.ndarray]]:
        return [(a.q, a.u) for a in self.trajectory.actions]

    def to_dict(self) -> dict:
        t = self.trajectory
        return {
            "K": t.K,
            "L": t.L,
            "rho": self.rho,
            "beliefs": [{"mean": b.mean.tolist(), "cov": b.cov.tolist()} for b in t.beliefs],
            "actions": [{"q": a.q, "u": np.asarray(a.u, dtype=float).tolist()} for a in t.actions],
            "witness": self.witness.to_dict(),
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Plan":
        beliefs = [GaussianBelief(b["mean"], b["cov"]) for b in d["beliefs"]]
        actions = [(a["q"], np.asarray(a["u"], dtype=float)) for a in d["actions"]]
        t = KLTrajectory(beliefs, actions, d["K"], d["L"])
        w = d["witness"]
        return cls(t, LassoWitness(tuple(w["states"]), tuple(w["actions"]), w["L"]), d["rho"],
                   d.get("provenance", {}))


def replay_error(t: KLTrajectory, sys: SwitchedSystem) -> float:
    """Largest deviation between the stored beliefs and an MLO replay of the actions."""
    worst = 0.0
    for k, a in enumerate(t.actions):
        b = mlo_step(t.beliefs[k], a.q, a.u, sys)
        ref = t.beliefs[k + 1]
        worst = max(worst, float(np.max(np.abs(b.mean - ref.mean))), float(np.max(np.abs(b.cov - ref.cov))))
    return worst


class Status(enum.Enum):
    PLAN = "plan"
    UNSAT = "unsat"
    BUDGET = "budget_exhausted"


@dataclass
class SynthesisResult:
    status: Status
    plan: Plan | None
    abstraction: AbstractionTS | None
    cexs: list[FairTS]
    log: list[dict]

    @property
    def witnesses(self) -> list[LassoWitness]:
        return [e["witness"] for e in self.log if e.get("witness") is not None]


def synthesize(sc: Scenario, seed: int, max_rounds: int = MAX_ROUNDS, max_bound: int = MAX_BOUND,
               params=None) -> SynthesisResult:
    """Alternate bounded witness search and feasibility search until a plan is found
    or the abstraction runs out of loop-free paths."""
    sys, f, init = sc.system, sc.formula, sc.init
    params = sc.params if params is None else params
    log: list[dict] = []
    cexs: list[FairTS] = []
    try:
        ts = build_abstraction(f, sys, init)
    except InitialBeliefError as err:
        log.append({"event": "initial_belief", "message": str(err)})
        return SynthesisResult(Status.UNSAT, None, None, cexs, log)
    ltl = to_ltl(f)
    seen: set[LassoWitness] = set()
    K = 1
    rounds = 0
    while True:
        res = bmc_search(ts, ltl, cexs, K)
        if res.status is BmcStatus.EXHAUSTED:
            log.append({"event": "bmc", "K": K, "status": res.status.value, "witness": None})
            return SynthesisResult(Status.UNSAT, None, ts, cexs, log)
        if res.status is BmcStatus.NO_WITNESS_AT_BOUND:
            log.append({"event": "bmc", "K": K, "status": res.status.value, "witness": None})
            K += 1
            if K > max_bound:
                return SynthesisResult(Status.BUDGET, None, ts, cexs, log)
            continue
        w = res.witness
        assert w not in seen, f"witness proposed twice: {w}"
        seen.add(w)
        if rounds >= max_rounds:
            log.append({"event": "bmc", "K": K, "status": res.status.value, "witness": w})
            return SynthesisResult(Status.BUDGET, None, ts, cexs, log)
        rounds += 1
        rng = np.random.default_rng([seed, rounds])
        fr = feasibility_search(w, ts, init, sys, f, params, rng)
        log.append({"event": "bmc", "K": K, "status": res.status.value, "witness": w,
                    "found": fr.found, "iterations": fr.iterations, "nodes": fr.nodes,
                    "max_index": fr.max_index, "rho": fr.rho if fr.found else None, "trace": fr.trace})
        if fr.found:
            t = fr.trajectory
            r = rho(t, f, 0, sys, params.eps_loop)
            assert r >= 0, "plan failed the independent robustness check"
            assert replay_error(t, sys) <= REPLAY_TOL, "plan beliefs do not replay"
            prov = {"seed": seed, "rounds": rounds, "cex_count": len(cexs), "bound": K,
                    "iterations": fr.iterations, "nodes": fr.nodes}
            return SynthesisResult(Status.PLAN, Plan(t, w, r, prov), ts, cexs, log)
        cexs.append(fr.cex)
        log[-1]["cex"] = fr.cex
