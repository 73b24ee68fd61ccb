"""End-to-end acceptance checks; each prints one PASS/FAIL line."""

import json
import time

import numpy as np
import pytest

from prstl_synth.abstraction import build_abstraction, transition_table
from prstl_synth.bmc import LassoWitness, lasso_ltl_sat
from prstl_synth.cli import main
from prstl_synth.dynamics import kf_step
from prstl_synth.formula import belief_rho_finite, rho, to_ltl
from prstl_synth.geometry import GaussianBelief, chance_coefficient, cone_contains
from prstl_synth.linprog import LpStatus, linprog
from prstl_synth.pipeline import Plan, Status, synthesize
from prstl_synth.scenario import load_scenario

from lassos import random_formula
from oracles import grid_bayes_filter, quantile_bisection, vertex_enumeration_lp
from systems import linear_system, random_spd
from test_abstraction import REFERENCE_TABLE
from test_bmc import predicates_of, random_lasso_word, unrolled_sat
from test_formula import lower_bound_instances
from test_linprog import random_bounded_lp

SEEDS = (1, 2, 3)
FIRST_WITNESS = LassoWitness((0, 1, 1), (1, 1), 2)


@pytest.fixture
def report(capsys):
    def emit(label: str, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\n[acceptance] {label}: {'PASS' if ok else 'FAIL'} ({detail})")
        assert ok, detail
    return emit


@pytest.fixture(scope="module")
def light_dark_plans(tmp_path_factory):
    root = tmp_path_factory.mktemp("accept")
    out = {}
    for seed in SEEDS:
        path = root / f"plan-{seed}.json"
        t0 = time.perf_counter()
        code = main(["plan", "--scenario", "lightdark", "--seed", str(seed), "--out", str(path)])
        out[seed] = (code, path, time.perf_counter() - t0)
    return out


def test_1_light_dark_end_to_end(light_dark_plans, report):
    sc = load_scenario("lightdark")
    ts = build_abstraction(sc.formula, sc.system, sc.init)
    target = ts.states[1]
    problems = []
    worst = 0.0
    for seed, (code, path, secs) in light_dark_plans.items():
        worst = max(worst, secs)
        if code != 0:
            problems.append(f"seed {seed}: exit {code}")
            continue
        plan = Plan.from_dict(json.loads(path.read_text()))
        t = plan.trajectory
        r = rho(t, sc.formula, 0, sc.system, sc.params.eps_loop)
        if r < 0:
            problems.append(f"seed {seed}: rho {r}")
        if plan.witness != FIRST_WITNESS:
            problems.append(f"seed {seed}: witness {plan.witness}")
        if not all(cone_contains(target.cone, b) for b in t.beliefs[t.L:t.K + 1]):
            problems.append(f"seed {seed}: loop leaves target cone")
        if secs > 300:
            problems.append(f"seed {seed}: {secs:.1f}s")
    report("1 light-dark end-to-end", not problems,
           "; ".join(problems) or f"{len(SEEDS)} seeds, slowest {worst:.1f}s")


def test_2_monte_carlo_rate(light_dark_plans, report, capsys):
    _, path, _ = light_dark_plans[SEEDS[0]]
    t0 = time.perf_counter()
    code = main(["montecarlo", "--scenario", "lightdark", "--plan", str(path), "--runs", "100", "--seed", "1"])
    secs = time.perf_counter() - t0
    summary = json.loads(capsys.readouterr().out)
    rate = summary["success_rate"]
    ok = code == 0 and 0.75 <= rate <= 1.0 and secs < 60
    report("2 Monte Carlo success rate", ok, f"rate {rate:.2f} in {secs:.1f}s")


def test_3_cone_coefficients(report):
    sc = load_scenario("lightdark")
    ts = build_abstraction(sc.formula, sc.system, sc.init)
    conic = [s for s in ts.states if not s.top]
    coeffs = sorted({round(chance_coefficient(c.eps), 6) for s in conic for c in s.cone.constraints})
    expected = sorted([quantile_bisection(0.95), quantile_bisection(0.99)])
    ok = len(conic) == 2 and len(coeffs) == 2 and all(abs(a - b) <= 1e-3 for a, b in zip(coeffs, expected))
    report("3 cone coefficients", ok, f"{coeffs} vs oracle {[round(v, 4) for v in expected]}")


def test_4_manipulation_table(report):
    sc = load_scenario("manipulation")
    ts = build_abstraction(sc.formula, sc.system, sc.init)
    table = transition_table(ts, range(5))
    bad = [(s, q) for s, row in REFERENCE_TABLE.items() for q, cell in zip((1, 2, 3), row) if table[(s, q)] != cell]
    report("4 manipulation transition table", not bad, f"mismatched cells {bad}" if bad else "all 15 cells match")


def _lp_suite() -> tuple[int, float]:
    rng = np.random.default_rng(55)
    worst, mism = 0.0, 0
    for i in range(200):
        c, G, g, E, e = random_bounded_lp(rng, with_eq=i % 2 == 1)
        expected = vertex_enumeration_lp(c, G, g, E, e)
        res = linprog(c, G, g, E, e)
        if expected is None:
            mism += res.status is not LpStatus.INFEASIBLE
        elif res.status is not LpStatus.OPTIMAL:
            mism += 1
        else:
            worst = max(worst, abs(res.value - expected))
    return mism, worst


def _kf_suite() -> float:
    rng = np.random.default_rng(99)
    worst = 0.0
    for trial in range(20):
        n = 1 + trial % 2
        A = np.eye(n) + 0.2 * rng.normal(size=(n, n))
        W = 0.3 * rng.uniform(0.2, 1.0) * np.eye(n)
        C = np.eye(n) + 0.3 * rng.normal(size=(n, n))
        noise = [f"{rng.uniform(0.3, 1.5):.6f}" for _ in range(n)]
        sys = linear_system(A, np.eye(n), W, C, noise)
        mean, cov = rng.normal(size=n), random_spd(rng, n)
        u = rng.uniform(-1, 1, n)
        y = C @ (A @ mean + u) + rng.normal(size=n)
        post, _ = kf_step(GaussianBelief(mean, cov), 1, u, y, sys)
        gm, gc = grid_bayes_filter(mean, cov, A, u, W, C, np.diag([float(s) for s in noise]), y)
        scale = np.maximum(np.abs(gm), np.sqrt(np.diag(gc)))
        worst = max(worst, float(np.max(np.abs(post.mean - gm) / scale)),
                    float(np.max(np.abs(post.cov - gc)) / np.abs(gc).max()))
    return worst


def _lower_bound_suite() -> int:
    return sum(rho(t, f, 0, sys) > belief_rho_finite(beliefs, modes, f) + 1e-9
               for sys, t, f, beliefs, modes in lower_bound_instances(100, seed=4242))


def _ltl_suite() -> int:
    rng = np.random.default_rng(31415)
    bad = 0
    for _ in range(200):
        f = to_ltl(random_formula(rng, 2))
        n_preds = max((p.id for p in predicates_of(f)), default=-1) + 1
        labels, ins, L = random_lasso_word(rng, max(n_preds, 1))
        bad += lasso_ltl_sat(labels, ins, L, f) != unrolled_sat(labels, ins, L, f)
    return bad


def test_5_oracle_suites(report):
    lp_mism, lp_err = _lp_suite()
    kf_err = _kf_suite()
    lb_bad = _lower_bound_suite()
    ltl_bad = _ltl_suite()
    ok = lp_mism == 0 and lp_err <= 1e-5 and kf_err <= 0.02 and lb_bad == 0 and ltl_bad == 0
    report("5 oracle equivalence", ok,
           f"LP status mismatches {lp_mism}, max gap {lp_err:.1e}; KF rel err {kf_err:.4f}; "
           f"lower-bound violations {lb_bad}/100; LTL disagreements {ltl_bad}/200")


def test_6_cegis_exclusion(report):
    sc = load_scenario("unreachable")
    t0 = time.perf_counter()
    res = synthesize(sc, 1)
    secs = time.perf_counter() - t0
    ws = res.witnesses
    ok = res.status is Status.UNSAT and len(res.cexs) >= 1 and len(ws) == len(set(ws)) and secs < 120
    report("6 CEGIS exclusion", ok,
           f"{res.status.value}, {len(res.cexs)} counterexample round(s), {len(ws)} distinct witnesses, {secs:.1f}s")


def test_7_determinism(light_dark_plans, tmp_path, report):
    seed = SEEDS[1]
    _, first, _ = light_dark_plans[seed]
    again = tmp_path / "again.json"
    code = main(["plan", "--scenario", "lightdark", "--seed", str(seed), "--out", str(again)])
    ok = code == 0 and again.read_bytes() == first.read_bytes()
    report("7 determinism", ok, f"seed {seed}, {again.stat().st_size} bytes identical" if ok else "files differ")
