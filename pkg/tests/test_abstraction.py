import numpy as np
import pytest

from prstl_synth.abstraction import (
    InitialBeliefError,
    build_abstraction,
    label_of,
    transition_feasible,
    transition_table,
)
from prstl_synth.dynamics import mlo_step
from prstl_synth.formula import parse, predicates
from prstl_synth.geometry import GaussianBelief, chance_coefficient, cone_contains
from prstl_synth.scenario import load_scenario

from oracles import quantile_bisection
from systems import light_dark_init, light_dark_system, linear_system

# Reference transition pattern of the manipulation domain; rows safe, approach, grasp, move, place down.
REFERENCE_TABLE = {
    0: [{0, 1}, set(), set()],
    1: [{0, 1}, {2}, {3}],
    2: [{1}, {2}, {3}],
    3: [{1}, {2, 4}, {3}],
    4: [{1}, {4}, {3}],
}


@pytest.fixture(scope="module")
def light_dark():
    sc = load_scenario("lightdark")
    return sc, build_abstraction(sc.formula, sc.system, sc.init)


@pytest.fixture(scope="module")
def manipulation():
    sc = load_scenario("manipulation")
    return sc, build_abstraction(sc.formula, sc.system, sc.init)


def test_light_dark_states(light_dark):
    _, ts = light_dark
    conic = [s for s in ts.states if not s.top]
    assert len(conic) == 2 and len(ts.states) == 3
    assert [sorted(s.label) for s in conic] == [[0, 1, 2, 3], [4, 5, 6, 7]]
    assert ts.states[-1].top and ts.states[-1].label == frozenset()
    assert ts.initial == 0


def test_light_dark_cone_coefficients(light_dark):
    _, ts = light_dark
    safe, target = ts.states[0], ts.states[1]
    for con in safe.cone.constraints:
        assert chance_coefficient(con.eps) == pytest.approx(quantile_bisection(0.99), abs=1e-3)
        assert chance_coefficient(con.eps) == pytest.approx(2.3263, abs=1e-3)
    for con in target.cone.constraints:
        assert chance_coefficient(con.eps) == pytest.approx(quantile_bisection(0.95), abs=1e-3)
        assert chance_coefficient(con.eps) == pytest.approx(1.6449, abs=1e-3)


def test_light_dark_transitions(light_dark):
    _, ts = light_dark
    for s in (0, 1):
        for t in (0, 1):
            assert ts.has(s, 1, t)


def test_mean_polytope_matches_predicates(light_dark):
    sc, ts = light_dark
    preds = {p.id: p for p in predicates(sc.formula)}
    for s in ts.states:
        rows = {(tuple(h), c) for h, c in s.mean_polytope.halfspaces}
        assert rows == {(tuple(float(v) for v in preds[i].h), preds[i].c) for i in s.label}
        assert sorted(con.eps for con in s.cone.constraints) == sorted(preds[i].eps for i in s.label)


def test_manipulation_matches_reference_table(manipulation):
    _, ts = manipulation
    table = transition_table(ts, range(5))
    for s, row in REFERENCE_TABLE.items():
        assert [table[(s, q)] for q in (1, 2, 3)] == row, f"row {s}"


def test_manipulation_has_no_safe_to_grasp(manipulation):
    _, ts = manipulation
    assert not any(ts.has(0, q, 2) for q in ts.actions)
    assert not any(ts.has(2, q, 4) or ts.has(4, q, 2) for q in ts.actions)


def test_label_of(light_dark):
    _, ts = light_dark
    assert label_of(ts, 0) == frozenset({0, 1, 2, 3})
    assert label_of(ts, 2) == frozenset()
    with pytest.raises(KeyError):
        label_of(ts, 17)


def test_initial_belief_outside_every_cone():
    sys = light_dark_system()
    f = parse("P[0.05](x1 - 1 <= 0) U[0,inf] P[0.05](x1 - 2 <= 0)", 2)
    with pytest.raises(InitialBeliefError):
        build_abstraction(f, sys, GaussianBelief([6.0, 0.0], 0.1 * np.eye(2)))


def test_initial_state_prefers_largest_label():
    sys = light_dark_system()
    f = parse("P[0.05](x1 - 5 <= 0) U[0,inf] (P[0.05](x1 - 5 <= 0) & P[0.05](x2 - 5 <= 0))", 2)
    ts = build_abstraction(f, sys, light_dark_init())
    assert len(ts.state(ts.initial).label) == 2


def test_disconnected_regions_have_no_transition():
    sys = linear_system(np.eye(1), np.eye(1), np.zeros((1, 1)), np.eye(1), [1.0], u_bound=1.0)
    f = parse("P[0.05](x1 - 0 <= 0) U[0,inf] P[0.05](-x1 + 5 <= 0)", 1)
    ts = build_abstraction(f, sys, GaussianBelief([-1.0], [[0.01]]))
    left, right = ts.states[0], ts.states[1]
    assert not transition_feasible(left, 1, right, sys)
    assert transition_feasible(right, 1, right, sys)


def _cone_beliefs(state, sys, rng, count):
    lo, hi = state.reach_polytope.bounding_box
    out = []
    while len(out) < count:
        mean = rng.uniform(lo, hi)
        scale = rng.uniform(0.0, 0.05)
        M = rng.normal(size=(sys.n, sys.n))
        b = GaussianBelief(mean, scale * (M @ M.T) / sys.n)
        if cone_contains(state.cone, b):
            out.append(b)
    return out


@pytest.mark.parametrize("fixture", ["light_dark", "manipulation"])
def test_simulation_soundness_sampled(fixture, request):
    sc, ts = request.getfixturevalue(fixture)
    sys = sc.system
    rng = np.random.default_rng(11)
    lo, hi = sys.input_polytope.bounding_box
    hits = 0
    for s in ts.states:
        for b in _cone_beliefs(s, sys, rng, 500 // len(ts.states)):
            q = int(rng.choice(sys.mode_ids))
            u = rng.uniform(lo, hi)
            nb = mlo_step(b, q, u, sys)
            if not sys.workspace.contains(nb.mean):
                continue
            for t in ts.states:
                if cone_contains(t.cone, nb) and t.allows(q):
                    hits += 1
                    assert ts.has(s.id, q, t.id), (s.id, q, t.id)
    assert hits > 0


def test_zero_covariance_cone_equals_mean_polytope(manipulation):
    _, ts = manipulation
    rng = np.random.default_rng(3)
    for s in ts.states:
        lo, hi = s.reach_polytope.bounding_box
        for _ in range(200):
            x = rng.uniform(lo - 1, hi + 1)
            b = GaussianBelief(x, np.zeros((x.size, x.size)))
            assert cone_contains(s.cone, b) == s.mean_polytope.contains(x)


def test_negated_predicates_leave_reach_region_unconstrained():
    sys = light_dark_system()
    f = parse("P[0.05](x1 - 5 <= 0) U[0,inf] !P[0.05](x1 - 1 <= 0)", 2)
    ts = build_abstraction(f, sys, light_dark_init())
    neg = next(s for s in ts.states if any(c.negated for c in s.cone.constraints))
    assert neg.reach_polytope.contains(np.array([0.0, 0.0]))
    assert not neg.mean_polytope.contains(np.array([0.0, 0.0]))


def test_to_dict_lists_sorted_transitions(light_dark):
    _, ts = light_dark
    d = ts.to_dict()
    assert d["transitions"] == sorted(d["transitions"])
    assert d["states"][2]["top"] is True
