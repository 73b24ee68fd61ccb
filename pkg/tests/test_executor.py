import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prstl_synth.dynamics import Mode, NoiseExpr, SwitchedSystem, mlo_step
from prstl_synth.executor import (
    ExecutorError,
    LqrParams,
    clamp_input,
    execute,
    execution_length,
    lqr_gains,
    monte_carlo,
    plan_index,
    realized_sat,
)
from prstl_synth.formula import KLTrajectory, parse
from prstl_synth.formula.syntax import Always, And, ModePred, Or, Prob
from prstl_synth.geometry import GaussianBelief, Polytope
from prstl_synth.pipeline import Status, synthesize
from prstl_synth.scenario import load_scenario

from lassos import MODES, random_formula

LQR = LqrParams(np.eye(2), 0.05 * np.eye(2), 5)


# --- LQR -----------------------------------------------------------------------------

def test_zero_input_matrix_gives_zero_gains():
    for K in lqr_gains(np.eye(2), np.zeros((2, 2)), np.eye(2), np.eye(2), 4):
        assert np.allclose(K, 0.0)


def test_scalar_single_step_gain():
    (K,) = lqr_gains(1.0, 1.0, 1.0, 1.0, 1)
    assert K[0, 0] == pytest.approx(0.5)


def dare_fixed_point(A, B, Q, R, iters=20000):
    P = Q.copy()
    for _ in range(iters):
        G = np.linalg.inv(R + B.T @ P @ B) @ (B.T @ P @ A)
        P_next = Q + A.T @ P @ A - A.T @ P @ B @ G
        if np.max(np.abs(P_next - P)) < 1e-14:
            break
        P = P_next
    return np.linalg.inv(R + B.T @ P @ B) @ (B.T @ P @ A)


def test_long_horizon_gain_converges_to_fixed_point():
    rng = np.random.default_rng(0)
    A = np.eye(2) + 0.2 * rng.normal(size=(2, 2))
    B = rng.normal(size=(2, 1))
    Q, R = np.eye(2), np.array([[0.3]])
    gains = lqr_gains(A, B, Q, R, 400)
    assert np.max(np.abs(gains[0] - gains[1])) < 1e-6
    assert np.allclose(gains[0], dare_fixed_point(A, B, Q, R), atol=1e-6)


def test_singular_riccati_system_raises():
    with pytest.raises(ExecutorError):
        lqr_gains(np.eye(2), np.zeros((2, 2)), np.eye(2), np.zeros((2, 2)), 2)


def test_lqr_params_validation():
    with pytest.raises(ExecutorError):
        LqrParams(np.eye(2), np.zeros((2, 2)), 3)
    with pytest.raises(ExecutorError):
        LqrParams(np.eye(2), np.eye(2), 0)
    with pytest.raises(ExecutorError):
        LqrParams(-np.eye(2), np.eye(2), 3)


# --- clamping ------------------------------------------------------------------------

U = Polytope(np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [1.0, 1.0]]),
             np.array([-2.0, -2.0, -2.0, -2.0, -3.0]))


@settings(max_examples=200)
@given(st.tuples(st.floats(-2, 2), st.floats(-2, 2)), st.tuples(st.floats(-50, 50), st.floats(-50, 50)))
def test_clamped_input_inside_polytope(ff, du):
    u_ff = np.array(ff)
    if not U.contains(u_ff):
        return
    u = clamp_input(U, u_ff, du)
    assert U.contains(u, tol=1e-12)
    # the correction is only shortened, never turned
    d = u - u_ff
    assert np.allclose(d, np.clip(np.dot(d, du) / max(np.dot(du, du), 1e-300), 0, 1) * np.array(du), atol=1e-9)


def test_clamp_keeps_feasible_correction():
    u = clamp_input(U, np.zeros(2), np.array([0.5, -0.25]))
    assert np.allclose(u, [0.5, -0.25])


def test_clamp_pulls_feedforward_inside():
    u = clamp_input(U, np.array([2.0 + 1e-6, 0.0]), np.zeros(2))
    assert U.contains(u, tol=1e-12)


def test_plan_index_wraps_loop():
    assert [plan_index(k, 4, 3) for k in range(9)] == [0, 1, 2, 3, 4, 3, 4, 3, 4]


# --- execution ------------------------------------------------------------------------

def blind_system():
    """A = B = I without sensors; W = 0 so the true state is deterministic."""
    mode = Mode(1, np.eye(2), np.eye(2), np.zeros((2, 2)), np.zeros((0, 2)), [])
    return SwitchedSystem.build([mode], Polytope.box([-1, -1], [1, 1]), Polytope.box([-20, -20], [20, 20]))


def straight_plan(sys, cov):
    b = GaussianBelief([0.0, 0.0], cov)
    beliefs, actions = [b], []
    for u in ([0.5, 0.2], [0.5, 0.2], [0.0, -0.4], [0.0, 0.0]):
        actions.append((1, np.array(u)))
        beliefs.append(mlo_step(beliefs[-1], 1, u, sys))
    return KLTrajectory(beliefs, actions, 4, 4)


def test_noiseless_execution_follows_plan():
    sys = blind_system()
    plan = straight_plan(sys, np.zeros((2, 2)))
    trace = execute(plan, sys, LQR, np.random.default_rng(0), steps=9, x0=plan.beliefs[0].mean)
    for k, b in enumerate(trace.estimates):
        ref = plan.beliefs[plan_index(k, plan.K, plan.L)].mean
        assert np.allclose(b.mean, ref, atol=1e-9)
        assert np.allclose(trace.states[k], ref, atol=1e-9)


def test_execution_is_reproducible():
    sc = load_scenario("lightdark")
    sys = sc.system
    b0 = sc.init
    beliefs, actions = [b0], []
    for _ in range(3):
        actions.append((1, np.array([0.0, 0.0])))
        beliefs.append(mlo_step(beliefs[-1], 1, [0.0, 0.0], sys))
    plan = KLTrajectory(beliefs, actions, 3, 3)
    a = execute(plan, sys, sc.lqr, np.random.default_rng(5), steps=6)
    b = execute(plan, sys, sc.lqr, np.random.default_rng(5), steps=6)
    assert np.array_equal(a.states, b.states) and np.array_equal(a.inputs, b.inputs)
    for u in a.inputs:
        assert sys.input_polytope.contains(u, tol=1e-12)


def test_noiseless_monte_carlo_always_succeeds():
    sys = blind_system()
    plan = straight_plan(sys, np.zeros((2, 2)))
    f = parse("G[0,6] (P[0.05](x1 - 3 <= 0) & P[0.05](-x2 - 3 <= 0))", 2)
    stats = monte_carlo(plan, sys, f, 5, 1, LQR)
    assert stats.success_rate == 1.0 and stats.runs == 5


def test_single_run_flag_is_deterministic():
    sc = load_scenario("lightdark")
    plan = straight_plan(blind_system(), 0.1 * np.eye(2))
    plan = KLTrajectory(plan.beliefs, plan.actions, plan.K, plan.L)
    f = parse("G[0,4] P[0.05](x1 - 1.5 <= 0)", 2)
    one = monte_carlo(plan, blind_system(), f, 1, 3, sc.lqr)
    two = monte_carlo(plan, blind_system(), f, 1, 3, sc.lqr)
    assert one.successes == two.successes and one.rhos == two.rhos


def test_execution_length_covers_deadline_and_loop():
    sys = blind_system()
    plan = straight_plan(sys, np.zeros((2, 2)))
    assert execution_length(plan, parse("G[0,10] P[0.05](x1 <= 0)", 2)) == 10 + 1
    assert execution_length(plan, parse("G[0,inf] P[0.05](x1 <= 0)", 2)) == 4 + 1


def noisy_1d():
    mode = Mode(1, np.eye(1), np.eye(1), 0.3 * np.eye(1), np.eye(1), [NoiseExpr.parse("0.5", 1)])
    return SwitchedSystem.build([mode], Polytope.box([-1], [1]), Polytope.box([-20], [20]))


def test_success_rate_estimator_is_stable():
    sys = noisy_1d()
    b = GaussianBelief([0.0], [[0.2]])
    beliefs, actions = [b], []
    for _ in range(3):
        actions.append((1, np.zeros(1)))
        beliefs.append(mlo_step(beliefs[-1], 1, [0.0], sys))
    plan = KLTrajectory(beliefs, actions, 3, 3)
    f = parse("G[0,8] P[0.05](x1 - 1 <= 0)", 1)
    lqr = LqrParams(np.eye(1), 0.05 * np.eye(1), 5)
    rates = [monte_carlo(plan, sys, f, 100, 1000 + i, lqr).success_rate for i in range(10)]
    assert 0.0 < np.mean(rates) < 1.0
    assert np.std(rates) <= 0.1


# --- stripped-formula evaluation ---------------------------------------------------

def brute_sat(g, i, xs, modes):
    n = len(xs)
    if isinstance(g, Prob):
        v = float(np.dot(g.h, xs[i])) + g.c
        return v > 0 if g.negated else v <= 0
    if isinstance(g, ModePred):
        return i == 0 or g.holds(modes[i - 1])
    if isinstance(g, And):
        return all(brute_sat(c, i, xs, modes) for c in g.children)
    if isinstance(g, Or):
        return any(brute_sat(c, i, xs, modes) for c in g.children)
    hi = min(i + g.b, n - 1)
    window = range(i + g.a, int(hi) + 1)
    if isinstance(g, Always):
        return all(brute_sat(g.child, j, xs, modes) for j in window)
    for j in window:
        if brute_sat(g.right, j, xs, modes) and all(brute_sat(g.left, l, xs, modes)
                                                    for l in range(i + g.a, j + 1)):
            return True
    return False


def test_stripped_evaluator_matches_brute_force():
    rng = np.random.default_rng(77)
    for _ in range(150):
        f = random_formula(rng, 2)
        length = int(rng.integers(1, 9))
        xs = rng.normal(scale=2.0, size=(length, 2))
        modes = [int(rng.choice(MODES)) for _ in range(length)]
        assert realized_sat(f, xs, modes) == brute_sat(f, 0, xs, modes)


# --- light-dark tracking ------------------------------------------------------------

@pytest.fixture(scope="module")
def light_dark_plan():
    sc = load_scenario("lightdark")
    res = synthesize(sc, 7)
    assert res.status is Status.PLAN
    return sc, res.plan


@pytest.mark.slow
def test_light_dark_estimates_track_plan(light_dark_plan):
    sc, plan = light_dark_plan
    t = plan.trajectory
    steps = execution_length(t, sc.formula)
    inside = total = 0
    for i in range(100):
        trace = execute(t, sc.system, sc.lqr, np.random.default_rng(100 + i), steps)
        for k, b in enumerate(trace.estimates):
            ref = t.beliefs[plan_index(k, t.K, t.L)]
            sd = np.sqrt(np.diag(ref.cov))
            inside += bool(np.all(np.abs(b.mean - ref.mean) <= 3 * sd))
            total += 1
        for u in trace.inputs:
            assert sc.system.input_polytope.contains(u, tol=1e-12)
    assert inside / total >= 0.95
