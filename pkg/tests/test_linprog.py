import numpy as np
import pytest

from prstl_synth.linprog import LinearProgram, LpStatus, linprog, solve

from oracles import vertex_enumeration_lp


def random_bounded_lp(rng, with_eq=False):
    n = int(rng.integers(1, 7))
    k = int(rng.integers(1, 6))
    G = rng.normal(size=(k, n))
    center = rng.normal(size=n)
    g = G @ center + rng.uniform(0.1, 2.0, size=k)
    # box rows keep every instance bounded
    G = np.vstack([G, np.eye(n), -np.eye(n)])
    g = np.concatenate([g, np.full(n, 5.0), np.full(n, 5.0)])
    c = rng.normal(size=n)
    E = e = None
    if with_eq and n >= 2:
        E = rng.normal(size=(1, n))
        e = E @ center
    return c, G, g, E, e


def test_min_x_subject_to_x_geq_1():
    res = linprog([1.0], [[-1.0]], [-1.0])
    assert res.status is LpStatus.OPTIMAL
    assert res.x[0] == pytest.approx(1.0, abs=1e-9)


def test_contradictory_bounds_infeasible():
    res = linprog([1.0], [[1.0], [-1.0]], [0.0, -1.0])
    assert res.status is LpStatus.INFEASIBLE


def test_unbounded_detected():
    res = linprog([-1.0], [[-1.0]], [0.0])
    assert res.status is LpStatus.UNBOUNDED


def test_equality_only():
    res = linprog([1.0, 1.0], E=[[1.0, -1.0]], e=[0.0], G=[[-1.0, 0.0]], g=[-2.0])
    assert res.optimal
    np.testing.assert_allclose(res.x, [2.0, 2.0], atol=1e-9)


def test_redundant_equalities_are_dropped():
    E = [[1.0, 1.0], [2.0, 2.0]]
    res = linprog([1.0, 0.0], [[-1.0, 0.0], [0.0, -1.0]], [0.0, 0.0], E, [1.0, 2.0])
    assert res.optimal
    assert res.value == pytest.approx(0.0, abs=1e-9)


def test_rejects_nonfinite_input():
    with pytest.raises(ValueError):
        LinearProgram([np.nan], [[1.0]], [1.0])


@pytest.mark.parametrize("with_eq", [False, True])
def test_matches_vertex_enumeration(with_eq):
    rng = np.random.default_rng(2024 + with_eq)
    checked = 0
    for _ in range(200):
        c, G, g, E, e = random_bounded_lp(rng, with_eq)
        expected = vertex_enumeration_lp(c, G, g, E, e)
        res = linprog(c, G, g, E, e)
        if expected is None:
            assert res.status is LpStatus.INFEASIBLE
            continue
        assert res.optimal
        assert res.value == pytest.approx(expected, abs=1e-5)
        assert np.all(G @ res.x <= g + 1e-7)
        if E is not None:
            np.testing.assert_allclose(E @ res.x, e, atol=1e-7)
        checked += 1
    assert checked >= 150


def test_dual_certificate_closes_gap():
    # min c@z, G z <= g  has dual  max -g@y, G.T y = -c, y >= 0
    rng = np.random.default_rng(99)
    for _ in range(50):
        c, G, g, _, _ = random_bounded_lp(rng)
        primal = linprog(c, G, g)
        assert primal.optimal
        m = G.shape[0]
        dual = linprog(g, -np.eye(m), np.zeros(m), G.T, -c)
        assert dual.optimal
        y = dual.x
        assert np.all(y >= -1e-7)
        np.testing.assert_allclose(G.T @ y, -c, atol=1e-6)
        assert -g @ y == pytest.approx(primal.value, abs=1e-5)


def test_deterministic_output():
    rng = np.random.default_rng(5)
    c, G, g, _, _ = random_bounded_lp(rng)
    a = solve(LinearProgram(c, G, g))
    b = solve(LinearProgram(c.copy(), G.copy(), g.copy()))
    assert a.x.tobytes() == b.x.tobytes()
    assert a.iterations == b.iterations
