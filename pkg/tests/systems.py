"""Small systems shared across test modules."""

import numpy as np

from prstl_synth.dynamics import Mode, NoiseExpr, SwitchedSystem
from prstl_synth.geometry import GaussianBelief, Polytope

LIGHT_DARK_NOISE = "0.1*(5-x1)^2 + const"


def light_dark_system(const=0.01, noise_at="predicted"):
    consts = {"const": const}
    noise = [NoiseExpr.parse(LIGHT_DARK_NOISE, 2, consts) for _ in range(2)]
    mode = Mode(1, np.eye(2), 0.25 * np.eye(2), np.zeros((2, 2)), np.eye(2), noise)
    return SwitchedSystem.build([mode], Polytope.box([-2, -2], [2, 2]),
                                Polytope.box([-3, -3], [7, 6]), noise_at=noise_at)


def light_dark_init():
    return GaussianBelief([0.0, 0.0], 0.1 * np.eye(2))


def linear_system(A, B, W, C, noise, u_bound=1.0, ws=20.0, noise_at="predicted"):
    A = np.atleast_2d(A)
    n = A.shape[0]
    m = np.atleast_2d(B).shape[1]
    exprs = [NoiseExpr.parse(str(v), n) for v in noise]
    mode = Mode(1, A, B, W, C, exprs)
    return SwitchedSystem.build([mode], Polytope.box(-u_bound * np.ones(m), u_bound * np.ones(m)),
                                Polytope.box(-ws * np.ones(n), ws * np.ones(n)), noise_at=noise_at)


def random_observable_system(rng, n, u_bound=1.0):
    A = np.eye(n) + 0.1 * rng.normal(size=(n, n))
    B = np.eye(n)
    W = 0.1 * rng.uniform(0.2, 1.0) * np.eye(n)
    C = np.eye(n)
    noise = [f"{rng.uniform(0.1, 1.0):.6f}" for _ in range(n)]
    return linear_system(A, B, W, C, noise, u_bound)


def random_spd(rng, n, scale=1.0):
    M = rng.normal(size=(n, n))
    return scale * (M @ M.T / n + 0.1 * np.eye(n))
