"""Brute-force reference implementations used only by the test suite.

Each oracle is deliberately naive and shares no code with the package.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def vertex_enumeration_lp(c, G, g, E=None, e=None, tol=1e-9):
    """Minimum of ``c @ z`` over the vertices of ``{G z <= g, E z = e}``.

    Returns ``None`` if the polytope has no vertex.  Assumes boundedness.
    """
    c = np.asarray(c, float)
    n = c.size
    G = np.asarray(G, float)
    g = np.asarray(g, float)
    E = np.zeros((0, n)) if E is None else np.asarray(E, float)
    e = np.zeros(0) if e is None else np.asarray(e, float)
    k = n - E.shape[0]
    best = None
    for rows in itertools.combinations(range(G.shape[0]), k):
        M = np.vstack([E, G[list(rows)]])
        rhs = np.concatenate([e, g[list(rows)]])
        if abs(np.linalg.det(M)) < 1e-10:
            continue
        z = np.linalg.solve(M, rhs)
        if np.all(G @ z <= g + tol) and np.allclose(E @ z, e, atol=tol):
            val = float(c @ z)
            if best is None or val < best:
                best = val
    return best


def erf_series(x: float) -> float:
    """Maclaurin series of erf, summed until terms vanish (fine for |x| < 6)."""
    total = 0.0
    term = x
    n = 0
    while True:
        contrib = term / (2 * n + 1)
        total += contrib
        if abs(contrib) < 1e-17 * max(1.0, abs(total)) and n > 5:
            break
        n += 1
        term *= -x * x / n
        if n > 400:
            break
    return 2.0 / math.sqrt(math.pi) * total


def normal_cdf_series(z: float) -> float:
    return 0.5 * (1.0 + erf_series(z / math.sqrt(2.0)))


def quantile_bisection(p: float) -> float:
    lo, hi = -8.0, 8.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if normal_cdf_series(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def grid_chebyshev(H, c, lo, hi, steps=401):
    """Largest inscribed-ball radius in 2D by dense grid search."""
    H = np.asarray(H, float)
    c = np.asarray(c, float)
    norms = np.linalg.norm(H, axis=1)
    xs = np.linspace(lo[0], hi[0], steps)
    ys = np.linspace(lo[1], hi[1], steps)
    X, Y = np.meshgrid(xs, ys)
    P = np.stack([X.ravel(), Y.ravel()], axis=1)
    slack = -(P @ H.T + c) / norms
    radius = slack.min(axis=1)
    i = int(np.argmax(radius))
    return P[i], float(radius[i])


def grid_bayes_filter(mean, cov, A, Bu, W, C, V, y, half_width=8.0, steps=None):
    """Bayes filter on a dense grid for 1D or 2D linear Gaussian models.

    Prediction is done in closed form (the prior is Gaussian) and the
    measurement update is done numerically on a grid, which is the only part
    of the Kalman update with something to check.
    """
    mean = np.atleast_1d(np.asarray(mean, float))
    n = mean.size
    pm = A @ mean + Bu
    pc = A @ cov @ A.T + W @ W.T
    sd = np.sqrt(np.diag(pc))
    steps = steps or (4001 if n == 1 else 401)
    axes = [np.linspace(pm[i] - half_width * sd[i], pm[i] + half_width * sd[i], steps)
            for i in range(n)]
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([gr.ravel() for gr in grids], axis=1)
    d = pts - pm
    inv = np.linalg.inv(pc)
    log_prior = -0.5 * np.einsum("ij,jk,ik->i", d, inv, d)
    r = y - pts @ C.T
    Vinv = np.linalg.inv(V @ V.T)
    log_lik = -0.5 * np.einsum("ij,jk,ik->i", r, Vinv, r)
    logw = log_prior + log_lik
    w = np.exp(logw - logw.max())
    w /= w.sum()
    post_mean = w @ pts
    dd = pts - post_mean
    post_cov = (dd * w[:, None]).T @ dd
    return post_mean, post_cov
