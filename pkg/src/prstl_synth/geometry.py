"""Polytopes in mean space, Gaussian beliefs and belief cones."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .linprog import LpStatus, linprog

SYM_TOL = 1e-9
PSD_DRIFT_TOL = 1e-6
CONE_TOL = 1e-9
MAX_SAMPLE_DRAWS = 10_000


class GeometryError(ValueError):
    pass


def gauss_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


# Acklam's rational approximation coefficients
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def gauss_quantile(p: float) -> float:
    """Standard normal quantile.

    Acklam's rational approximation (relative error ~1e-9) polished with one
    Halley step against ``erfc``, which brings it to double precision.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"quantile needs 0 < p < 1, got {p!r}")
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = ((((( _C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    elif p <= 1.0 - _P_LOW:
        q = p - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
            (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)
    else:
        q = math.sqrt(-2.0 * math.log1p(-p))
        x = -((((( _C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    e = gauss_cdf(x) - p
    u = e * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def chance_coefficient(eps: float) -> float:
    """``Phi^-1(1 - eps)``; ``eps = 0`` is a hard constraint with an infinite margin."""
    if eps <= 0.0:
        return math.inf
    return gauss_quantile(1.0 - eps)


@dataclass(frozen=True)
class Polytope:
    """Intersection of halfspaces ``H x + c <= 0``."""

    H: np.ndarray
    c: np.ndarray

    def __init__(self, H, c):
        H = np.atleast_2d(np.asarray(H, dtype=float))
        c = np.asarray(c, dtype=float).ravel()
        if H.shape[0] != c.size:
            raise GeometryError(f"{H.shape[0]} normals but {c.size} offsets")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "c", c)

    @classmethod
    def box(cls, lo, hi) -> "Polytope":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        n = lo.size
        return cls(np.vstack([np.eye(n), -np.eye(n)]), np.concatenate([-hi, lo]))

    @classmethod
    def universe(cls, n: int) -> "Polytope":
        return cls(np.zeros((0, n)), np.zeros(0))

    @property
    def dim(self) -> int:
        return self.H.shape[1]

    @property
    def halfspaces(self) -> list[tuple[np.ndarray, float]]:
        return [(self.H[i], float(self.c[i])) for i in range(self.c.size)]

    def intersect(self, other: "Polytope") -> "Polytope":
        if other.dim != self.dim:
            raise GeometryError("dimension mismatch")
        return Polytope(np.vstack([self.H, other.H]), np.concatenate([self.c, other.c]))

    def contains(self, x, tol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        if self.c.size == 0:
            return True
        return bool(np.all(self.H @ x + self.c <= tol))

    def is_empty(self) -> bool:
        res = linprog(np.zeros(self.dim), self.H, -self.c)
        return res.status is LpStatus.INFEASIBLE

    @cached_property
    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned bounds computed with 2n LPs."""
        n = self.dim
        lo = np.empty(n)
        hi = np.empty(n)
        for i in range(n):
            for sign, out in ((1.0, lo), (-1.0, hi)):
                obj = np.zeros(n)
                obj[i] = sign
                res = linprog(obj, self.H, -self.c)
                if res.status is LpStatus.INFEASIBLE:
                    raise GeometryError("empty polytope has no bounding box")
                if not res.optimal:
                    raise GeometryError(f"polytope unbounded along axis {i}")
                out[i] = res.x[i]
        return lo, hi


@dataclass(frozen=True)
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def __init__(self, mean, cov, repair: bool = True):
        mean = np.asarray(mean, dtype=float).ravel()
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise GeometryError(f"covariance shape {cov.shape} does not match mean {mean.size}")
        if repair:
            cov = psd_repair(cov)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    def std_along(self, h) -> float:
        h = np.asarray(h, dtype=float)
        return math.sqrt(max(float(h @ self.cov @ h), 0.0))


def psd_repair(cov: np.ndarray) -> np.ndarray:
    """Symmetrize and clamp small negative eigenvalues to zero.

    Asymmetry or negative eigenvalues beyond 1e-6 indicate a broken update and
    raise instead of being silently repaired.
    """
    cov = np.asarray(cov, dtype=float)
    asym = np.abs(cov - cov.T).max(initial=0.0)
    scale = max(1.0, np.abs(cov).max(initial=0.0))
    if asym > PSD_DRIFT_TOL * scale:
        raise GeometryError(f"covariance asymmetric by {asym:.3g}")
    sym = 0.5 * (cov + cov.T)
    if sym.size == 0:
        return sym
    w, v = np.linalg.eigh(sym)
    if w.min() < -PSD_DRIFT_TOL * scale:
        raise GeometryError(f"covariance has eigenvalue {w.min():.3g}")
    if w.min() >= 0.0:
        return sym
    w = np.clip(w, 0.0, None)
    out = (v * w) @ v.T
    return 0.5 * (out + out.T)


@dataclass(frozen=True)
class ChanceConstraint:
    """``P(h @ x + c <= 0) >= 1 - eps``; ``negated`` flips it to the complement margin."""

    h: np.ndarray
    c: float
    eps: float
    negated: bool = False

    def margin(self, belief: GaussianBelief) -> float:
        """Robustness of the constraint: nonnegative iff it holds."""
        z = chance_coefficient(self.eps)
        sd = belief.std_along(self.h)
        spread = 0.0 if sd == 0.0 else z * sd
        base = -float(self.h @ belief.mean) - self.c - spread
        return -base if self.negated else base


@dataclass(frozen=True)
class BeliefCone:
    constraints: tuple[ChanceConstraint, ...]

    def __init__(self, constraints):
        constraints = tuple(constraints)
        for con in constraints:
            if not 0.0 <= con.eps <= 0.5:
                raise GeometryError(f"eps {con.eps} outside [0, 0.5]")
        object.__setattr__(self, "constraints", constraints)

    def margin(self, belief: GaussianBelief) -> float:
        if not self.constraints:
            return math.inf
        return min(con.margin(belief) for con in self.constraints)

    def mean_polytope(self, n: int) -> Polytope:
        if not self.constraints:
            return Polytope.universe(n)
        rows = [(-con.h, -con.c) if con.negated else (con.h, con.c) for con in self.constraints]
        return Polytope(np.array([r[0] for r in rows]), np.array([r[1] for r in rows]))


def cone_contains(cone: BeliefCone, b: GaussianBelief) -> bool:
    for con in cone.constraints:
        if con.h.size != b.dim:
            raise GeometryError(f"constraint dimension {con.h.size} vs belief {b.dim}")
    return cone.margin(b) >= -CONE_TOL


def chebyshev_center(p: Polytope) -> tuple[np.ndarray, float]:
    """Center and radius of the largest inscribed Euclidean ball."""
    n = p.dim
    if p.c.size == 0:
        raise GeometryError("unbounded radius: polytope has no facets")
    norms = np.linalg.norm(p.H, axis=1)
    G = np.hstack([p.H, norms[:, None]])
    obj = np.zeros(n + 1)
    obj[-1] = -1.0
    res = linprog(obj, G, -p.c)
    if res.status is LpStatus.INFEASIBLE:
        raise GeometryError("empty polytope")
    if res.status is LpStatus.UNBOUNDED:
        raise GeometryError("unbounded radius")
    if not res.optimal:
        raise GeometryError(f"chebyshev LP failed: {res.status.value}")
    r = res.x[-1]
    if r < -1e-9:
        raise GeometryError("empty polytope")
    return res.x[:n], float(max(r, 0.0))


def uniform_sample(p: Polytope, bounds: Polytope, rng: np.random.Generator) -> np.ndarray:
    """Rejection sample of ``p ∩ bounds`` from the bounding box of ``bounds``."""
    lo, hi = bounds.bounding_box
    region = p.intersect(bounds)
    for _ in range(MAX_SAMPLE_DRAWS):
        x = rng.uniform(lo, hi)
        if region.contains(x, tol=0.0):
            return x
    raise GeometryError(f"no sample accepted after {MAX_SAMPLE_DRAWS} draws")
