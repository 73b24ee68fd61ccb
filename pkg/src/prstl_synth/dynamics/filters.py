"""Kalman-filter belief updates, the maximum-likelihood-observation belief
dynamics used for planning, and one-step stochastic simulation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import GaussianBelief, psd_repair
from .system import SwitchedSystem

COND_LIMIT = 1e12


class FilterError(ArithmeticError):
    pass


@dataclass(frozen=True)
class KalmanIntermediates:
    sigma_prior: np.ndarray
    innovation_cov: np.ndarray
    gain: np.ndarray


def _noise_point(b: GaussianBelief, predicted: np.ndarray, sys: SwitchedSystem) -> np.ndarray:
    return predicted if sys.noise_at == "predicted" else b.mean


def _covariance_update(b: GaussianBelief, q: int, predicted: np.ndarray, sys: SwitchedSystem):
    mode = sys.mode(q)
    A, W, C = mode.A, mode.W, mode.C
    sigma_prior = psd_repair(A @ b.cov @ A.T + W @ W.T)
    if C.shape[0] == 0:
        gain = np.zeros((sys.n, 0))
        return sigma_prior, KalmanIntermediates(sigma_prior, np.zeros((0, 0)), gain)
    std = mode.noise_std(_noise_point(b, predicted, sys))
    S = C @ sigma_prior @ C.T + np.diag(std * std)
    S = 0.5 * (S + S.T)
    if np.linalg.cond(S) > COND_LIMIT:
        raise FilterError(f"innovation covariance is singular (cond {np.linalg.cond(S):.3g})")
    gain = np.linalg.solve(S, C @ sigma_prior).T
    # (I - L C) Sigma+ written as Sigma+ - L S L^T, which is symmetric by construction
    post = sigma_prior - gain @ S @ gain.T
    return psd_repair(0.5 * (post + post.T)), KalmanIntermediates(sigma_prior, S, gain)


def kf_step(b: GaussianBelief, q: int, u, y, sys: SwitchedSystem
            ) -> tuple[GaussianBelief, KalmanIntermediates]:
    """Kalman update after applying ``(q, u)`` and observing ``y``."""
    u = sys.check_input(u)
    mode = sys.mode(q)
    predicted = mode.step_mean(b.mean, u)
    cov, inter = _covariance_update(b, q, predicted, sys)
    y = np.asarray(y, dtype=float).ravel()
    if y.size != sys.p:
        raise FilterError(f"observation has {y.size} entries, expected {sys.p}")
    innovation = y - mode.C @ predicted
    mean = predicted + inter.gain @ innovation
    return GaussianBelief(mean, cov), inter


def mlo_step(b: GaussianBelief, q: int, u, sys: SwitchedSystem) -> GaussianBelief:
    """Belief update assuming the most likely observation: the mean follows the
    noiseless dynamics while the covariance still contracts."""
    u = sys.check_input(u)
    predicted = sys.mode(q).step_mean(b.mean, u)
    cov, _ = _covariance_update(b, q, predicted, sys)
    return GaussianBelief(predicted, cov)


def open_loop_cov(b: GaussianBelief, q: int, sys: SwitchedSystem, u=None) -> GaussianBelief:
    """Prediction without a measurement; uncertainty never decreases."""
    mode = sys.mode(q)
    u = np.zeros(sys.m) if u is None else np.asarray(u, dtype=float)
    return GaussianBelief(mode.step_mean(b.mean, u), mode.A @ b.cov @ mode.A.T + mode.W @ mode.W.T)


def simulate_step(x, q: int, u, sys: SwitchedSystem, rng: np.random.Generator
                  ) -> tuple[np.ndarray, np.ndarray]:
    """One step of the true system; the observation noise is evaluated at the
    realized next state."""
    u = sys.check_input(u)
    mode = sys.mode(q)
    x = np.asarray(x, dtype=float)
    w = rng.standard_normal(mode.W.shape[1])
    x_next = mode.A @ x + mode.B @ u + mode.W @ w
    v = rng.standard_normal(sys.p)
    y = mode.C @ x_next + mode.noise_std(x_next) * v
    return x_next, y
