"""Switched linear system with state-dependent Gaussian measurement noise."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..geometry import Polytope
from .noise import NoiseExpr, eval_noise

NOISE_AT = ("current", "predicted")


class ModelError(ValueError):
    """Inconsistent system description."""


@dataclass(frozen=True)
class Mode:
    id: int
    A: np.ndarray
    B: np.ndarray
    W: np.ndarray
    C: np.ndarray
    noise: tuple[NoiseExpr, ...]

    def __post_init__(self):
        for name in ("A", "B", "W", "C"):
            arr = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "noise", tuple(self.noise))
        n = self.A.shape[0]
        if self.C.size == 0:
            object.__setattr__(self, "C", np.zeros((0, n)))
        if self.A.shape != (n, n):
            raise ModelError(f"mode {self.id}: A must be square, got {self.A.shape}")
        if self.B.shape[0] != n:
            raise ModelError(f"mode {self.id}: B has {self.B.shape[0]} rows, expected {n}")
        if self.W.shape[0] != n:
            raise ModelError(f"mode {self.id}: W has {self.W.shape[0]} rows, expected {n}")
        if self.C.shape[1] != n:
            raise ModelError(f"mode {self.id}: C has {self.C.shape[1]} columns, expected {n}")
        if len(self.noise) != self.C.shape[0]:
            raise ModelError(f"mode {self.id}: {len(self.noise)} noise expressions for "
                             f"{self.C.shape[0]} outputs")

    def noise_std(self, x) -> np.ndarray:
        """Per-output noise standard deviations at state ``x``."""
        return np.array([eval_noise(e, x) for e in self.noise])

    def step_mean(self, x, u) -> np.ndarray:
        return self.A @ x + self.B @ u


@dataclass(frozen=True)
class SwitchedSystem:
    modes: Mapping[int, Mode]
    input_polytope: Polytope
    workspace: Polytope
    sampling_period: float = 1.0
    noise_at: str = "predicted"
    n: int = field(init=False)
    m: int = field(init=False)
    p: int = field(init=False)

    def __post_init__(self):
        modes = dict(sorted(dict(self.modes).items()))
        if not modes:
            raise ModelError("a system needs at least one mode")
        object.__setattr__(self, "modes", modes)
        first = next(iter(modes.values()))
        n, m, p = first.A.shape[0], first.B.shape[1], first.C.shape[0]
        for mode in modes.values():
            if mode.A.shape[0] != n or mode.B.shape[1] != m or mode.C.shape[0] != p:
                raise ModelError(f"mode {mode.id} dimensions differ from mode {first.id}")
        if self.input_polytope.dim != m:
            raise ModelError(f"input polytope has dimension {self.input_polytope.dim}, expected {m}")
        if self.workspace.dim != n:
            raise ModelError(f"workspace has dimension {self.workspace.dim}, expected {n}")
        if self.noise_at not in NOISE_AT:
            raise ModelError(f"noise_at must be one of {NOISE_AT}, got {self.noise_at!r}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "p", p)

    @classmethod
    def build(cls, modes: Sequence[Mode], input_polytope: Polytope, workspace: Polytope,
              **kw) -> "SwitchedSystem":
        return cls({mode.id: mode for mode in modes}, input_polytope, workspace, **kw)

    @property
    def mode_ids(self) -> tuple[int, ...]:
        return tuple(self.modes)

    def mode(self, q: int) -> Mode:
        try:
            return self.modes[q]
        except KeyError:
            raise ModelError(f"unknown mode {q}; known modes {list(self.modes)}") from None

    def check_input(self, u, tol: float = 1e-9) -> np.ndarray:
        u = np.asarray(u, dtype=float).ravel()
        if u.size != self.m:
            raise ModelError(f"input has {u.size} entries, expected {self.m}")
        if not self.input_polytope.contains(u, tol=tol):
            raise ModelError(f"input {u} outside the input polytope")
        return u
