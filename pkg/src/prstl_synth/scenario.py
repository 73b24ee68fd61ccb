"""Scenario files: schema, semantic validation and round-trip dumping."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .dynamics import Mode, ModelError, NoiseExpr, NoiseSyntaxError, SwitchedSystem
from .executor import ExecutorError, LqrParams
from .feasibility import FeasibilityParams
from .formula import Formula, FormulaError, parse
from .geometry import GaussianBelief, Polytope

_num = {"type": "number"}
_vec = {"type": "array", "items": _num}
_mat = {"type": "array", "items": _vec}
_poly = {"type": "object", "required": ["H", "c"], "additionalProperties": False,
         "properties": {"H": _mat, "c": _vec}}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["n", "m", "p", "modes", "input_polytope", "workspace", "initial_belief",
                 "formula", "params", "lqr"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "n": {"type": "integer", "minimum": 1},
        "m": {"type": "integer", "minimum": 1},
        "p": {"type": "integer", "minimum": 0},
        "modes": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object", "required": ["id", "A", "B", "W", "C", "noise"],
                "additionalProperties": False,
                "properties": {"id": {"type": "integer"}, "A": _mat, "B": _mat, "W": _mat, "C": _mat,
                               "noise": {"type": "array", "items": {"type": "string"}}},
            },
        },
        "input_polytope": _poly,
        "workspace": _poly,
        "initial_belief": {"type": "object", "required": ["mean", "cov"], "additionalProperties": False,
                           "properties": {"mean": _vec, "cov": _mat}},
        "formula": {"type": "string"},
        "params": {
            "type": "object",
            "required": ["t_out_s", "iters", "d_near", "d_drain", "bias", "h_lb", "h_ub"],
            "additionalProperties": False,
            "properties": {
                "t_out_s": {"type": "number", "exclusiveMinimum": 0},
                "iters": {"type": "integer", "minimum": 0},
                "d_near": {"type": "number", "exclusiveMinimum": 0},
                "d_drain": {"type": "number", "exclusiveMinimum": 0},
                "bias": {"type": "number", "minimum": 0, "maximum": 1},
                "h_lb": {"type": "integer", "minimum": 1},
                "h_ub": {"type": "integer", "minimum": 1},
                "delta": {"type": "number", "exclusiveMinimum": 0},
                "eps_loop": {"type": "number", "exclusiveMinimum": 0},
                "noise_at": {"enum": ["predicted", "current"]},
            },
        },
        "lqr": {
            "type": "object", "required": ["Q", "R", "horizon"], "additionalProperties": False,
            "properties": {"Q": _mat, "R": _mat, "horizon": {"type": "integer", "minimum": 1},
                           "Q_by_mode": {"type": "object", "additionalProperties": _mat,
                                         "propertyNames": {"pattern": "^-?[0-9]+$"}}},
        },
        "constants": {"type": "object", "additionalProperties": _num},
    },
}

DEFAULT_PARAMS = {"delta": 1e-4, "eps_loop": 1e-6, "noise_at": "predicted"}
BUILTIN = ("lightdark", "manipulation", "unreachable")


class ScenarioError(ValueError):
    """Invalid scenario; ``problems`` lists every issue as ``pointer: message``."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class Scenario:
    raw: dict
    system: SwitchedSystem
    init: GaussianBelief
    formula: Formula
    params: FeasibilityParams
    lqr: LqrParams

    @property
    def formula_text(self) -> str:
        return self.raw["formula"]

    @property
    def constants(self) -> dict[str, float]:
        return dict(self.raw.get("constants", {}))

    def dump(self) -> dict:
        return copy.deepcopy(self.raw)


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path)


def _shape(ptr: str, value, rows: int, cols: int, problems: list[str]) -> np.ndarray | None:
    arr = np.asarray(value, dtype=float)
    if rows == 0 or cols == 0:
        if arr.size == 0:
            return np.zeros((rows, cols))
    if arr.ndim != 2 or arr.shape != (rows, cols):
        problems.append(f"{ptr}: expected a {rows}x{cols} matrix, got shape {list(np.shape(value))}")
        return None
    return arr


def _polytope(ptr: str, d: dict, dim: int, problems: list[str]) -> Polytope | None:
    H = np.asarray(d["H"], dtype=float)
    c = np.asarray(d["c"], dtype=float)
    if H.ndim != 2 or H.shape[1] != dim or c.shape != (H.shape[0],):
        problems.append(f"{ptr}: H must be k x {dim} with c of length k")
        return None
    P = Polytope(H, c)
    if P.is_empty():
        problems.append(f"{ptr}: polytope is empty")
        return None
    return P


def scenario_from_dict(data: dict) -> Scenario:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        problems = []
        for e in errors:
            path = list(e.absolute_path)
            if e.validator == "required":
                missing = e.message.split("'")[1]
                path = path + [missing]
            problems.append(f"{_pointer(path)}: {e.message}")
        raise ScenarioError(problems)

    raw = copy.deepcopy(data)
    raw["params"] = {**DEFAULT_PARAMS, **raw["params"]}
    raw.setdefault("constants", {})
    raw["lqr"].setdefault("Q_by_mode", {})
    n, m, p = raw["n"], raw["m"], raw["p"]
    consts = raw["constants"]
    problems: list[str] = []

    modes = []
    ids = [md["id"] for md in raw["modes"]]
    if len(set(ids)) != len(ids):
        problems.append("/modes: mode ids must be distinct")
    for i, md in enumerate(raw["modes"]):
        ptr = f"/modes/{i}"
        A = _shape(f"{ptr}/A", md["A"], n, n, problems)
        B = _shape(f"{ptr}/B", md["B"], n, m, problems)
        W = np.asarray(md["W"], dtype=float)
        if W.ndim != 2 or W.shape[0] != n:
            problems.append(f"{ptr}/W: expected {n} rows")
            W = None
        C = _shape(f"{ptr}/C", md["C"], p, n, problems)
        if len(md["noise"]) != p:
            problems.append(f"{ptr}/noise: expected {p} expressions, got {len(md['noise'])}")
        noise = []
        for j, text in enumerate(md["noise"]):
            try:
                noise.append(NoiseExpr.parse(text, n, consts))
            except (NoiseSyntaxError, ValueError) as err:
                problems.append(f"{ptr}/noise/{j}: {err}")
        if all(M is not None for M in (A, B, W, C)) and len(noise) == p == len(md["noise"]):
            try:
                modes.append(Mode(md["id"], A, B, W, C, noise))
            except ModelError as err:
                problems.append(f"{ptr}: {err}")

    U = _polytope("/input_polytope", raw["input_polytope"], m, problems)
    ws = _polytope("/workspace", raw["workspace"], n, problems)

    init = None
    mean = np.asarray(raw["initial_belief"]["mean"], dtype=float)
    if mean.shape != (n,):
        problems.append(f"/initial_belief/mean: expected {n} entries")
    cov = _shape("/initial_belief/cov", raw["initial_belief"]["cov"], n, n, problems)
    if cov is not None and mean.shape == (n,):
        if not np.allclose(cov, cov.T) or np.min(np.linalg.eigvalsh((cov + cov.T) / 2)) < -1e-12:
            problems.append("/initial_belief/cov: covariance must be symmetric positive semidefinite")
        else:
            init = GaussianBelief(mean, cov)

    prm = raw["params"]
    params = None
    try:
        params = FeasibilityParams(prm["iters"], prm["t_out_s"], prm["d_near"], prm["d_drain"], prm["bias"],
                                   prm["h_lb"], prm["h_ub"], prm["delta"], prm["eps_loop"])
    except ValueError as err:
        problems.append(f"/params: {err}")

    lq = raw["lqr"]
    lqr = None
    bad_modes = [q for q in lq["Q_by_mode"] if int(q) not in ids]
    for q in bad_modes:
        problems.append(f"/lqr/Q_by_mode/{q}: unknown mode id")
    Qm = _shape("/lqr/Q", lq["Q"], n, n, problems)
    Rm = _shape("/lqr/R", lq["R"], m, m, problems)
    if Qm is not None and Rm is not None and not bad_modes:
        try:
            lqr = LqrParams(Qm, Rm, lq["horizon"], {int(q): M for q, M in lq["Q_by_mode"].items()})
        except ExecutorError as err:
            problems.append(f"/lqr: {err}")

    system = None
    if len(modes) == len(raw["modes"]) and U is not None and ws is not None and not problems:
        try:
            system = SwitchedSystem.build(modes, U, ws, noise_at=prm["noise_at"])
        except ModelError as err:
            problems.append(f"/modes: {err}")

    formula = None
    try:
        formula = parse(raw["formula"], n, tuple(sorted(set(ids))))
    except FormulaError as err:
        problems.append(f"/formula: {err}")

    if problems:
        raise ScenarioError(problems)
    return Scenario(raw, system, init, formula, params, lqr)


def builtin_path(name: str) -> Path:
    return Path(str(resources.files("prstl_synth") / "scenarios" / f"{name}.json"))


def resolve(path_or_name: str | Path) -> Path:
    p = Path(path_or_name)
    if not p.exists() and p.stem in BUILTIN and p.parent == Path("."):
        return builtin_path(p.stem)
    return p


def load_scenario(path: str | Path) -> Scenario:
    path = resolve(path)
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ScenarioError([f"/: scenario file {path} not found"]) from None
    except json.JSONDecodeError as err:
        raise ScenarioError([f"/: invalid JSON at line {err.lineno} column {err.colno}: {err.msg}"]) from None
    if not isinstance(data, dict):
        raise ScenarioError(["/: scenario must be a JSON object"])
    return scenario_from_dict(data)
