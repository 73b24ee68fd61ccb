"""Command-line entry point: ``prstl-synth <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .abstraction import InitialBeliefError, build_abstraction
from .bmc import bmc_search, product_graph
from .executor import execute, execution_length, monte_carlo
from .formula import TrajectoryError, rho, to_ltl
from .pipeline import Plan, Status, synthesize
from .scenario import ScenarioError, load_scenario

EXIT_OK, EXIT_UNSAT, EXIT_INVALID, EXIT_BUDGET = 0, 1, 2, 3


def write_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def csv_text(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        fields = list(dict.fromkeys(k for r in rows for k in r))
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return buf.getvalue()


def _emit(text: str, out: str | None) -> None:
    if out:
        write_atomic(out, text)
    else:
        sys.stdout.write(text)


def _load_plan(path: str) -> Plan:
    try:
        return Plan.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except (OSError, ValueError, KeyError, TypeError, TrajectoryError) as err:
        raise ScenarioError([f"/: cannot read plan {path}: {err}"]) from None


# --- subcommands -------------------------------------------------------------

def cmd_plan(args) -> int:
    sc = load_scenario(args.scenario)
    res = synthesize(sc, args.seed, max_rounds=args.max_rounds)
    if args.log:
        entries = []
        for e in res.log:
            e = dict(e)
            e.pop("trace", None)
            if e.get("witness") is not None:
                e["witness"] = e["witness"].to_dict()
            if e.get("cex") is not None:
                e["cex"] = e["cex"].to_dict()
            entries.append(e)
        write_atomic(args.log, json_text(entries))
    if args.trace:
        rows = [{"round": r, **row} for r, e in enumerate(x for x in res.log if "trace" in x)
                for row in e["trace"]]
        write_atomic(args.trace, csv_text(rows))
    if res.status is Status.PLAN:
        write_atomic(args.out, json_text(res.plan.to_dict()))
        print(f"plan: K={res.plan.trajectory.K} L={res.plan.trajectory.L} rho={res.plan.rho:.6g}")
        return EXIT_OK
    if res.status is Status.UNSAT:
        print(f"unsat after {len(res.cexs)} counterexample(s)", file=sys.stderr)
        return EXIT_UNSAT
    print(f"budget exhausted after {len(res.witnesses)} witness(es)", file=sys.stderr)
    return EXIT_BUDGET


def cmd_abstraction(args) -> int:
    sc = load_scenario(args.scenario)
    try:
        ts = build_abstraction(sc.formula, sc.system, sc.init)
    except InitialBeliefError as err:
        print(str(err), file=sys.stderr)
        return EXIT_UNSAT
    _emit(json_text(ts.to_dict()), args.out)
    return EXIT_OK


def cmd_rho(args) -> int:
    sc = load_scenario(args.scenario)
    plan = _load_plan(args.plan)
    r = rho(plan.trajectory, sc.formula, 0, sc.system, sc.params.eps_loop)
    print(repr(r))
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    sc = load_scenario(args.scenario)
    plan = _load_plan(args.plan)
    stats = monte_carlo(plan.trajectory, sc.system, sc.formula, args.runs, args.seed, sc.lqr)
    if args.out:
        write_atomic(args.out, csv_text(stats.rows()))
    summary = {"runs": stats.runs, "success_rate": stats.success_rate, "mean_rho": stats.mean_rho,
               "mean_per_instant_product": float(np.mean(stats.per_instant))}
    sys.stdout.write(json_text(summary))
    return EXIT_OK


def cmd_execute(args) -> int:
    sc = load_scenario(args.scenario)
    plan = _load_plan(args.plan)
    steps = args.steps if args.steps is not None else execution_length(plan.trajectory, sc.formula)
    trace = execute(plan.trajectory, sc.system, sc.lqr, np.random.default_rng(args.seed), steps)
    _emit(csv_text(trace.rows()), args.out)
    return EXIT_OK


def cmd_bmc_debug(args) -> int:
    sc = load_scenario(args.scenario)
    try:
        ts = build_abstraction(sc.formula, sc.system, sc.init)
    except InitialBeliefError as err:
        print(str(err), file=sys.stderr)
        return EXIT_UNSAT
    res = bmc_search(ts, to_ltl(sc.formula), [], args.K)
    out = {"K": args.K, "status": res.status.value, "paths_explored": res.paths_explored,
           "witness": None if res.witness is None else res.witness.to_dict(),
           "product": product_graph(ts, [], args.depth if args.depth is not None else args.K)}
    _emit(json_text(out), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="prstl-synth", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="synthesize a plan")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-rounds", type=int, default=50)
    p.add_argument("--log", help="write the CEGIS round log as JSON")
    p.add_argument("--trace", help="write one CSV row per feasibility iteration")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("abstraction", help="dump the abstraction as JSON")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_abstraction)

    p = sub.add_parser("montecarlo", help="Monte Carlo validation of a plan")
    p.add_argument("--scenario", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", help="per-run CSV")
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("execute", help="simulate one execution as per-step CSV")
    p.add_argument("--scenario", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_execute)

    p = sub.add_parser("rho", help="recompute the robustness of a stored plan")
    p.add_argument("--scenario", required=True)
    p.add_argument("--plan", required=True)
    p.set_defaults(func=cmd_rho)

    p = sub.add_parser("bmc-debug", help="product graph and first witness at a bound")
    p.add_argument("--scenario", required=True)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--depth", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bmc_debug)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as err:
        return EXIT_INVALID if err.code else EXIT_OK
    try:
        return args.func(args)
    except ScenarioError as err:
        for problem in err.problems:
            print(f"error: {problem}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
