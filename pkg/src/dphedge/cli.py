"""Command-line front end: run experiments, query oracles, project, solve.

Subcommands:
  run      play an experiment from a JSON config, print the summary JSON
  oracle   enumerate / count / brute-force minimize over a graph JSON
  project  project edge weights onto the flow polytope of a graph JSON
  solve    offline min-sum solve of recursion losses over a graph JSON
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .component_hedge import ProjectionConfig, project_kflow, residual_families
from .dp import DpLosses, lower_edge_losses, solve_min_sum
from .harness import ExperimentConfig, run_experiment, summarize, write_trace_csv
from .kdag import (
    build_kdag,
    count_multipaths,
    enumerate_multipaths,
    multipath_loss,
    validate_kdag,
)

__all__ = ["main"]


def _load_json(path: str):
    return json.loads(Path(path).read_text())


def _load_dag(path: str):
    raw = _load_json(path)
    report = validate_kdag(raw)
    if not report.ok:
        for v in report.violations:
            print(f"violation [{v.rule}] {v.subject}: {v.message}", file=sys.stderr)
        raise SystemExit(2)
    return build_kdag(raw)


def _dp_losses_from_json(dag, obj) -> DpLosses:
    from .kdag import _json_name

    lm = np.asarray(obj["multiedge_loss"], dtype=float)
    sinks = {}
    declared = obj.get("sink_loss", {})
    for s in dag.sinks:
        name = dag.name_of(s)
        for key in (name, str(_json_name(name)), str(name)):
            if key in declared:
                sinks[name] = float(declared[key])
                break
        else:
            raise SystemExit(f"missing sink loss for vertex {name!r}")
    return DpLosses(lm, sinks)


def _cmd_run(args: argparse.Namespace) -> int:
    cfg_obj = _load_json(args.config)
    if args.seed is not None:
        cfg_obj["seed"] = args.seed
    if args.algo is not None:
        cfg_obj["algorithm"] = args.algo
    if args.eta is not None:
        cfg_obj["eta"] = args.eta
    cfg = ExperimentConfig.from_dict(cfg_obj)
    trace = run_experiment(cfg)
    if args.out:
        write_trace_csv(trace, args.out)
    summary = summarize(trace)
    print(json.dumps(summary, indent=2))
    bound_ok = summary["within_bound"] in (True, None)
    loss_sup = trace.meta["loss_sup"]
    losses_ok = all(-1e-9 <= r.loss <= loss_sup + 1e-9 for r in trace.records)
    regret_ok = trace.regret >= -1e-9
    if not (bound_ok and losses_ok and regret_ok):
        print("invariant failure: "
              + ("regret bound exceeded; " if not bound_ok else "")
              + ("loss outside [0, B]; " if not losses_ok else "")
              + ("negative regret" if not regret_ok else ""),
              file=sys.stderr)
        return 1
    return 0


def _cmd_oracle(args: argparse.Namespace) -> int:
    dag = _load_dag(args.graph)
    if args.op == "count":
        print(count_multipaths(dag))
        return 0
    paths = enumerate_multipaths(dag, cap=args.cap)
    if args.op == "enumerate":
        print(json.dumps({"count": len(paths), "multipaths": [p.counts.tolist() for p in paths]}))
        return 0
    if args.op == "argmin":
        if not args.losses:
            raise SystemExit("--losses is required for op=argmin")
        losses = _dp_losses_from_json(dag, _load_json(args.losses))
        edge = lower_edge_losses(dag, losses)
        best = min(paths, key=lambda p: multipath_loss(p, edge))
        value = multipath_loss(best, edge)
        print(json.dumps({"value": value, "argmin": best.counts.tolist()}))
        return 0
    raise SystemExit(f"unknown oracle op {args.op!r}")


def _cmd_project(args: argparse.Namespace) -> int:
    dag = _load_dag(args.graph)
    weights = np.asarray(_load_json(args.weights), dtype=float)
    cfg = ProjectionConfig(tol=args.tol, max_cycles=args.max_cycles)
    result = project_kflow(dag, weights, cfg)
    r_src, r_me, r_cons = residual_families(dag, result.w)
    report = {
        "dag_hash": dag.content_hash(),
        "weights": result.w.tolist(),
        "residual": result.residual,
        "residual_families": {"source": r_src, "multiedge": r_me, "conservation": r_cons},
        "converged": result.converged,
        "sweeps": result.sweeps,
        "tool_version": _version(),
    }
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0 if result.converged else 1


def _cmd_solve(args: argparse.Namespace) -> int:
    dag = _load_dag(args.graph)
    losses = _dp_losses_from_json(dag, _load_json(args.losses))
    value, argmin = solve_min_sum(dag, losses)
    print(json.dumps({"value": value, "argmin": argmin.counts.tolist()}))
    return 0


def _version() -> str:
    from . import __version__

    return __version__


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="dphedge",
        description="online learning over dynamic-programming decision graphs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a JSON config")
    p_run.add_argument("--config", required=True, help="experiment config JSON")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None, help="write the per-trial trace CSV here")
    p_run.add_argument("--algo", default=None, choices=["eh", "ch", "fpl", "hedge_oracle"])
    p_run.add_argument("--eta", type=float, default=None)
    p_run.set_defaults(func=_cmd_run)

    p_oracle = sub.add_parser("oracle", help="enumerate, count, or brute-force minimize")
    p_oracle.add_argument("--graph", required=True, help="graph JSON")
    p_oracle.add_argument("--op", required=True, choices=["count", "enumerate", "argmin"])
    p_oracle.add_argument("--losses", default=None, help="recursion losses JSON (argmin)")
    p_oracle.add_argument("--cap", type=int, default=10**6)
    p_oracle.set_defaults(func=_cmd_oracle)

    p_project = sub.add_parser("project", help="project edge weights onto the flow polytope")
    p_project.add_argument("--graph", required=True)
    p_project.add_argument("--weights", required=True, help="JSON array of edge weights")
    p_project.add_argument("--tol", type=float, default=1e-10)
    p_project.add_argument("--max-cycles", type=int, default=10_000)
    p_project.add_argument("--out", default=None)
    p_project.set_defaults(func=_cmd_project)

    p_solve = sub.add_parser("solve", help="offline min-sum solve")
    p_solve.add_argument("--graph", required=True)
    p_solve.add_argument("--losses", required=True, help="recursion losses JSON")
    p_solve.set_defaults(func=_cmd_solve)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
