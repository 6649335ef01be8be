"""Command-line front end.

Exit codes: 0 ok, 1 usage, 2 parse or validation error, 3 infeasible or a
limit was hit, 4 oracle mismatch or replay divergence.

``--budget`` and ``--max-level`` override the values in the instance file.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from vpcn.ingest import Instance, InstanceError, load_instance
from vpcn.milp.bnb import ResourceLimit, SolverConfig
from vpcn.milp.builder import InstanceTooLarge, build_model, validate_model
from vpcn.milp.emit import emit_lp, emit_mps
from vpcn.milp.simplex import IterationLimit
from vpcn.milp.solve import OPTIMAL, Solution, solve
from vpcn.oracle import EnvelopeExceeded, brute_force_optimize
from vpcn.replay import ReplayDivergence, replay_solution

OK, USAGE, BAD_INPUT, LIMIT, MISMATCH = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _instance(path: str, args) -> Instance:
    inst = load_instance(path)
    return inst.with_params(budget=getattr(args, "budget", None), max_level=getattr(args, "max_level", None))


def _config(args) -> SolverConfig:
    return SolverConfig(node_limit=args.node_limit, time_limit_ms=args.time_limit_ms, threads=args.threads)


def _write(text: str, out: Optional[str]) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _summary(sol: Solution) -> str:
    lines = [f"status: {sol.status}", f"objective: {sol.objective}",
             f"creation cost: {sol.creation_cost}", f"routing cost: {sol.total_routing_cost()}"]
    for vc in sol.vcs:
        lines.append(f"vc {vc.source}->{vc.target} via {vc.via} level {vc.level} {vc.family} "
                     f"capacity {vc.capacity}")
    return "\n".join(lines) + "\n"


def cmd_optimize(args) -> int:
    inst = _instance(args.instance, args)
    sol = solve(build_model(inst), _config(args))
    sys.stdout.write(_summary(sol))
    if args.out:
        Path(args.out).write_text(sol.dumps())
    return OK if sol.status == OPTIMAL else LIMIT


def cmd_oracle(args) -> int:
    sol = brute_force_optimize(_instance(args.instance, args))
    print(f"objective: {sol.objective}")
    return OK


def _instance_files(paths: Sequence[str]) -> list[Path]:
    files: list[Path] = []
    for p in map(Path, paths):
        files.extend(sorted(p.glob("*.json")) if p.is_dir() else [p])
    return files


def cmd_check(args) -> int:
    worst = OK
    for path in _instance_files(args.instances):
        inst = _instance(str(path), args)
        sol = solve(build_model(inst), _config(args))
        if sol.status != OPTIMAL:
            print(f"{path}: solver {sol.status}")
            worst = max(worst, LIMIT)
            continue
        ref = brute_force_optimize(inst)
        verdict = "ok" if ref.objective == sol.objective else "MISMATCH"
        print(f"{path}: solver {sol.objective} oracle {ref.objective} {verdict}")
        if verdict != "ok":
            worst = MISMATCH
    return worst


def cmd_replay(args) -> int:
    inst = _instance(args.instance, args)
    sol = Solution.from_dict(json.loads(Path(args.solution).read_text()))
    report = replay_solution(inst, sol, order=args.order, on_channel_fees=args.on_channel_fees, strict=False)
    _write(report.dumps(), args.out)
    return OK if report.clean else MISMATCH


def cmd_emit(args) -> int:
    model = build_model(_instance(args.instance, args))
    _write(emit_lp(model) if args.format == "lp" else emit_mps(model), args.out)
    return OK


def cmd_validate(args) -> int:
    problems = validate_model(build_model(_instance(args.instance, args)))
    for p in problems:
        print(p)
    if problems:
        return BAD_INPUT
    print("valid")
    return OK


def _parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vpcn", description="Virtual payment channel placement.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def overrides(p):
        p.add_argument("--budget", type=int, help="override the instance budget")
        p.add_argument("--max-level", type=int, help="override the instance recursion level")

    def solver(p):
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--node-limit", type=int, default=1_000_000)
        p.add_argument("--time-limit-ms", type=int, default=600_000)

    p = sub.add_parser("optimize", help="solve the placement model")
    p.add_argument("instance")
    p.add_argument("--out", help="write the full solution report here")
    overrides(p)
    solver(p)
    p.set_defaults(run=cmd_optimize)

    p = sub.add_parser("oracle", help="exhaustive optimum for a tiny instance")
    p.add_argument("instance")
    overrides(p)
    p.set_defaults(run=cmd_oracle)

    p = sub.add_parser("check", help="compare solver and oracle objectives")
    p.add_argument("instances", nargs="+", help="instance files or directories of them")
    overrides(p)
    solver(p)
    p.set_defaults(run=cmd_check)

    p = sub.add_parser("replay", help="execute a solution report on the channel state machine")
    p.add_argument("instance")
    p.add_argument("solution")
    p.add_argument("--order", choices=("seq", "reverse"), default="seq")
    p.add_argument("--on-channel-fees", action="store_true",
                   help="pay vc creation costs inside the parent channel instead of from the budget")
    p.add_argument("--out")
    overrides(p)
    p.set_defaults(run=cmd_replay)

    p = sub.add_parser("emit", help="write the model as an LP or MPS file")
    p.add_argument("instance")
    p.add_argument("--format", choices=("lp", "mps"), required=True)
    p.add_argument("--out")
    overrides(p)
    p.set_defaults(run=cmd_emit)

    p = sub.add_parser("validate", help="parse and check model structure")
    p.add_argument("instance")
    overrides(p)
    p.set_defaults(run=cmd_validate)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = _parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE
    try:
        return args.run(args)
    except (InstanceError, OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return BAD_INPUT
    except (EnvelopeExceeded, InstanceTooLarge, ResourceLimit, IterationLimit) as exc:
        print(f"limit: {exc}", file=sys.stderr)
        return LIMIT
    except ReplayDivergence as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return MISMATCH


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
