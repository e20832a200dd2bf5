"""corridor-planner command line: check, plan, simulate, bench."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bench import bench
from .config import apply_overrides
from .errors import ParseError, TraceIOError, ValidationError
from .planner import plan_cycle
from .scenario import Scenario, load_scenario, validate
from .sim import simulate
from .trace import FORMATS, emit_plan, emit_trace

EXIT_OK = 0
EXIT_ERROR = 1  # parse, validation or I/O trouble
EXIT_DEGRADED = 2  # fallback plan, or a run that ended without reaching the goal
EXIT_COLLISION = 3
EXIT_GATE = 4  # QP p99 above the bench gate

LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


def configure_logging() -> None:
    name = os.environ.get("CORRIDOR_PLANNER_LOG", "warn").strip().lower()
    logging.basicConfig(
        level=LOG_LEVELS.get(name, logging.WARNING),
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def load(path: str | Path, overrides: list[str]) -> Scenario:
    """Read, override and validate one scenario file.

    Raises:
        OSError: the file cannot be read.
        ParseError: malformed scenario or override.
        ValidationError: the (overridden) scenario is invalid.
    """
    scenario = load_scenario(Path(path).read_text(encoding="utf-8"))
    if overrides:
        scenario = scenario.with_config(apply_overrides(scenario.config, overrides))
        problems = validate(scenario)
        if problems:
            raise ValidationError(problems)
    if not scenario.name:
        scenario = replace(scenario, name=Path(path).stem)
    return scenario


def _formats(args: argparse.Namespace) -> list[str]:
    return args.format or ["csv", "json"]


# ── subcommands ───────────────────────────────────────────────


def cmd_check(args: argparse.Namespace) -> int:
    status = EXIT_OK
    for path in args.scenarios:
        try:
            load(path, args.set)
        except ValidationError as e:
            status = EXIT_ERROR
            print(f"{path}: INVALID")
            for v in e.violations:
                print(f"  - {v}")
            continue
        except (ParseError, OSError) as e:
            status = EXIT_ERROR
            print(f"{path}: INVALID")
            print(f"  - {e}")
            continue
        print(f"{path}: OK" if len(args.scenarios) > 1 else "OK")
    return status


def cmd_plan(args: argparse.Namespace) -> int:
    scenario = load(args.scenario, args.set)
    trajectory = plan_cycle(scenario)
    for p in emit_plan(trajectory, args.out, scenario.name, _formats(args)):
        print(p)
    if trajectory.provenance != "nominal":
        print(f"fallback: {trajectory.diagnostics.fallback_reason}", file=sys.stderr)
        return EXIT_DEGRADED
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    scenario = load(args.scenario, args.set)
    trace = simulate(scenario, max_cycles=args.max_cycles, seed=args.seed)
    for p in emit_trace(trace, args.out, _formats(args)):
        print(p)
    print(f"outcome: {trace.outcome} after {trace.cycles} cycles")
    if trace.outcome == "goal_reached":
        return EXIT_OK
    if trace.outcome == "collision":
        return EXIT_COLLISION
    return EXIT_DEGRADED


def cmd_bench(args: argparse.Namespace) -> int:
    scenarios = [load(p, args.set) for p in args.scenarios]
    order = np.random.default_rng(args.seed).permutation(len(scenarios))
    report = bench(
        [scenarios[i] for i in order], repetitions=args.reps, warmup=args.warmup, jobs=args.jobs
    )
    print(report.table())
    if args.out:
        out = Path(args.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
            path = out / "bench.json"
            path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
        except OSError as e:
            raise TraceIOError(f"cannot write bench report under {out}: {e}") from e
        print(path)
    return EXIT_OK if report.qp_gate_passed else EXIT_GATE


# ── argument parsing ──────────────────────────────────────────


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="corridor-planner",
        description="Trajectory planner for a low-speed delivery vehicle.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="config override with a dotted key, e.g. planner.v_target=2.5 (repeatable)",
    )
    common.add_argument("--seed", type=int, default=0, help="seed for all random choices")
    common.add_argument(
        "--format",
        action="append",
        choices=FORMATS,
        help="output format (repeatable); default csv and json",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", parents=[common], help="validate scenario files")
    p.add_argument("scenarios", nargs="+")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("plan", parents=[common], help="run a single planning cycle")
    p.add_argument("scenario")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", parents=[common], help="closed-loop simulation")
    p.add_argument("scenario")
    p.add_argument("--out", default="out")
    p.add_argument("--max-cycles", type=int, default=1200)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", parents=[common], help="planner latency benchmark")
    p.add_argument("scenarios", nargs="+")
    p.add_argument("--out", default=None)
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--warmup", type=int, default=20)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_bench)
    return parser


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as e:
        print("Error: invalid scenario:", file=sys.stderr)
        for v in e.violations:
            print(f"  - {v}", file=sys.stderr)
    except (ParseError, TraceIOError) as e:
        print(f"Error: {e}", file=sys.stderr)
    except OSError as e:
        print(f"Error: {e}", file=sys.stderr)
    return EXIT_ERROR


def main() -> None:
    configure_logging()
    sys.exit(run())


if __name__ == "__main__":
    main()
