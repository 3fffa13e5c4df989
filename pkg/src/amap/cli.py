"""Command-line entry points: trial running, clause imagination, replay."""
from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
from pathlib import Path

from .abstract_map import AbstractMap
from .grammar import ClauseError, ClauseSyntaxError, parse_clause_set
from .navigator import ScenarioInvalid, TrialConfig, run_trial
from .solver import SolverConfig
from .svg import render_imagination, render_replay
from .trace import TraceFormatError, read_trace, write_trace
from .world import SchemaError, load_world

log = logging.getLogger("amap")

_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING,
               "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging():
    level = _LOG_LEVELS.get(os.environ.get("AMAP_LOG", "warn").lower(),
                            logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name)


def _load_scenario(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        log.error("cannot read scenario %s: %s", path, e)
        return None
    try:
        return load_world(text)
    except SchemaError as e:
        log.error("invalid scenario %s: %s", path, e)
        return None


def cmd_run(args) -> int:
    scenario = _load_scenario(args.scenario)
    if scenario is None:
        return 1
    if args.all_goals:
        goals = scenario.goals
        seeds = list(range(args.seeds))
    else:
        goals = [args.goal]
        seeds = [args.seed]
    if not goals or goals == [None]:
        log.error("no goal given: use --goal NAME or --all-goals")
        return 1

    out_dir = Path(args.trace) if args.trace else Path(".")
    out_dir.mkdir(parents=True, exist_ok=True)
    solver = SolverConfig()
    summary: dict = {"scenario": scenario.name, "goals": {}}
    any_failure = False

    for goal in goals:
        per_goal = summary["goals"].setdefault(goal, {
            "trials": 0, "successes": 0, "distances": [],
        })
        for seed in seeds:
            trial = TrialConfig(goal=goal, seed=seed,
                                distance_budget=args.max_distance)
            try:
                result, events = run_trial(scenario, trial, solver)
            except ScenarioInvalid as e:
                log.error("scenario rejected: %s", e)
                return 1
            trace_path = out_dir / f"trace_{_slug(goal)}_{seed}.jsonl"
            meta = {
                "scenario": scenario.raw,
                "goal": goal,
                "seed": seed,
                "success": result.success,
                "distance": round(result.distance, 9),
            }
            write_trace(trace_path, meta, events)
            log.info("%s seed %d: %s after %.2f m",
                     goal, seed, "success" if result.success else "failure",
                     result.distance)
            per_goal["trials"] += 1
            per_goal["successes"] += int(result.success)
            per_goal["distances"].append(round(result.distance, 6))
            if not result.success:
                any_failure = True
            if args.svg_every:
                _write_snapshots(out_dir, goal, seed, meta, events, args.svg_every)

    for stats in summary["goals"].values():
        ds = stats["distances"]
        stats["mean_distance"] = round(sum(ds) / len(ds), 6) if ds else None
        stats["min_distance"] = min(ds) if ds else None
        stats["max_distance"] = max(ds) if ds else None
    summary_path = out_dir / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                            encoding="utf-8")
    if not args.all_goals and any_failure:
        return 2
    return 0


def _write_snapshots(out_dir, goal, seed, meta, events, every):
    imagines = sum(1 for e in events if e.kind == "imagine")
    for frame in range(0, imagines, every):
        svg = render_replay(meta, events, frame=frame)
        path = out_dir / f"snap_{_slug(goal)}_{seed}_{frame:03d}.svg"
        path.write_text(svg, encoding="utf-8")


def cmd_imagine(args) -> int:
    try:
        text = Path(args.clauses).read_text(encoding="utf-8")
    except OSError as e:
        log.error("cannot read clause file %s: %s", args.clauses, e)
        return 1
    try:
        clauses = parse_clause_set(text)
    except ClauseSyntaxError as e:
        log.error("clause file %s: %s", args.clauses, e)
        return 1
    except ClauseError as e:
        log.error("clause file %s invalid: %s", args.clauses, e)
        return 1
    amap = AbstractMap()
    result = amap.add_symbolic_spatial_info(clauses)
    energy = result.energy if result is not None else None
    svg = render_imagination(
        amap.system.names, amap.system.positions, amap.springs, energy
    )
    Path(args.out).write_text(svg, encoding="utf-8")
    if args.energy:
        rows = ["t,kinetic,potential"]
        if energy is not None:
            rows += [f"{t!r},{ke!r},{pe!r}" for t, ke, pe in energy]
        Path(args.energy).write_text("\n".join(rows) + "\n", encoding="utf-8")
    return 0


def cmd_replay(args) -> int:
    try:
        meta, events = read_trace(args.trace)
    except OSError as e:
        log.error("cannot read trace %s: %s", args.trace, e)
        return 1
    except TraceFormatError as e:
        log.error("trace %s: %s", args.trace, e)
        return 1
    svg = render_replay(meta, events, frame=args.frame)
    Path(args.out).write_text(svg, encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="amap",
        description="Symbolic navigation trials on imagined spring-mass maps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run navigation trials on a scenario")
    run.add_argument("--scenario", required=True)
    run.add_argument("--goal")
    run.add_argument("--all-goals", action="store_true")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--seeds", type=int, default=1,
                     help="seed count for --all-goals batches")
    run.add_argument("--trace", default="out",
                     help="directory for JSONL traces and summary.json")
    run.add_argument("--svg-every", type=int, default=0, metavar="K",
                     help="write a replay snapshot every K imagine events")
    run.add_argument("--max-distance", type=float, default=500.0)
    run.set_defaults(func=cmd_run)

    imagine_p = sub.add_parser("imagine", help="imagine a clause set into an SVG")
    imagine_p.add_argument("--clauses", required=True)
    imagine_p.add_argument("--out", required=True)
    imagine_p.add_argument("--energy", help="also write the energy series as CSV")
    imagine_p.set_defaults(func=cmd_imagine)

    replay = sub.add_parser("replay", help="render a trial trace as an SVG")
    replay.add_argument("--trace", required=True)
    replay.add_argument("--out", required=True)
    replay.add_argument("--frame", type=int, default=None,
                        help="render as of the n-th imagine event (0-based)")
    replay.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if args.command == "run" and not args.all_goals and args.goal is None:
        log.error("run needs --goal NAME or --all-goals")
        return 1
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
