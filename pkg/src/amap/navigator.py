"""The trial control loop: move toward the imagined goal, fold in cue
observations along the way, stretch the model after empty arrivals, and
finish when the goal's label is observed."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .abstract_map import AbstractMap
from .grammar import LocationalClause, clause_to_dict
from .solver import ImaginationResult, NonFiniteState, SolverConfig
from .trace import TraceEvent, downsample_energy
from .world import (
    CONTROL_DT,
    NoProgress,
    ROBOT_SPEED,
    Scenario,
    advance_robot,
    centre_of_explored_mass,
    make_robot,
    plan_step,
    sense,
)
from .grammar import RelationalClause


def _goal_mentioned(scenario: Scenario, goal: str) -> bool:
    if goal in scenario.hierarchy.levels:
        return True
    for cue in scenario.cues:
        for clause in cue.clauses:
            if isinstance(clause, LocationalClause) and clause.toponym == goal:
                return True
            if isinstance(clause, RelationalClause):
                if goal == clause.figure or goal in clause.referents \
                        or goal == clause.context:
                    return True
    return False

STALL_WINDOW_TICKS = 30
STALL_DISTANCE = 1e-3


class ScenarioInvalid(ValueError):
    pass


@dataclass
class TrialConfig:
    goal: str
    goal_reach_radius: float = 1.0
    distance_budget: float = 500.0
    seed: int = 0

    def __post_init__(self):
        if self.goal_reach_radius <= 0:
            raise ValueError("goal_reach_radius must be positive")
        if self.distance_budget <= 0:
            raise ValueError("distance_budget must be positive")


@dataclass
class TrialResult:
    success: bool
    distance: float
    cue_observations: list[tuple[str, float]]
    exploration_steps_fired: int
    elapsed_sim_time: float
    failure_reason: str | None = None


def _mix_seed(base: int, trial_seed: int) -> int:
    return (base * 1000003 + trial_seed * 2654435761 + 1) & 0x7FFFFFFFFFFFFFFF


def _has_goal_label(clauses, goal: str) -> bool:
    return any(
        isinstance(c, LocationalClause) and c.toponym == goal and c.r == 0.0
        for c in clauses
    )


def _imagine_events(t: float, amap: AbstractMap, result: ImaginationResult) -> list[TraceEvent]:
    ke, pe = (float(result.energy[-1, 1]), float(result.energy[-1, 2])) \
        if len(result.energy) else (0.0, 0.0)
    positions = {name: [round(x, 9), round(y, 9)]
                 for name, (x, y) in sorted(amap.layout().items())}
    return [
        TraceEvent(t, "imagine", {
            "settled": result.settled,
            "steps": result.steps,
            "sim_time": round(result.sim_time, 9),
            "kinetic": ke,
            "potential": pe,
            "positions": positions,
        }),
        TraceEvent(t, "energy", {"series": downsample_energy(result.energy)}),
    ]


def run_trial(
    scenario: Scenario,
    trial: TrialConfig,
    solver: SolverConfig | None = None,
) -> tuple[TrialResult, list[TraceEvent]]:
    """Run one symbolic navigation trial; deterministic for fixed inputs."""
    solver = solver or SolverConfig()
    if not _goal_mentioned(scenario, trial.goal):
        raise ScenarioInvalid(
            f"goal {trial.goal!r} never appears in any cue payload or the "
            f"hierarchy of {scenario.name!r}"
        )
    cfg = replace(solver, rng_seed=_mix_seed(solver.rng_seed, trial.seed))
    amap = AbstractMap(cfg=cfg)
    world = scenario.world
    robot = make_robot(scenario)
    events: list[TraceEvent] = []
    t = 0.0

    preload = amap.preload_hierarchy(scenario.hierarchy)
    if preload is not None:
        events.extend(_imagine_events(t, amap, preload))
    amap.ensure_toponym(trial.goal)

    cue_log: list[tuple[str, float]] = []
    exploration_fired = 0
    armed = True
    fired_at: np.ndarray | None = None
    recent = deque(maxlen=STALL_WINDOW_TICKS)
    success = False
    failure_reason: str | None = None

    while True:
        _, observations = sense(scenario, robot)
        for ob in observations:
            try:
                result = amap.observe_cue(ob.pose, ob.clauses, cue_id=ob.cue_id)
            except NonFiniteState:
                failure_reason = "diverged"
                break
            events.append(TraceEvent(t, "cue", {
                "id": ob.cue_id,
                "pose": [round(v, 9) for v in ob.pose],
                "clauses": [clause_to_dict(c) for c in ob.clauses],
                "odometry": round(robot.odometry_distance, 9),
            }))
            events.extend(_imagine_events(t, amap, result))
            cue_log.append((ob.cue_id, robot.odometry_distance))
            armed = True
            recent.clear()
            if _has_goal_label(ob.clauses, trial.goal):
                success = True
        if success or failure_reason:
            break

        amap.set_explored_centre(centre_of_explored_mass(world, robot))
        goal_pos = amap.imagined_location(trial.goal)
        to_goal = goal_pos - robot.position
        if armed and math.hypot(to_goal[0], to_goal[1]) <= trial.goal_reach_radius:
            try:
                result = amap.on_goal_not_found()
            except NonFiniteState:
                failure_reason = "diverged"
                break
            exploration_fired += 1
            events.append(TraceEvent(t, "exploration", {
                "value": amap.exploration.value,
            }))
            events.extend(_imagine_events(t, amap, result))
            armed = False
            fired_at = goal_pos.copy()
            goal_pos = amap.imagined_location(trial.goal)
        elif not armed and fired_at is not None:
            moved = goal_pos - fired_at
            if math.hypot(moved[0], moved[1]) > trial.goal_reach_radius:
                armed = True

        try:
            waypoint = plan_step(world, robot, goal_pos)
        except NoProgress:
            failure_reason = "no-progress"
            break
        remaining = trial.distance_budget - robot.odometry_distance
        dt = min(CONTROL_DT, max(remaining, 0.0) / ROBOT_SPEED)
        if dt <= 0:
            failure_reason = "budget"
            break
        before = robot.odometry_distance
        advance_robot(world, robot, waypoint, dt)
        t = round(t + CONTROL_DT, 9)
        events.append(TraceEvent(t, "pose", {
            "x": round(float(robot.position[0]), 9),
            "y": round(float(robot.position[1]), 9),
            "odometry": round(robot.odometry_distance, 9),
        }))
        recent.append(robot.odometry_distance - before)
        if robot.odometry_distance >= trial.distance_budget - 1e-9:
            failure_reason = "budget"
            break
        if len(recent) == STALL_WINDOW_TICKS and sum(recent) < STALL_DISTANCE:
            failure_reason = "no-progress"
            break

    result = TrialResult(
        success=success,
        distance=float(robot.odometry_distance),
        cue_observations=cue_log,
        exploration_steps_fired=exploration_fired,
        elapsed_sim_time=t,
        failure_reason=None if success else failure_reason,
    )
    events.append(TraceEvent(t, "goal", {
        "success": success,
        "distance": round(result.distance, 9),
        "reason": result.failure_reason,
    }))
    return result, events
