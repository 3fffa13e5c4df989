"""Desk-scale 2D trial world: occupancy grid, cue placements, robot
kinematics, raycast exploration, cue detection, and path planning."""
from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .grammar import (
    Clause,
    ClauseError,
    CUE_FRAME,
    LocationalClause,
    RelationalClause,
    clause_from_dict,
    make_locational,
)
from .hierarchy import HierarchyGraph, InvalidHierarchy, CyclicGraph
from .model import wrap_angle

SENSE_RADIUS = 4.0
ROBOT_SPEED = 0.5
CONTROL_DT = 0.1
DEFAULT_RESOLUTION = 0.25

WALL_CHAR = "#"
FREE_CHAR = "."


class SchemaError(ValueError):
    pass


class CueOnWall(SchemaError):
    pass


class GoalUnreachableByLabel(SchemaError):
    pass


class NoProgress(RuntimeError):
    """The robot is boxed in; the trial aborts as a failure."""


@dataclass
class WorldMap:
    """Rectangular occupancy grid; row 0 is the top (max-y) row."""

    resolution: float
    walls: np.ndarray
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        self.walls = np.asarray(self.walls, dtype=bool)
        if self.resolution <= 0:
            raise SchemaError("resolution must be positive")
        if self.walls.ndim != 2 or min(self.walls.shape) < 3:
            raise SchemaError("grid must be at least 3x3")
        border = np.concatenate([
            self.walls[0], self.walls[-1], self.walls[:, 0], self.walls[:, -1]
        ])
        if not border.all():
            raise SchemaError("grid border must be all walls")

    @property
    def rows(self) -> int:
        return self.walls.shape[0]

    @property
    def cols(self) -> int:
        return self.walls.shape[1]

    def cell_of(self, x: float, y: float) -> tuple[int, int] | None:
        """(col, row) of the cell containing a world point, None outside."""
        col = math.floor((x - self.origin[0]) / self.resolution)
        from_bottom = math.floor((y - self.origin[1]) / self.resolution)
        row = self.rows - 1 - from_bottom
        if 0 <= col < self.cols and 0 <= row < self.rows:
            return col, row
        return None

    def centre_of(self, col: int, row: int) -> np.ndarray:
        return np.array([
            self.origin[0] + (col + 0.5) * self.resolution,
            self.origin[1] + (self.rows - 1 - row + 0.5) * self.resolution,
        ])

    def is_wall_cell(self, cell: tuple[int, int] | None) -> bool:
        if cell is None:
            return True
        return bool(self.walls[cell[1], cell[0]])

    def is_free_point(self, x: float, y: float) -> bool:
        cell = self.cell_of(x, y)
        return cell is not None and not self.walls[cell[1], cell[0]]


@dataclass
class CuePlacement:
    """A navigation cue fixed in the world, carrying a clause payload."""

    id: str
    position: np.ndarray
    heading: float
    clauses: list[Clause]


@dataclass
class Scenario:
    name: str
    world: WorldMap
    cues: list[CuePlacement]
    hierarchy: HierarchyGraph
    robot_start: np.ndarray
    goals: list[str]
    raw: dict = field(repr=False, default_factory=dict)

    def cue_by_id(self, cue_id: str) -> CuePlacement:
        for cue in self.cues:
            if cue.id == cue_id:
                return cue
        raise KeyError(cue_id)


@dataclass
class RobotState:
    position: np.ndarray
    heading: float = 0.0
    odometry_distance: float = 0.0
    explored: np.ndarray | None = None
    observed_cues: set[str] = field(default_factory=set)
    explored_version: int = 0
    _plan_key: tuple | None = field(default=None, repr=False)
    _plan_path: list | None = field(default=None, repr=False)
    _subgoal: tuple | None = field(default=None, repr=False)
    _subgoal_target: np.ndarray | None = field(default=None, repr=False)


def make_robot(scenario: Scenario) -> RobotState:
    world = scenario.world
    return RobotState(
        position=np.asarray(scenario.robot_start, dtype=float).copy(),
        explored=np.zeros((world.rows, world.cols), dtype=bool),
    )


@dataclass
class CueObservation:
    """One detected cue: its pose and the payload in world frame."""

    cue_id: str
    pose: tuple[float, float, float]
    clauses: list[Clause]


def goal_label_cues(scenario: Scenario, goal: str) -> list[CuePlacement]:
    """Cues whose payload carries the goal's label (a zero-range pin)."""
    out = []
    for cue in scenario.cues:
        for clause in cue.clauses:
            if isinstance(clause, LocationalClause) and clause.toponym == goal \
                    and clause.r == 0.0:
                out.append(cue)
                break
    return out


def load_world(text: str) -> Scenario:
    """Parse and fully validate a scenario document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"scenario is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise SchemaError("scenario document must be a JSON object")

    name = doc.get("name")
    if not isinstance(name, str) or not name:
        raise SchemaError("scenario needs a non-empty name")
    resolution = doc.get("resolution", DEFAULT_RESOLUTION)
    if not isinstance(resolution, (int, float)) or resolution <= 0:
        raise SchemaError("resolution must be a positive number")
    grid = doc.get("grid")
    if not isinstance(grid, list) or not grid or not all(isinstance(r, str) for r in grid):
        raise SchemaError("grid must be a list of row strings")
    width = len(grid[0])
    if any(len(r) != width for r in grid):
        raise SchemaError("grid rows must all have the same length")
    bad = {c for row in grid for c in row} - {WALL_CHAR, FREE_CHAR}
    if bad:
        raise SchemaError(f"grid contains unknown cell characters {sorted(bad)}")
    walls = np.array([[c == WALL_CHAR for c in row] for row in grid], dtype=bool)
    origin = tuple(doc.get("origin", (0.0, 0.0)))
    if len(origin) != 2:
        raise SchemaError("origin must be [x, y]")
    world = WorldMap(float(resolution), walls, (float(origin[0]), float(origin[1])))

    start = doc.get("robot_start")
    if not isinstance(start, (list, tuple)) or len(start) != 2:
        raise SchemaError("robot_start must be [x, y]")
    start = np.array([float(start[0]), float(start[1])])
    if not world.is_free_point(*start):
        raise SchemaError(f"robot_start {start.tolist()} is not on a free cell")

    hierarchy = HierarchyGraph()
    hdoc = doc.get("hierarchy", {})
    try:
        for node in hdoc.get("nodes", []):
            hierarchy.add_node(node["name"], int(node["level"]))
        for parent, child in hdoc.get("edges", []):
            hierarchy.add_edge(parent, child)
        hierarchy.validate()
    except (KeyError, TypeError) as e:
        raise SchemaError(f"malformed hierarchy: {e}") from e
    except (InvalidHierarchy, CyclicGraph) as e:
        raise SchemaError(f"invalid hierarchy: {e}") from e

    cues: list[CuePlacement] = []
    seen_ids: set[str] = set()
    for i, cdoc in enumerate(doc.get("cues", [])):
        try:
            cue_id = cdoc["id"]
            pos = np.array([float(cdoc["pos"][0]), float(cdoc["pos"][1])])
            heading = float(cdoc.get("heading", 0.0))
            clauses = [clause_from_dict(c) for c in cdoc.get("clauses", [])]
        except (KeyError, TypeError, IndexError) as e:
            raise SchemaError(f"malformed cue entry {i}: {e}") from e
        except ClauseError as e:
            raise SchemaError(f"cue {cdoc.get('id', i)!r} has a bad clause: {e}") from e
        if cue_id in seen_ids:
            raise SchemaError(f"duplicate cue id {cue_id!r}")
        seen_ids.add(cue_id)
        if not world.is_free_point(*pos):
            raise CueOnWall(f"cue {cue_id!r} at {pos.tolist()} is not on a free cell")
        cues.append(CuePlacement(cue_id, pos, heading, clauses))

    goals = doc.get("goals", [])
    if not isinstance(goals, list) or not all(isinstance(g, str) for g in goals):
        raise SchemaError("goals must be a list of toponyms")
    scenario = Scenario(name, world, cues, hierarchy, start, list(goals), doc)
    for goal in goals:
        if not goal_label_cues(scenario, goal):
            raise GoalUnreachableByLabel(
                f"goal {goal!r} never appears as a label on any cue"
            )
    return scenario


# -- sensing ---------------------------------------------------------------

_RAY_CACHE: dict[float, np.ndarray] = {}


def _ray_offsets(resolution: float) -> np.ndarray:
    key = round(resolution, 9)
    if key not in _RAY_CACHE:
        angles = np.deg2rad(np.arange(360.0))
        dirs = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
        step = resolution * 0.5
        dists = np.arange(step, SENSE_RADIUS + step * 0.5, step)
        _RAY_CACHE[key] = dirs[:, None, :] * dists[None, :, None]
    return _RAY_CACHE[key]


def sense(scenario: Scenario, robot: RobotState):
    """360-degree raycast exploration plus line-of-sight cue detection.

    Free cells hit by a ray are marked explored; rays stop at walls.
    A cue is reported once per trial, when within range with a clear
    straight segment, its cue-local clauses rewritten to world frame.
    """
    world = scenario.world
    points = robot.position[None, None, :] + _ray_offsets(world.resolution)
    cols = np.floor((points[..., 0] - world.origin[0]) / world.resolution).astype(int)
    from_bottom = np.floor((points[..., 1] - world.origin[1]) / world.resolution).astype(int)
    rows_idx = world.rows - 1 - from_bottom
    inside = (cols >= 0) & (cols < world.cols) & (rows_idx >= 0) & (rows_idx < world.rows)
    cols_c = np.clip(cols, 0, world.cols - 1)
    rows_c = np.clip(rows_idx, 0, world.rows - 1)
    blockers = world.walls[rows_c, cols_c] | ~inside
    hit_before = np.cumsum(blockers, axis=1) - blockers
    visible = (hit_before == 0) & ~blockers
    # the first wall a ray hits is seen as well: the robot knows that
    # surface the way its mapping stack would
    wall_face = (hit_before == 0) & blockers & inside

    flat = np.concatenate([
        rows_c[visible] * world.cols + cols_c[visible],
        rows_c[wall_face] * world.cols + cols_c[wall_face],
    ])
    own = world.cell_of(*robot.position)
    if own is not None and not world.walls[own[1], own[0]]:
        flat = np.append(flat, own[1] * world.cols + own[0])
    flat = np.unique(flat)
    already = robot.explored.reshape(-1)[flat]
    fresh = flat[~already]
    robot.explored.reshape(-1)[fresh] = True
    new_cells = [(int(f % world.cols), int(f // world.cols)) for f in fresh]
    if new_cells:
        robot.explored_version += 1

    observations: list[CueObservation] = []
    for cue in scenario.cues:
        if cue.id in robot.observed_cues:
            continue
        offset = cue.position - robot.position
        if math.hypot(offset[0], offset[1]) > SENSE_RADIUS:
            continue
        if not line_of_sight(world, robot.position, cue.position):
            continue
        robot.observed_cues.add(cue.id)
        observations.append(CueObservation(
            cue.id,
            (float(cue.position[0]), float(cue.position[1]), float(cue.heading)),
            [_to_world_frame(c, cue) for c in cue.clauses],
        ))
    return new_cells, observations


def _to_world_frame(clause: Clause, cue: CuePlacement) -> Clause:
    if not isinstance(clause, LocationalClause) or clause.frame != CUE_FRAME:
        return clause
    cos_h, sin_h = math.cos(cue.heading), math.sin(cue.heading)
    x = cue.position[0] + cos_h * clause.x - sin_h * clause.y
    y = cue.position[1] + sin_h * clause.x + cos_h * clause.y
    theta = None if clause.theta is None else wrap_angle(cue.heading + clause.theta)
    return make_locational(clause.toponym, "world", x, y, clause.r, theta)


def supercover_cells(world: WorldMap, p0, p1) -> Iterator[tuple[int, int]]:
    """Cells a segment passes through, both side cells on corner hits."""
    res = world.resolution
    x0 = (p0[0] - world.origin[0]) / res
    y0 = (p0[1] - world.origin[1]) / res
    x1 = (p1[0] - world.origin[0]) / res
    y1 = (p1[1] - world.origin[1]) / res
    cx, cy = math.floor(x0), math.floor(y0)
    ex, ey = math.floor(x1), math.floor(y1)
    dx, dy = x1 - x0, y1 - y0
    step_x = 1 if dx > 0 else -1
    step_y = 1 if dy > 0 else -1

    def to_cell(col, fb_row):
        return col, world.rows - 1 - fb_row

    inf = math.inf
    t_max_x = ((cx + (step_x > 0)) - x0) / dx if dx != 0 else inf
    t_max_y = ((cy + (step_y > 0)) - y0) / dy if dy != 0 else inf
    t_dx = abs(1.0 / dx) if dx != 0 else inf
    t_dy = abs(1.0 / dy) if dy != 0 else inf

    yield to_cell(cx, cy)
    guard = 2 * (abs(ex - cx) + abs(ey - cy)) + 8
    for _ in range(guard):
        if cx == ex and cy == ey:
            return
        if abs(t_max_x - t_max_y) < 1e-12:
            # exact corner crossing: conservatively include both side cells
            yield to_cell(cx + step_x, cy)
            yield to_cell(cx, cy + step_y)
            cx += step_x
            cy += step_y
            t_max_x += t_dx
            t_max_y += t_dy
        elif t_max_x < t_max_y:
            if t_max_x > 1.0:
                return
            cx += step_x
            t_max_x += t_dx
        else:
            if t_max_y > 1.0:
                return
            cy += step_y
            t_max_y += t_dy
        yield to_cell(cx, cy)


def line_of_sight(world: WorldMap, p0, p1) -> bool:
    """True when the straight segment crosses no wall cell."""
    for col, row in supercover_cells(world, p0, p1):
        if not (0 <= col < world.cols and 0 <= row < world.rows):
            return False
        if world.walls[row, col]:
            return False
    return True


def centre_of_explored_mass(world: WorldMap, robot: RobotState) -> np.ndarray | None:
    """Centroid of explored cell centres; None before anything is seen."""
    idx = np.argwhere(robot.explored)
    if idx.size == 0:
        return None
    rows_idx = idx[:, 0].astype(float)
    cols = idx[:, 1].astype(float)
    x = world.origin[0] + (cols + 0.5) * world.resolution
    y = world.origin[1] + (world.rows - 1 - rows_idx + 0.5) * world.resolution
    return np.array([x.mean(), y.mean()])


# -- planning ----------------------------------------------------------------

_NEIGHBOURS = (
    (1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
    (1, 1, math.sqrt(2)), (1, -1, math.sqrt(2)),
    (-1, 1, math.sqrt(2)), (-1, -1, math.sqrt(2)),
)


def _octile(a: tuple[int, int], b: tuple[int, int]) -> float:
    dx = abs(a[0] - b[0])
    dy = abs(a[1] - b[1])
    lo, hi = (dx, dy) if dx < dy else (dy, dx)
    return hi - lo + lo * math.sqrt(2)


def astar_path(passable: np.ndarray, start: tuple[int, int],
               goal: tuple[int, int]) -> list[tuple[int, int]] | None:
    """8-connected A* over a boolean passability mask; cells are (col, row).

    Diagonal moves may not cut corners: both orthogonal neighbours of a
    diagonal step must be passable, so followed paths never clip walls.
    """
    rows, cols = passable.shape
    if not passable[start[1], start[0]] or not passable[goal[1], goal[0]]:
        return None
    frontier: list[tuple[float, int, tuple[int, int]]] = []
    heapq.heappush(frontier, (_octile(start, goal), 0, start))
    came: dict[tuple[int, int], tuple[int, int] | None] = {start: None}
    g: dict[tuple[int, int], float] = {start: 0.0}
    counter = 1
    while frontier:
        _, _, cell = heapq.heappop(frontier)
        if cell == goal:
            path = [cell]
            while came[path[-1]] is not None:
                path.append(came[path[-1]])
            return path[::-1]
        base = g[cell]
        for dc, dr, cost in _NEIGHBOURS:
            nxt = (cell[0] + dc, cell[1] + dr)
            if not (0 <= nxt[0] < cols and 0 <= nxt[1] < rows):
                continue
            if not passable[nxt[1], nxt[0]]:
                continue
            if dc and dr and not (passable[cell[1], cell[0] + dc]
                                  and passable[cell[1] + dr, cell[0]]):
                continue
            cand = base + cost
            if cand < g.get(nxt, math.inf) - 1e-12:
                g[nxt] = cand
                came[nxt] = cell
                heapq.heappush(frontier, (cand + _octile(nxt, goal), counter, nxt))
                counter += 1
    return None


def _frontier_mask(world: WorldMap, robot: RobotState, passable: np.ndarray) -> np.ndarray:
    # 4-connected adjacency: a wall touched on a diagonal no longer keeps
    # a cell on the frontier, so bumped cells drop out and crawls around
    # obstructions make monotone progress.
    unexplored = ~robot.explored
    near = np.zeros_like(unexplored)
    near[1:, :] |= unexplored[:-1, :]
    near[:-1, :] |= unexplored[1:, :]
    near[:, 1:] |= unexplored[:, :-1]
    near[:, :-1] |= unexplored[:, 1:]
    return passable & near


def _segment_exit_point(world: WorldMap, robot: RobotState, target: np.ndarray,
                        passable: np.ndarray) -> np.ndarray:
    """Where the straight robot->target line leaves known free space."""
    last = robot.position
    for col, row in supercover_cells(world, robot.position, target):
        if not (0 <= col < world.cols and 0 <= row < world.rows):
            break
        if not passable[row, col]:
            break
        last = world.centre_of(col, row)
    return np.asarray(last, dtype=float)


def _nearest_cell(cells: np.ndarray, point: np.ndarray, world: WorldMap,
                  robot_pos: np.ndarray) -> tuple[int, int]:
    rows_idx = cells[:, 0].astype(float)
    cols = cells[:, 1].astype(float)
    cx = world.origin[0] + (cols + 0.5) * world.resolution
    cy = world.origin[1] + (world.rows - 1 - rows_idx + 0.5) * world.resolution
    d_pt = (cx - point[0]) ** 2 + (cy - point[1]) ** 2
    d_rb = (cx - robot_pos[0]) ** 2 + (cy - robot_pos[1]) ** 2
    order = np.lexsort((cells[:, 1], cells[:, 0], d_rb, d_pt))
    best = cells[order[0]]
    return int(best[1]), int(best[0])


def _straight_step_blocked(world: WorldMap, robot: RobotState,
                           target: np.ndarray, start: tuple[int, int]) -> bool:
    """True when walking straight toward the target meets a known wall
    before it reaches unknown space."""
    for cell in supercover_cells(world, robot.position, target):
        if cell == start:
            continue
        if not (0 <= cell[0] < world.cols and 0 <= cell[1] < world.rows):
            return True
        known = robot.explored[cell[1], cell[0]]
        if not known:
            return False
        if world.walls[cell[1], cell[0]]:
            return True
    return False


def _compute_path(world: WorldMap, robot: RobotState, target: np.ndarray,
                  start: tuple[int, int]) -> list[tuple[int, int]]:
    passable = robot.explored & ~world.walls
    if not passable[start[1], start[0]]:
        robot.explored[start[1], start[0]] = True
        passable[start[1], start[0]] = True

    goal_cell: tuple[int, int] | None = None
    tcell = world.cell_of(*target)
    if tcell is not None and passable[tcell[1], tcell[0]]:
        goal_cell = tcell
        robot._subgoal = None
    else:
        blocked = _straight_step_blocked(world, robot, target, start)
        frontier = _frontier_mask(world, robot, passable)
        if blocked:
            # pressing straight would re-hit a known wall: hand the plan
            # to the next frontier over so the robot slides around it
            frontier[start[1], start[0]] = False
        goal_cell = _committed_subgoal(robot, target, start, frontier)
        if goal_cell is None:
            exit_pt = _segment_exit_point(world, robot, target, passable)
            candidates = np.argwhere(frontier)
            if candidates.size:
                goal_cell = _nearest_cell(candidates, exit_pt, world, robot.position)
                robot._subgoal = goal_cell
                robot._subgoal_target = target.copy()
            else:
                free_cells = np.argwhere(passable)
                if blocked:
                    free_cells = free_cells[~((free_cells[:, 0] == start[1])
                                              & (free_cells[:, 1] == start[0]))]
                if not free_cells.size:
                    raise NoProgress("pinned against a known wall with nowhere to go")
                goal_cell = _nearest_cell(free_cells, target, world, robot.position)

    if goal_cell == start:
        robot._subgoal = None
        return [start]
    path = astar_path(passable, start, goal_cell)
    if path is not None:
        return path
    # goal pocket unreachable: head for the reachable cell nearest to it
    reachable = _flood(passable, start)
    cells = np.argwhere(reachable)
    if len(cells) <= 1:
        raise NoProgress("no reachable explored space around the robot")
    goal_pt = world.centre_of(*goal_cell)
    fallback = _nearest_cell(cells, goal_pt, world, robot.position)
    if fallback == start:
        return [start]
    return astar_path(passable, start, fallback) or [start]


def _flood(passable: np.ndarray, start: tuple[int, int]) -> np.ndarray:
    out = np.zeros_like(passable)
    stack = [start]
    out[start[1], start[0]] = True
    rows, cols = passable.shape
    while stack:
        c, r = stack.pop()
        for dc, dr, _ in _NEIGHBOURS:
            nc, nr = c + dc, r + dr
            if not (0 <= nc < cols and 0 <= nr < rows):
                continue
            if dc and dr and not (passable[r, c + dc] and passable[r + dr, c]):
                continue
            if passable[nr, nc] and not out[nr, nc]:
                out[nr, nc] = True
                stack.append((nc, nr))
    return out


def plan_step(world: WorldMap, robot: RobotState, target) -> np.ndarray:
    """Next waypoint toward the target.

    Within explored free space an 8-connected A* routes to the cell
    nearest the straight-line exit toward the target (a frontier cell
    when one exists); beyond known space the plan continues as the
    straight segment to the target itself.
    """
    target = np.asarray(target, dtype=float)
    if not np.all(np.isfinite(target)):
        raise ValueError(f"non-finite plan target {target!r}")
    start = world.cell_of(*robot.position)
    if start is None:
        raise NoProgress("robot left the mapped area")
    key = (start, round(float(target[0]), 3), round(float(target[1]), 3),
           robot.explored_version)
    if robot._plan_key != key:
        robot._plan_path = _compute_path(world, robot, target, start)
        robot._plan_key = key
    path = robot._plan_path
    if len(path) >= 2:
        return world.centre_of(*path[1])
    return target.copy()


def advance_robot(world: WorldMap, robot: RobotState, waypoint, dt: float) -> RobotState:
    """Move toward the waypoint at 0.5 m/s, clipping at wall boundaries.

    A blocked cell is marked explored on contact (touch sensing), which
    invalidates the plan cache so the next tick replans around it.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    wp = np.asarray(waypoint, dtype=float)
    delta = wp - robot.position
    dist = math.hypot(delta[0], delta[1])
    if dist < 1e-12:
        return robot
    direction = delta / dist
    travel = min(ROBOT_SPEED * dt, dist)
    pos = robot.position.copy()
    moved = 0.0
    sub = 0.002
    while moved < travel - 1e-12:
        step = min(sub, travel - moved)
        cand = pos + direction * step
        cell = world.cell_of(*cand)
        if cell is None or world.walls[cell[1], cell[0]]:
            if cell is not None and not robot.explored[cell[1], cell[0]]:
                robot.explored[cell[1], cell[0]] = True
                robot.explored_version += 1
            break
        pos = cand
        moved += step
    displacement = math.hypot(*(pos - robot.position))
    if displacement > 1e-12:
        robot.odometry_distance += displacement
        robot.position = pos
        robot.heading = math.atan2(direction[1], direction[0])
    return robot
