"""The malleable spatial model: clauses in, springs and layouts out.

Ties the grammar to the dynamic system: translates relational clauses
into springs via the lexicon, grows the containment hierarchy, anchors
observed cues as fixed masses with stiff springs, learns distance
scaling factors from observed label pairs, and stretches the model by
the exploration factor after failed goal approaches.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .grammar import (
    Clause,
    HIERARCHY_MARKER,
    LocationalClause,
    PrepositionLexicon,
    RelationalClause,
    DEFAULT_LEXICON,
    CUE_FRAME,
    lexicon_lookup,
)
from .hierarchy import HierarchyGraph
from .model import (
    ABSOLUTE_ANGLE,
    DISTANCE,
    HIERARCHY,
    OBSERVATION,
    OBSERVATION_STIFFNESS,
    RELATIVE_ANGLE,
    TEMPLATE,
    PointMass,
    SpringSpec,
    SystemState,
    wrap_angle,
)
from .solver import ImaginationResult, SolverConfig, add_clauses, imagine

HIERARCHY_STIFFNESS = 0.01

DEFAULT_SCALE_TABLE: dict[tuple[int, int], float] = {
    (1, 1): 4.0,
    (1, 2): 5.0,
    (1, 3): 20.0,
    (2, 2): 15.0,
    (2, 3): 15.0,
    (3, 3): 50.0,
}


class UnknownToponym(KeyError):
    pass


class NonFinitePose(ValueError):
    pass


class NonFiniteCentre(ValueError):
    pass


class NonPositiveWeight(ValueError):
    pass


class NonPositiveRatio(ValueError):
    pass


def _norm_pair(pair: tuple[int, int]) -> tuple[int, int]:
    a, b = pair
    # levels beyond the table clamp to its largest; unknown places are rooms
    a = min(max(int(a), 1), 3)
    b = min(max(int(b), 1), 3)
    return (a, b) if a <= b else (b, a)


class ScalingFactors:
    """Per level-pair distance scales, refined by observed label pairs.

    The stored statistic is the stiffness-weighted mean of observed
    r_o/r_n ratios; the effective scale is that mean times the default.
    """

    def __init__(self, defaults: dict[tuple[int, int], float] | None = None):
        self.defaults = dict(defaults or DEFAULT_SCALE_TABLE)
        self.observations: dict[tuple[int, int], list[tuple[float, float]]] = {}

    def default(self, pair: tuple[int, int]) -> float:
        return self.defaults[_norm_pair(pair)]

    def observe(self, pair: tuple[int, int], stiffness: float, ratio: float) -> None:
        if stiffness <= 0:
            raise NonPositiveWeight(f"stiffness weight must be positive, got {stiffness}")
        if ratio <= 0:
            raise NonPositiveRatio(f"scale ratio must be positive, got {ratio}")
        self.observations.setdefault(_norm_pair(pair), []).append((stiffness, ratio))

    def mean_ratio(self, pair: tuple[int, int]) -> float:
        obs = self.observations.get(_norm_pair(pair))
        if not obs:
            return 1.0
        total_w = sum(k for k, _ in obs)
        return sum(k * r for k, r in obs) / total_w

    def current(self, pair: tuple[int, int]) -> float:
        return self.default(pair) * self.mean_ratio(pair)


@dataclass
class ExplorationFactor:
    """Multiplicative stretch after failed goal approaches; resets on cues."""

    step: float = 1.25
    failures: int = 0

    @property
    def value(self) -> float:
        return self.step ** self.failures

    def bump(self) -> float:
        self.failures += 1
        return self.value

    def reset(self) -> None:
        self.failures = 0


@dataclass
class _ScaledSpring:
    """Bookkeeping for a distance spring whose length tracks alpha and E."""

    spring: SpringSpec
    multiplier: float
    name_a: str
    name_b: str
    ratio_recorded: bool = False


class AbstractMap:
    """Single-owner mutable spatial model driven by clause and cue events."""

    ANCHOR_PREFIX = "@anchor:"

    def __init__(
        self,
        cfg: SolverConfig | None = None,
        lexicon: PrepositionLexicon = DEFAULT_LEXICON,
        scaling: ScalingFactors | None = None,
    ):
        self.cfg = cfg or SolverConfig()
        self.lexicon = lexicon
        self.clauses: list[Clause] = []
        self.hierarchy = HierarchyGraph()
        self.scaling = scaling or ScalingFactors()
        self.exploration = ExplorationFactor()
        self.system = SystemState()
        self.springs: list[SpringSpec] = []
        self.anchors: dict[str, int] = {}
        self.explored_centre: np.ndarray | None = None
        self.last_imagination: ImaginationResult | None = None
        self._scaled: list[_ScaledSpring] = []
        self._observed_positions: dict[str, np.ndarray] = {}

    # -- bookkeeping ----------------------------------------------------

    def level_of(self, toponym: str) -> int:
        return self.hierarchy.level_of(toponym, default=1)

    def _pair_of(self, name_a: str, name_b: str) -> tuple[int, int]:
        return _norm_pair((self.level_of(name_a), self.level_of(name_b)))

    def _effective_length(self, multiplier: float, pair: tuple[int, int]) -> float:
        return multiplier * self.scaling.current(pair) * self.exploration.value

    def _base_length(self, multiplier: float, pair: tuple[int, int]) -> float:
        return multiplier * self.scaling.default(pair)

    def _recompute_lengths(self) -> None:
        for rec in self._scaled:
            pair = self._pair_of(rec.name_a, rec.name_b)
            rec.spring.natural_length = self._effective_length(rec.multiplier, pair)

    def _record_scale_observations(self) -> None:
        for rec in self._scaled:
            if rec.ratio_recorded:
                continue
            pa = self._observed_positions.get(rec.name_a)
            pb = self._observed_positions.get(rec.name_b)
            if pa is None or pb is None:
                continue
            observed = float(np.hypot(*(pa - pb)))
            if observed <= 0.0:
                continue  # coincident labels carry no usable scale
            pair = self._pair_of(rec.name_a, rec.name_b)
            ratio = observed / self._base_length(rec.multiplier, pair)
            self.scaling.observe(pair, rec.spring.stiffness, ratio)
            rec.ratio_recorded = True

    # -- construction helpers --------------------------------------------

    class _Batch:
        """Masses and springs accumulated before one re-imagination."""

        def __init__(self, outer: "AbstractMap"):
            self.outer = outer
            self.new_masses: list[PointMass] = []
            self.pending: dict[str, int] = {}
            self.springs: list[SpringSpec] = []
            self.scaled: list[_ScaledSpring] = []

        def index_of(self, toponym: str, fixed=False, position=(0.0, 0.0)) -> int:
            known = self.outer.system.index.get(toponym)
            if known is not None:
                return known
            if toponym in self.pending:
                return self.pending[toponym]
            idx = self.outer.system.count + len(self.new_masses)
            self.new_masses.append(
                PointMass(toponym, float(position[0]), float(position[1]), fixed=fixed)
            )
            self.pending[toponym] = idx
            return idx

        def add_distance(self, name_a: str, name_b: str, stiffness: float,
                         multiplier: float, origin: str) -> None:
            pair = self.outer._pair_of(name_a, name_b)
            spring = SpringSpec(
                DISTANCE,
                (self.index_of(name_a), self.index_of(name_b)),
                stiffness,
                natural_length=self.outer._effective_length(multiplier, pair),
                origin=origin,
            )
            self.springs.append(spring)
            self.scaled.append(_ScaledSpring(spring, multiplier, name_a, name_b))

    def _anchor_key(self, point: np.ndarray) -> str:
        return f"{point[0]:.9f},{point[1]:.9f}"

    def _ensure_anchor(self, batch: "_Batch", point: np.ndarray) -> int:
        key = self._anchor_key(point)
        if key in self.anchors:
            return self.anchors[key]
        name = f"{self.ANCHOR_PREFIX}{key}"
        idx = batch.index_of(name, fixed=True, position=point)
        self.anchors[key] = idx
        return idx

    def _expand_relational(self, batch: "_Batch", clause: RelationalClause,
                           context_index: int | None = None) -> None:
        result = lexicon_lookup(clause.preposition, len(clause.referents), self.lexicon)
        if result is HIERARCHY_MARKER:
            self._add_hierarchy_edges(batch, clause)
            return
        if clause.context is not None:
            context_index = batch.index_of(clause.context)
        for template in result:
            endpoint_names: list[str | None] = []
            endpoint_indices: list[int | None] = []
            for role in template.endpoints:
                if role == "figure":
                    endpoint_names.append(clause.figure)
                    endpoint_indices.append(batch.index_of(clause.figure))
                elif role.startswith("referent-"):
                    ref = clause.referents[int(role.split("-", 1)[1])]
                    endpoint_names.append(ref)
                    endpoint_indices.append(batch.index_of(ref))
                elif role == "context":
                    endpoint_names.append(clause.context)
                    endpoint_indices.append(context_index)
                else:  # pragma: no cover - lexicon validation prevents this
                    raise ValueError(f"unknown template role {role!r}")
            if template.kind == DISTANCE:
                batch.add_distance(endpoint_names[0], endpoint_names[1],
                                   template.stiffness, template.length_multiplier,
                                   TEMPLATE)
            elif template.kind == ABSOLUTE_ANGLE:
                batch.springs.append(SpringSpec(
                    ABSOLUTE_ANGLE, tuple(endpoint_indices), template.stiffness,
                    natural_angle=template.natural_angle, origin=TEMPLATE,
                ))
            else:
                if any(i is None for i in endpoint_indices):
                    continue  # relative angles need a context; none available
                batch.springs.append(SpringSpec(
                    RELATIVE_ANGLE, tuple(endpoint_indices), template.stiffness,
                    natural_angle=template.natural_angle, origin=TEMPLATE,
                ))

    def _add_hierarchy_edges(self, batch: "_Batch", clause: RelationalClause) -> None:
        parent_first = clause.preposition in self.lexicon.hierarchy_parent
        for referent in clause.referents:
            parent, child = (
                (clause.figure, referent) if parent_first else (referent, clause.figure)
            )
            if self.hierarchy.add_edge(parent, child):
                batch.add_distance(child, parent, HIERARCHY_STIFFNESS, 1.0, HIERARCHY)

    def _commit(self, batch: "_Batch") -> ImaginationResult:
        state, appended = add_clauses(batch.springs, self.system, self.cfg,
                                      batch.new_masses)
        self.springs.extend(appended)
        self._scaled.extend(batch.scaled)
        self._record_scale_observations()
        self._recompute_lengths()
        result = imagine(state, self.springs, self.explored_centre, self.cfg)
        self.system = result.state
        self.last_imagination = result
        return result

    # -- operations -------------------------------------------------------

    def add_symbolic_spatial_info(self, clauses: Sequence[Clause]) -> ImaginationResult | None:
        """Fold new clauses in and re-imagine; None when nothing changed.

        Locational clauses in the list must be world-frame and are
        treated as observations made at their own coordinates.
        """
        relational = [c for c in clauses if isinstance(c, RelationalClause)]
        locational = [c for c in clauses if isinstance(c, LocationalClause)]
        result = None
        if relational:
            batch = self._Batch(self)
            for clause in relational:
                self._expand_relational(batch, clause)
            self.clauses.extend(relational)
            if batch.springs or batch.new_masses:
                result = self._commit(batch)
        for clause in locational:
            if clause.frame == CUE_FRAME:
                raise ValueError(
                    "cue-local locational clauses need a cue pose; "
                    "route them through observe_cue"
                )
            result = self.observe_cue((clause.x, clause.y, 0.0), [clause])
        return result

    def observe_cue(
        self,
        pose: Sequence[float],
        clauses: Sequence[Clause],
        cue_id: str | None = None,
    ) -> ImaginationResult:
        """Reconcile one cue observation: anchor, pin, re-scale, re-imagine."""
        px, py, heading = (float(v) for v in pose)
        if not all(math.isfinite(v) for v in (px, py, heading)):
            raise NonFinitePose(f"non-finite cue pose {pose!r}")
        self.exploration.reset()
        batch = self._Batch(self)
        cue_anchor: int | None = None
        relational: list[RelationalClause] = []

        for clause in clauses:
            if isinstance(clause, RelationalClause):
                relational.append(clause)
                continue
            if clause.frame == CUE_FRAME:
                cos_h, sin_h = math.cos(heading), math.sin(heading)
                point = np.array([
                    px + cos_h * clause.x - sin_h * clause.y,
                    py + sin_h * clause.x + cos_h * clause.y,
                ])
                bearing = None if clause.theta is None else wrap_angle(heading + clause.theta)
            else:
                point = np.array([clause.x, clause.y])
                bearing = clause.theta
            anchor = self._ensure_anchor(batch, point)
            topo = batch.index_of(clause.toponym)
            if clause.r is not None:
                batch.springs.append(SpringSpec(
                    DISTANCE, (topo, anchor), OBSERVATION_STIFFNESS,
                    natural_length=clause.r, origin=OBSERVATION,
                ))
                if clause.r == 0.0:
                    self._observed_positions[clause.toponym] = point.copy()
            if bearing is not None:
                batch.springs.append(SpringSpec(
                    ABSOLUTE_ANGLE, (topo, anchor), OBSERVATION_STIFFNESS,
                    natural_angle=bearing, origin=OBSERVATION,
                ))
            self.clauses.append(clause)

        if relational:
            cue_anchor = self._ensure_anchor(batch, np.array([px, py]))
        for clause in relational:
            self._expand_relational(batch, clause, context_index=cue_anchor)
            self.clauses.append(clause)
        return self._commit(batch)

    def update_scaling_factor(self, pair: tuple[int, int], stiffness: float,
                              ratio: float) -> ScalingFactors:
        """Feed one observed r_o/r_n ratio and refresh spring lengths."""
        self.scaling.observe(pair, stiffness, ratio)
        self._recompute_lengths()
        return self.scaling

    def on_goal_not_found(self) -> ImaginationResult:
        """Stretch every suggested distance spring and re-imagine."""
        self.exploration.bump()
        self._recompute_lengths()
        result = imagine(self.system, self.springs, self.explored_centre, self.cfg)
        self.system = result.state
        self.last_imagination = result
        return result

    def imagined_location(self, goal: str) -> np.ndarray:
        idx = self.system.index.get(goal)
        if idx is None:
            raise UnknownToponym(goal)
        return self.system.positions[idx].copy()

    def ensure_toponym(self, name: str) -> int:
        """Register a constraint-free point-mass for a known-by-name place."""
        idx = self.system.index.get(name)
        if idx is not None:
            return idx
        state, _ = add_clauses([], self.system, self.cfg, [PointMass(name)])
        self.system = state
        return self.system.index[name]

    def set_explored_centre(self, centre: Sequence[float] | None) -> None:
        if centre is None:
            self.explored_centre = None
            return
        arr = np.array([float(centre[0]), float(centre[1])])
        if not np.all(np.isfinite(arr)):
            raise NonFiniteCentre(f"non-finite explored centre {centre!r}")
        self.explored_centre = arr

    def preload_hierarchy(self, graph: HierarchyGraph) -> ImaginationResult | None:
        """Adopt a known containment graph and imagine its suggested layout."""
        from .grammar import hierarchy_to_clauses

        for name, level in graph.levels.items():
            self.hierarchy.add_node(name, level)
        return self.add_symbolic_spatial_info(hierarchy_to_clauses(graph))

    def hierarchy_spring_count(self) -> int:
        return sum(1 for s in self.springs if s.origin == HIERARCHY)

    def layout(self, include_anchors: bool = False) -> dict[str, tuple[float, float]]:
        """Current positions by name; anchor masses filtered out by default."""
        out = {}
        for name, idx in self.system.index.items():
            if not include_anchors and name.startswith(self.ANCHOR_PREFIX):
                continue
            out[name] = (float(self.system.positions[idx, 0]),
                         float(self.system.positions[idx, 1]))
        return out
