"""Symbolic navigation on imagined spring-mass spatial models."""

from .abstract_map import (
    AbstractMap,
    ExplorationFactor,
    ScalingFactors,
    UnknownToponym,
)
from .grammar import (
    Clause,
    DEFAULT_LEXICON,
    LocationalClause,
    PrepositionLexicon,
    RelationalClause,
    SpringTemplate,
    hierarchy_to_clauses,
    lexicon_lookup,
    make_locational,
    make_relational,
    parse_clause_set,
    serialize_clauses,
)
from .hierarchy import CyclicGraph, HierarchyGraph
from .model import (
    PointMass,
    SpringSpec,
    SystemState,
    expansion_force,
    friction_force,
    motion_model,
    spring_force,
    total_energy,
    wrap_angle,
)
from .navigator import TrialConfig, TrialResult, run_trial
from .solver import (
    ImaginationResult,
    SolverConfig,
    add_clauses,
    imagine,
    initial_placement,
    rk4_step,
    settled,
)
from .world import (
    CuePlacement,
    RobotState,
    Scenario,
    WorldMap,
    advance_robot,
    centre_of_explored_mass,
    load_world,
    plan_step,
    sense,
)

__version__ = "0.1.0"
