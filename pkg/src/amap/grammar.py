"""Clause grammar for symbolic spatial information and the preposition lexicon.

Two clause shapes cover what navigation cues communicate: relational
clauses ("the office is between the entryway and the printer") and
locational clauses (a label or arrow tying a place name to coordinates,
a range, or a bearing).  The lexicon maps each spatial preposition to
the spring templates that realise it in the dynamic spatial model.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

from .hierarchy import HierarchyGraph
from .model import (
    ABSOLUTE_ANGLE,
    DISTANCE,
    RELATIVE_ANGLE,
    wrap_angle,
)

WORLD_FRAME = "world"
CUE_FRAME = "cue"

TEMPLATE_STIFFNESS_VALUES = frozenset({1.0, 0.5, 0.1, 0.01})
TEMPLATE_MULTIPLIER_VALUES = frozenset({1.0, 0.5})
TEMPLATE_ANGLE_VALUES = frozenset({math.pi, -math.pi, math.pi / 2, -math.pi / 2})


class ClauseError(ValueError):
    """Base for all grammar validation failures."""


class InvalidToponym(ClauseError):
    pass


class UnknownPreposition(ClauseError):
    pass


class EmptyReferents(ClauseError):
    pass


class FigureIsReferent(ClauseError):
    pass


class NegativeRange(ClauseError):
    pass


class NonFiniteCoordinate(ClauseError):
    pass


class ArityMismatch(ClauseError):
    pass


class ClauseSyntaxError(ClauseError):
    """Malformed clause document; carries the 1-based line and column."""

    def __init__(self, message: str, line: int = 0, offset: int = 0):
        super().__init__(message)
        self.line = line
        self.offset = offset


def _check_toponym(name: str) -> str:
    if not isinstance(name, str) or not name:
        raise InvalidToponym(f"toponym must be non-empty text, got {name!r}")
    if any(ord(c) < 0x20 or ord(c) == 0x7F for c in name):
        raise InvalidToponym(f"toponym contains control characters: {name!r}")
    return name


@dataclass(frozen=True)
class RelationalClause:
    """Preposition relating a figure to referents, optionally in a context."""

    preposition: str
    figure: str
    referents: tuple[str, ...]
    context: str | None = None


@dataclass(frozen=True)
class LocationalClause:
    """Place name tied to a point, optionally with range r and bearing theta."""

    toponym: str
    frame: str
    x: float
    y: float
    r: float | None = None
    theta: float | None = None


Clause = Union[RelationalClause, LocationalClause]


@dataclass(frozen=True)
class SpringTemplate:
    """One spring of a preposition's realisation, endpoints given by role.

    Roles are "figure", "context", the generic "referent" (replicated per
    referent at lookup time) or an explicit "referent-<i>" for entries
    with fixed arity.  Distance templates carry a natural-length
    multiplier of the level-pair scale; angle templates carry a natural
    angle.
    """

    kind: str
    endpoints: tuple[str, ...]
    stiffness: float
    length_multiplier: float | None = None
    natural_angle: float | None = None

    def __post_init__(self):
        if self.kind == DISTANCE:
            if len(self.endpoints) != 2 or self.length_multiplier is None \
                    or self.natural_angle is not None:
                raise ValueError(f"malformed distance template {self}")
        elif self.kind in (ABSOLUTE_ANGLE, RELATIVE_ANGLE):
            want = 3 if self.kind == RELATIVE_ANGLE else 2
            if len(self.endpoints) != want or self.natural_angle is None \
                    or self.length_multiplier is not None:
                raise ValueError(f"malformed angle template {self}")
        else:
            raise ValueError(f"unknown spring kind {self.kind!r}")
        if self.stiffness == 2.5:
            raise ValueError("stiffness 2.5 is reserved for observation springs")
        if self.stiffness not in TEMPLATE_STIFFNESS_VALUES:
            raise ValueError(f"template stiffness {self.stiffness} outside the value set")


class _HierarchyMarker:
    def __repr__(self):  # pragma: no cover - debugging aid
        return "<hierarchy preposition>"


HIERARCHY_MARKER = _HierarchyMarker()


@dataclass(frozen=True)
class PrepositionLexicon:
    """Preposition -> spring templates, plus the containment prepositions."""

    entries: Mapping[str, tuple[SpringTemplate, ...]]
    hierarchy_child: frozenset[str]
    hierarchy_parent: frozenset[str]

    def __post_init__(self):
        for pred, templates in self.entries.items():
            if pred in self.hierarchy_prepositions:
                if templates:
                    raise ValueError(f"hierarchy preposition {pred!r} maps to templates")
            elif not templates:
                raise ValueError(f"preposition {pred!r} has no templates")

    @property
    def hierarchy_prepositions(self) -> frozenset[str]:
        return self.hierarchy_child | self.hierarchy_parent

    def knows(self, preposition: str) -> bool:
        return preposition in self.entries or preposition in self.hierarchy_prepositions


def _dist(endpoints, stiffness, multiplier):
    return SpringTemplate(DISTANCE, endpoints, stiffness, length_multiplier=multiplier)


def _abs(endpoints, stiffness, angle):
    return SpringTemplate(ABSOLUTE_ANGLE, endpoints, stiffness, natural_angle=angle)


def _rel(endpoints, stiffness, angle):
    return SpringTemplate(RELATIVE_ANGLE, endpoints, stiffness, natural_angle=angle)


_HALF_PI = math.pi / 2

# World frame: +x east, +y north, angles counter-clockwise from +x.
# "east of" is encoded with swapped endpoints (referent seen from the
# figure points west) so every natural angle stays in {+-pi, +-pi/2}.
DEFAULT_LEXICON = PrepositionLexicon(
    entries={
        "right of": (
            _rel(("figure", "referent", "context"), 1.0, _HALF_PI),
            _dist(("figure", "referent"), 0.1, 0.5),
        ),
        "left of": (
            _rel(("figure", "referent", "context"), 1.0, -_HALF_PI),
            _dist(("figure", "referent"), 0.1, 0.5),
        ),
        "past": (
            _rel(("figure", "referent", "context"), 0.5, math.pi),
            _dist(("figure", "referent"), 0.1, 1.0),
        ),
        "beyond": (
            _rel(("figure", "referent", "context"), 0.5, math.pi),
            _dist(("figure", "referent"), 0.1, 1.0),
        ),
        "between": (
            _dist(("figure", "referent-0"), 0.5, 0.5),
            _dist(("figure", "referent-1"), 0.5, 0.5),
            _rel(("referent-0", "figure", "referent-1"), 0.5, math.pi),
        ),
        "near": (_dist(("figure", "referent"), 1.0, 0.5),),
        "beside": (_dist(("figure", "referent"), 1.0, 0.5),),
        "by": (_dist(("figure", "referent"), 1.0, 0.5),),
        "towards": (
            _rel(("referent", "figure", "context"), 0.5, math.pi),
            _dist(("figure", "referent"), 0.01, 1.0),
        ),
        "north of": (_abs(("figure", "referent"), 1.0, _HALF_PI),),
        "south of": (_abs(("figure", "referent"), 1.0, -_HALF_PI),),
        "west of": (_abs(("figure", "referent"), 1.0, math.pi),),
        "east of": (_abs(("referent", "figure"), 1.0, math.pi),),
        "in": (),
        "inside": (),
        "within": (),
        "contains": (),
    },
    hierarchy_child=frozenset({"in", "inside", "within"}),
    hierarchy_parent=frozenset({"contains"}),
)


def make_relational(
    preposition: str,
    figure: str,
    referents: Sequence[str],
    context: str | None = None,
    lexicon: PrepositionLexicon = DEFAULT_LEXICON,
) -> RelationalClause:
    if not lexicon.knows(preposition):
        raise UnknownPreposition(f"unknown preposition {preposition!r}")
    refs = tuple(_check_toponym(r) for r in referents)
    if not refs:
        raise EmptyReferents("a relational clause needs at least one referent")
    _check_toponym(figure)
    if figure in refs:
        raise FigureIsReferent(f"figure {figure!r} also appears as a referent")
    if context is not None:
        _check_toponym(context)
    return RelationalClause(preposition, figure, refs, context)


def make_locational(
    toponym: str,
    frame: str,
    x: float,
    y: float,
    r: float | None = None,
    theta: float | None = None,
) -> LocationalClause:
    _check_toponym(toponym)
    if frame not in (WORLD_FRAME, CUE_FRAME):
        raise ClauseError(f"unknown reference frame {frame!r}")
    for v in (x, y):
        if not math.isfinite(v):
            raise NonFiniteCoordinate(f"non-finite coordinate {v!r} for {toponym!r}")
    if r is not None:
        if not math.isfinite(r):
            raise NonFiniteCoordinate(f"non-finite range {r!r} for {toponym!r}")
        if r < 0:
            raise NegativeRange(f"range must be >= 0, got {r} for {toponym!r}")
        r = float(r)
    if theta is not None:
        if not math.isfinite(theta):
            raise NonFiniteCoordinate(f"non-finite bearing {theta!r} for {toponym!r}")
        theta = wrap_angle(float(theta))
    return LocationalClause(toponym, frame, float(x), float(y), r, theta)


def lexicon_lookup(
    preposition: str,
    referent_count: int,
    lexicon: PrepositionLexicon = DEFAULT_LEXICON,
):
    """Templates specialised to the referent count, or the hierarchy marker."""
    if not lexicon.knows(preposition):
        raise UnknownPreposition(f"unknown preposition {preposition!r}")
    if preposition in lexicon.hierarchy_prepositions:
        return HIERARCHY_MARKER
    if referent_count < 1:
        raise ArityMismatch(f"{preposition!r} needs at least one referent")
    templates = lexicon.entries[preposition]
    fixed_indices = {
        int(role.split("-", 1)[1])
        for t in templates
        for role in t.endpoints
        if role.startswith("referent-")
    }
    if fixed_indices:
        arity = max(fixed_indices) + 1
        if referent_count != arity:
            raise ArityMismatch(
                f"{preposition!r} takes exactly {arity} referents, got {referent_count}"
            )
        return list(templates)
    out = []
    for i in range(referent_count):
        for t in templates:
            endpoints = tuple(
                f"referent-{i}" if role == "referent" else role for role in t.endpoints
            )
            out.append(
                SpringTemplate(t.kind, endpoints, t.stiffness,
                               t.length_multiplier, t.natural_angle)
            )
    return out


def hierarchy_to_clauses(graph: HierarchyGraph) -> list[RelationalClause]:
    """One "in" clause per containment edge, child as figure, depth first."""
    return [
        make_relational("in", child, [parent])
        for parent, child in graph.edges_depth_first()
    ]


def clause_to_dict(clause: Clause) -> dict:
    if isinstance(clause, RelationalClause):
        return {
            "kind": "rel",
            "pred": clause.preposition,
            "figure": clause.figure,
            "referents": list(clause.referents),
            "context": clause.context,
        }
    if isinstance(clause, LocationalClause):
        return {
            "kind": "loc",
            "toponym": clause.toponym,
            "frame": clause.frame,
            "x": clause.x,
            "y": clause.y,
            "r": clause.r,
            "theta": clause.theta,
        }
    raise ClauseError(f"not a clause: {clause!r}")


def clause_from_dict(obj: dict, lexicon: PrepositionLexicon = DEFAULT_LEXICON) -> Clause:
    if not isinstance(obj, dict):
        raise ClauseError(f"clause must be an object, got {type(obj).__name__}")
    kind = obj.get("kind")
    if kind == "rel":
        return make_relational(
            obj.get("pred"),
            obj.get("figure"),
            obj.get("referents") or (),
            obj.get("context"),
            lexicon=lexicon,
        )
    if kind == "loc":
        missing = [k for k in ("toponym", "x", "y") if obj.get(k) is None]
        if missing:
            raise ClauseError(f"locational clause missing {missing}")
        return make_locational(
            obj["toponym"],
            obj.get("frame", WORLD_FRAME),
            obj["x"],
            obj["y"],
            obj.get("r"),
            obj.get("theta"),
        )
    raise ClauseError(f"unknown clause kind {kind!r}")


def serialize_clauses(clauses: Sequence[Clause]) -> str:
    """UTF-8 JSON array, one document per clause set."""
    return json.dumps([clause_to_dict(c) for c in clauses], ensure_ascii=False)


def parse_clause_set(text: str, lexicon: PrepositionLexicon = DEFAULT_LEXICON) -> list[Clause]:
    """Parse a serialized clause list, reporting position or clause index."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ClauseSyntaxError(
            f"line {e.lineno} column {e.colno}: {e.msg}", e.lineno, e.colno
        ) from e
    if not isinstance(data, list):
        raise ClauseSyntaxError("clause document must be a JSON array")
    clauses = []
    for i, obj in enumerate(data):
        try:
            clauses.append(clause_from_dict(obj, lexicon=lexicon))
        except ClauseError as e:
            raise type(e)(f"clause {i}: {e}") from e
    return clauses
