import json
import math

import pytest

from amap.grammar import (
    ArityMismatch,
    ClauseSyntaxError,
    DEFAULT_LEXICON,
    EmptyReferents,
    FigureIsReferent,
    HIERARCHY_MARKER,
    LocationalClause,
    NegativeRange,
    NonFiniteCoordinate,
    RelationalClause,
    TEMPLATE_ANGLE_VALUES,
    TEMPLATE_MULTIPLIER_VALUES,
    TEMPLATE_STIFFNESS_VALUES,
    UnknownPreposition,
    clause_to_dict,
    hierarchy_to_clauses,
    lexicon_lookup,
    make_locational,
    make_relational,
    parse_clause_set,
    serialize_clauses,
)
from amap.hierarchy import CyclicGraph, HierarchyGraph
from amap.model import ABSOLUTE_ANGLE, DISTANCE, RELATIVE_ANGLE


class TestMakeRelational:
    def test_between_example(self):
        clause = make_relational("between", "Isla's office", ["entryway", "printer"])
        assert clause.preposition == "between"
        assert clause.figure == "Isla's office"
        assert clause.referents == ("entryway", "printer")
        assert clause.context is None

    def test_hierarchy_kind(self):
        clause = make_relational("in", "A Block", ["University"])
        assert clause.preposition in DEFAULT_LEXICON.hierarchy_prepositions

    def test_unknown_preposition(self):
        with pytest.raises(UnknownPreposition):
            make_relational("hovering-over", "a", ["b"])

    def test_empty_referents(self):
        with pytest.raises(EmptyReferents):
            make_relational("near", "a", [])

    def test_figure_is_referent(self):
        with pytest.raises(FigureIsReferent):
            make_relational("near", "a", ["a", "b"])


class TestMakeLocational:
    def test_label_example(self):
        clause = make_locational("Riko's Office", "world", 5.21, 1.76, 0)
        assert clause.r == 0.0
        assert clause.theta is None

    def test_direction_only(self):
        clause = make_locational("Lion", "cue", 0, 0, None, math.pi / 2)
        assert clause.r is None
        assert clause.theta == pytest.approx(math.pi / 2)

    def test_negative_range(self):
        with pytest.raises(NegativeRange):
            make_locational("Lion", "world", 0, 0, -1)

    def test_non_finite(self):
        with pytest.raises(NonFiniteCoordinate):
            make_locational("Lion", "world", float("inf"), 0)
        with pytest.raises(NonFiniteCoordinate):
            make_locational("Lion", "world", 0, 0, None, float("nan"))

    def test_theta_normalised(self):
        clause = make_locational("Lion", "world", 0, 0, None, 3 * math.pi)
        assert clause.theta == pytest.approx(math.pi)


class TestSerialization:
    def test_paper_clause_round_trips(self):
        text = ('[{"kind":"rel","pred":"between","figure":"Isla\'s office",'
                '"referents":["entryway","printer"]}]')
        clauses = parse_clause_set(text)
        assert len(clauses) == 1
        assert isinstance(clauses[0], RelationalClause)
        assert parse_clause_set(serialize_clauses(clauses)) == clauses

    def test_empty_set(self):
        assert parse_clause_set("[]") == []

    def test_validation_error_carries_index(self):
        with pytest.raises(NegativeRange, match="clause 0"):
            parse_clause_set('[{"kind":"loc","toponym":"Lion","x":0,"y":0,"r":-2}]')

    def test_syntax_error_position(self):
        with pytest.raises(ClauseSyntaxError) as err:
            parse_clause_set('[{"kind":"rel",]')
        assert err.value.line == 1
        assert err.value.offset > 1

    def test_round_trip_bit_exact(self):
        clauses = [
            make_relational("right of", "a", ["b"], "c"),
            make_relational("between", "x", ["y", "z"]),
            make_locational("Lion", "world", 5.21, 1.76, 0),
            make_locational("Owl", "cue", 0.125, -3.5, None, 0.7853981633974483),
            make_locational("Toucan", "world", -1.0, 2.0, 3.25, None),
        ]
        assert parse_clause_set(serialize_clauses(clauses)) == clauses
        # serialised floats survive a second round unchanged
        once = serialize_clauses(clauses)
        twice = serialize_clauses(parse_clause_set(once))
        assert once == twice

    def test_absent_encoded_as_null(self):
        doc = json.loads(serialize_clauses([make_locational("a", "world", 0, 0)]))
        assert doc[0]["r"] is None
        assert doc[0]["theta"] is None


class TestLexiconLookup:
    def test_right_of(self):
        templates = lexicon_lookup("right of", 1)
        kinds = sorted(t.kind for t in templates)
        assert kinds == [DISTANCE, RELATIVE_ANGLE]
        rel = next(t for t in templates if t.kind == RELATIVE_ANGLE)
        assert rel.natural_angle == pytest.approx(math.pi / 2)
        assert rel.stiffness == 1.0
        assert rel.endpoints == ("figure", "referent-0", "context")

    def test_hierarchy_marker(self):
        assert lexicon_lookup("in", 1) is HIERARCHY_MARKER
        assert lexicon_lookup("contains", 2) is HIERARCHY_MARKER

    def test_between_arity(self):
        assert len(lexicon_lookup("between", 2)) == 3
        with pytest.raises(ArityMismatch):
            lexicon_lookup("between", 3)

    def test_unknown(self):
        with pytest.raises(UnknownPreposition):
            lexicon_lookup("hovering-over", 1)

    def test_replication_per_referent(self):
        templates = lexicon_lookup("near", 3)
        assert len(templates) == 3
        assert {t.endpoints[1] for t in templates} == {
            "referent-0", "referent-1", "referent-2"
        }

    def test_cardinal_directions(self):
        north = lexicon_lookup("north of", 1)[0]
        assert north.kind == ABSOLUTE_ANGLE
        assert north.natural_angle == pytest.approx(math.pi / 2)
        assert north.endpoints == ("figure", "referent-0")
        east = lexicon_lookup("east of", 1)[0]
        # encoded from the figure's viewpoint to keep angles in the set
        assert east.endpoints == ("referent-0", "figure")
        assert east.natural_angle == pytest.approx(math.pi)

    def test_lexicon_closure(self):
        for pred in DEFAULT_LEXICON.entries:
            if pred in DEFAULT_LEXICON.hierarchy_prepositions:
                continue
            arity = 2 if pred == "between" else 1
            for t in lexicon_lookup(pred, arity):
                assert t.stiffness in TEMPLATE_STIFFNESS_VALUES
                if t.kind == DISTANCE:
                    assert t.length_multiplier in TEMPLATE_MULTIPLIER_VALUES
                else:
                    assert any(
                        math.isclose(t.natural_angle, v)
                        for v in TEMPLATE_ANGLE_VALUES
                    )


class TestHierarchyToClauses:
    def test_zoo_edge(self):
        graph = HierarchyGraph()
        graph.add_node("Zoo", 3)
        graph.add_node("Zoo Foyer", 2)
        graph.add_edge("Zoo", "Zoo Foyer")
        clauses = hierarchy_to_clauses(graph)
        assert clauses == [RelationalClause("in", "Zoo Foyer", ("Zoo",), None)]

    def test_empty_graph(self):
        assert hierarchy_to_clauses(HierarchyGraph()) == []

    def test_cycle_rejected(self):
        graph = HierarchyGraph()
        graph.add_node("a", 2)
        graph.add_node("b", 1)
        graph.add_edge("a", "b")
        graph.edges.append(("b", "a"))  # bypass add_edge validation
        with pytest.raises(CyclicGraph):
            hierarchy_to_clauses(graph)

    def test_one_clause_per_edge_all_in(self):
        graph = HierarchyGraph()
        graph.add_node("zoo", 3)
        for i, area in enumerate(["a", "b", "c"]):
            graph.add_node(area, 2)
            graph.add_edge("zoo", area)
            for j in range(2):
                room = f"{area}{j}"
                graph.add_node(room, 1)
                graph.add_edge(area, room)
        clauses = hierarchy_to_clauses(graph)
        assert len(clauses) == len(graph.edges)
        assert all(c.preposition == "in" for c in clauses)

    def test_depth_first_deterministic(self):
        graph = HierarchyGraph()
        graph.add_node("root", 3)
        graph.add_node("mid", 2)
        graph.add_node("leaf", 1)
        graph.add_node("mid2", 2)
        graph.add_edge("root", "mid")
        graph.add_edge("mid", "leaf")
        graph.add_edge("root", "mid2")
        figures = [c.figure for c in hierarchy_to_clauses(graph)]
        assert figures == ["mid", "leaf", "mid2"]
        assert figures == [c.figure for c in hierarchy_to_clauses(graph)]


class TestClauseDicts:
    def test_rel_schema(self):
        clause = make_relational("right of", "a", ["b"], "c")
        assert clause_to_dict(clause) == {
            "kind": "rel", "pred": "right of", "figure": "a",
            "referents": ["b"], "context": "c",
        }

    def test_loc_schema(self):
        clause = make_locational("Lion", "cue", 1.5, -2.0, 0, None)
        assert clause_to_dict(clause) == {
            "kind": "loc", "toponym": "Lion", "frame": "cue",
            "x": 1.5, "y": -2.0, "r": 0.0, "theta": None,
        }
