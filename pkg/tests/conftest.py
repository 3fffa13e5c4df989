import json

import pytest

from amap.world import load_world


def corridor_doc():
    """Straight 12 x 4 m corridor: a directional cue at the start points
    at the goal label 6 m further down."""
    cols, rows = 48, 16
    middle = "#" + "." * (cols - 2) + "#"
    grid = ["#" * cols] + [middle] * (rows - 2) + ["#" * cols]
    return {
        "name": "corridor",
        "resolution": 0.25,
        "grid": grid,
        "origin": [0.0, 0.0],
        "robot_start": [1.5, 2.0],
        "hierarchy": {"nodes": [], "edges": []},
        "cues": [
            {
                "id": "start-sign",
                "pos": [2.0, 2.0],
                "heading": 0.0,
                "clauses": [
                    {"kind": "loc", "toponym": "Exit Door", "frame": "cue",
                     "x": 0.0, "y": 0.0, "r": None, "theta": 0.0},
                ],
            },
            {
                "id": "goal-label",
                "pos": [8.0, 2.0],
                "heading": 0.0,
                "clauses": [
                    {"kind": "loc", "toponym": "Exit Door", "frame": "cue",
                     "x": 0.0, "y": 0.0, "r": 0.0, "theta": None},
                ],
            },
        ],
        "goals": ["Exit Door"],
    }


def phantom_doc():
    """Open room where 'Phantom' is described near a labelled storeroom
    but never labelled itself: trials for it must run out of budget."""
    cols, rows = 40, 40
    middle = "#" + "." * (cols - 2) + "#"
    grid = ["#" * cols] + [middle] * (rows - 2) + ["#" * cols]
    return {
        "name": "phantom-room",
        "resolution": 0.25,
        "grid": grid,
        "origin": [0.0, 0.0],
        "robot_start": [2.0, 2.0],
        "hierarchy": {"nodes": [], "edges": []},
        "cues": [
            {
                "id": "store-label",
                "pos": [4.5, 2.0],
                "heading": 0.0,
                "clauses": [
                    {"kind": "loc", "toponym": "Storeroom", "frame": "cue",
                     "x": 0.0, "y": 0.0, "r": 0.0, "theta": None},
                    {"kind": "rel", "pred": "near", "figure": "Phantom",
                     "referents": ["Storeroom"], "context": None},
                ],
            },
        ],
        "goals": ["Storeroom"],
    }


@pytest.fixture
def corridor_scenario():
    return load_world(json.dumps(corridor_doc()))


@pytest.fixture
def phantom_scenario():
    return load_world(json.dumps(phantom_doc()))
