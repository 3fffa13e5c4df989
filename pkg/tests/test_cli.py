import json

import pytest

from amap.cli import main
from amap.trace import read_trace
from conftest import corridor_doc, phantom_doc


@pytest.fixture
def corridor_path(tmp_path):
    path = tmp_path / "corridor.json"
    path.write_text(json.dumps(corridor_doc()), encoding="utf-8")
    return path


class TestRun:
    def test_single_trial_success(self, corridor_path, tmp_path):
        out = tmp_path / "out"
        code = main(["run", "--scenario", str(corridor_path),
                     "--goal", "Exit Door", "--seed", "1",
                     "--trace", str(out)])
        assert code == 0
        trace = out / "trace_Exit_Door_1.jsonl"
        assert trace.exists()
        meta, events = read_trace(trace)
        assert meta["goal"] == "Exit Door"
        assert events[-1].kind == "goal"
        assert events[-1].payload["success"] is True
        summary = json.loads((out / "summary.json").read_text())
        assert summary["goals"]["Exit Door"]["successes"] == 1

    def test_missing_scenario(self, tmp_path):
        code = main(["run", "--scenario", str(tmp_path / "missing.json"),
                     "--goal", "x", "--trace", str(tmp_path / "o")])
        assert code == 1

    def test_invalid_scenario(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{\"name\": \"x\"}", encoding="utf-8")
        code = main(["run", "--scenario", str(bad), "--goal", "x",
                     "--trace", str(tmp_path / "o")])
        assert code == 1

    def test_single_failure_exit_code(self, corridor_path, tmp_path):
        code = main(["run", "--scenario", str(corridor_path),
                     "--goal", "Exit Door", "--seed", "1",
                     "--max-distance", "0.5",
                     "--trace", str(tmp_path / "o")])
        assert code == 2

    def test_batch_all_goals(self, corridor_path, tmp_path):
        out = tmp_path / "batch"
        code = main(["run", "--scenario", str(corridor_path),
                     "--all-goals", "--seeds", "2", "--trace", str(out)])
        assert code == 0
        assert (out / "trace_Exit_Door_0.jsonl").exists()
        assert (out / "trace_Exit_Door_1.jsonl").exists()
        summary = json.loads((out / "summary.json").read_text())
        row = summary["goals"]["Exit Door"]
        assert row["trials"] == 2
        assert row["mean_distance"] == pytest.approx(
            sum(row["distances"]) / 2, abs=1e-9
        )
        assert row["min_distance"] <= row["mean_distance"] <= row["max_distance"]

    def test_byte_identical_reruns(self, corridor_path, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            assert main(["run", "--scenario", str(corridor_path),
                         "--goal", "Exit Door", "--seed", "5",
                         "--trace", str(out)]) == 0
        t1 = (out1 / "trace_Exit_Door_5.jsonl").read_bytes()
        t2 = (out2 / "trace_Exit_Door_5.jsonl").read_bytes()
        assert t1 == t2

    def test_summary_distance_matches_trace_poses(self, corridor_path, tmp_path):
        out = tmp_path / "out"
        main(["run", "--scenario", str(corridor_path), "--goal", "Exit Door",
              "--seed", "2", "--trace", str(out)])
        meta, events = read_trace(out / "trace_Exit_Door_2.jsonl")
        poses = [e.payload for e in events if e.kind == "pose"]
        start = meta["scenario"]["robot_start"]
        total, prev = 0.0, (start[0], start[1])
        for p in poses:
            total += ((p["x"] - prev[0]) ** 2 + (p["y"] - prev[1]) ** 2) ** 0.5
            prev = (p["x"], p["y"])
        summary = json.loads((out / "summary.json").read_text())
        assert summary["goals"]["Exit Door"]["distances"][0] == pytest.approx(
            total, abs=1e-6
        )

    def test_svg_snapshots(self, corridor_path, tmp_path):
        out = tmp_path / "snaps"
        code = main(["run", "--scenario", str(corridor_path),
                     "--goal", "Exit Door", "--seed", "1",
                     "--trace", str(out), "--svg-every", "1"])
        assert code == 0
        snaps = list(out.glob("snap_Exit_Door_1_*.svg"))
        assert snaps
        assert all(s.read_text().startswith("<?xml") for s in snaps)


class TestImagine:
    def test_clause_file_to_svg(self, tmp_path):
        clauses = tmp_path / "clauses.json"
        clauses.write_text(json.dumps([
            {"kind": "rel", "pred": "contains", "figure": "University",
             "referents": ["A Block"], "context": None},
            {"kind": "rel", "pred": "contains", "figure": "A Block",
             "referents": ["Foyer"], "context": None},
            {"kind": "rel", "pred": "near", "figure": "Office",
             "referents": ["Foyer"], "context": None},
        ]), encoding="utf-8")
        out = tmp_path / "layout.svg"
        energy = tmp_path / "energy.csv"
        code = main(["imagine", "--clauses", str(clauses),
                     "--out", str(out), "--energy", str(energy)])
        assert code == 0
        svg = out.read_text()
        for name in ("University", "A Block", "Foyer", "Office"):
            assert name in svg
        rows = energy.read_text().strip().splitlines()
        assert rows[0] == "t,kinetic,potential"
        assert len(rows) > 2

    def test_empty_clause_file(self, tmp_path):
        clauses = tmp_path / "empty.json"
        clauses.write_text("[]", encoding="utf-8")
        out = tmp_path / "empty.svg"
        assert main(["imagine", "--clauses", str(clauses), "--out", str(out)]) == 0
        assert out.read_text().startswith("<?xml")

    def test_malformed_clause_file(self, tmp_path):
        clauses = tmp_path / "broken.json"
        clauses.write_text('[{"kind":"rel",]', encoding="utf-8")
        out = tmp_path / "broken.svg"
        assert main(["imagine", "--clauses", str(clauses), "--out", str(out)]) == 1
        assert not out.exists()


class TestReplay:
    @pytest.fixture
    def trace_path(self, corridor_path, tmp_path):
        out = tmp_path / "run"
        main(["run", "--scenario", str(corridor_path), "--goal", "Exit Door",
              "--seed", "1", "--trace", str(out)])
        return out / "trace_Exit_Door_1.jsonl"

    def test_replay_to_svg(self, trace_path, tmp_path):
        out = tmp_path / "replay.svg"
        assert main(["replay", "--trace", str(trace_path), "--out", str(out)]) == 0
        svg = out.read_text()
        assert svg.startswith("<?xml")
        assert "polyline" in svg  # robot path
        assert "goal-label" in svg  # cue marker label

    def test_frame_selection(self, trace_path, tmp_path):
        out = tmp_path / "frame.svg"
        assert main(["replay", "--trace", str(trace_path), "--out", str(out),
                     "--frame", "0"]) == 0
        assert out.read_text().startswith("<?xml")

    def test_truncated_line_rejected(self, trace_path, tmp_path):
        lines = trace_path.read_text().splitlines()
        broken = tmp_path / "broken.jsonl"
        broken.write_text("\n".join(lines[:3]) + "\n" + lines[4][: len(lines[4]) // 2],
                          encoding="utf-8")
        out = tmp_path / "broken.svg"
        assert main(["replay", "--trace", str(broken), "--out", str(out)]) == 1

    def test_round_trip_events(self, trace_path):
        meta, events = read_trace(trace_path)
        assert meta["scenario"]["name"] == "corridor"
        kinds = {e.kind for e in events}
        assert {"pose", "cue", "imagine", "energy", "goal"} <= kinds
