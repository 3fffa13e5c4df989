"""Append-only JSONL trial traces: one meta header line, then events."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

EVENT_KINDS = ("pose", "cue", "imagine", "exploration", "goal", "energy")
MAX_ENERGY_POINTS = 1000


class TraceFormatError(ValueError):
    """Malformed trace line; carries the 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass
class TraceEvent:
    t: float
    kind: str
    payload: dict = field(default_factory=dict)

    def to_line(self) -> str:
        record = {"t": self.t, "kind": self.kind, **self.payload}
        return json.dumps(record, sort_keys=True, separators=(",", ":"))


def downsample_energy(series) -> list[list[float]]:
    """At most MAX_ENERGY_POINTS rows, always keeping first and last."""
    rows = [[float(a), float(b), float(c)] for a, b, c in series]
    n = len(rows)
    if n <= MAX_ENERGY_POINTS:
        return rows
    stride = (n - 1) / (MAX_ENERGY_POINTS - 1)
    picked = [rows[round(i * stride)] for i in range(MAX_ENERGY_POINTS - 1)]
    picked.append(rows[-1])
    return picked


def write_trace(path, meta: dict, events: Iterable[TraceEvent]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        header = {"kind": "meta", "t": 0.0, **meta}
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n")
        for event in events:
            fh.write(event.to_line() + "\n")


def read_trace(path) -> tuple[dict, list[TraceEvent]]:
    """Parse a trace file back into its meta header and event list."""
    meta: dict = {}
    events: list[TraceEvent] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise TraceFormatError(f"bad JSON ({e.msg})", lineno) from e
            if not isinstance(record, dict) or "kind" not in record:
                raise TraceFormatError("event must be an object with a kind", lineno)
            kind = record.pop("kind")
            if kind == "meta":
                record.pop("t", None)
                meta = record
                continue
            if kind not in EVENT_KINDS:
                raise TraceFormatError(f"unknown event kind {kind!r}", lineno)
            if "t" not in record:
                raise TraceFormatError("event missing time", lineno)
            t = record.pop("t")
            events.append(TraceEvent(float(t), kind, record))
    return meta, events
