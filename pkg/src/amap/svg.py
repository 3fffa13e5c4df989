"""Dependency-free SVG emission for imagined layouts and trial replays."""
from __future__ import annotations

import math
from typing import Iterable, Sequence

from .model import DISTANCE, OBSERVATION, SpringSpec

ANCHOR_PREFIX = "@anchor:"


def _fmt(v: float) -> str:
    s = f"{v:.3f}".rstrip("0").rstrip(".")
    return s if s not in ("-0", "") else "0"


class SvgCanvas:
    """Collects shapes in world coordinates (y up) and renders to markup."""

    def __init__(self):
        self.parts: list[str] = []
        self.min_x = math.inf
        self.min_y = math.inf
        self.max_x = -math.inf
        self.max_y = -math.inf

    def _grow(self, x, y):
        self.min_x = min(self.min_x, x)
        self.max_x = max(self.max_x, x)
        self.min_y = min(self.min_y, y)
        self.max_y = max(self.max_y, y)

    def flip(self, y: float) -> float:
        return -y

    def line(self, x1, y1, x2, y2, stroke="#555", width=0.03, dash=None):
        self._grow(x1, y1)
        self._grow(x2, y2)
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<line x1="{_fmt(x1)}" y1="{_fmt(self.flip(y1))}" '
            f'x2="{_fmt(x2)}" y2="{_fmt(self.flip(y2))}" '
            f'stroke="{stroke}" stroke-width="{_fmt(width)}"{dash_attr} />'
        )

    def circle(self, x, y, r, fill="#1f77b4", stroke="none", width=0.02):
        self._grow(x - r, y - r)
        self._grow(x + r, y + r)
        self.parts.append(
            f'<circle cx="{_fmt(x)}" cy="{_fmt(self.flip(y))}" r="{_fmt(r)}" '
            f'fill="{fill}" stroke="{stroke}" stroke-width="{_fmt(width)}" />'
        )

    def rect(self, x, y, w, h, fill="#333"):
        self._grow(x, y)
        self._grow(x + w, y + h)
        self.parts.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(self.flip(y + h))}" '
            f'width="{_fmt(w)}" height="{_fmt(h)}" fill="{fill}" />'
        )

    def text(self, x, y, content, size=0.3, fill="#111", bold=False):
        self._grow(x, y)
        content = (content.replace("&", "&amp;").replace("<", "&lt;")
                   .replace(">", "&gt;"))
        weight = ' font-weight="bold"' if bold else ""
        self.parts.append(
            f'<text x="{_fmt(x)}" y="{_fmt(self.flip(y))}" '
            f'font-size="{_fmt(size)}" fill="{fill}"{weight} '
            f'font-family="sans-serif">{content}</text>'
        )

    def polyline(self, points: Iterable[tuple[float, float]], stroke="#d62728",
                 width=0.05):
        pts = list(points)
        if not pts:
            return
        for x, y in pts:
            self._grow(x, y)
        coords = " ".join(f"{_fmt(x)},{_fmt(self.flip(y))}" for x, y in pts)
        self.parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{stroke}" '
            f'stroke-width="{_fmt(width)}" />'
        )

    def cross(self, x, y, r=0.2, stroke="#000", width=0.05):
        self.line(x - r, y - r, x + r, y + r, stroke=stroke, width=width)
        self.line(x - r, y + r, x + r, y - r, stroke=stroke, width=width)

    def render(self, pad: float = 0.8) -> str:
        if not self.parts:
            self.min_x = self.min_y = 0.0
            self.max_x = self.max_y = 1.0
        x0 = self.min_x - pad
        y0 = -self.max_y - pad
        w = (self.max_x - self.min_x) + 2 * pad
        h = (self.max_y - self.min_y) + 2 * pad
        return (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" '
            f'viewBox="{_fmt(x0)} {_fmt(y0)} {_fmt(w)} {_fmt(h)}" '
            f'width="{_fmt(w * 40)}" height="{_fmt(h * 40)}">\n'
            + "\n".join(self.parts)
            + "\n</svg>\n"
        )


def _spring_style(spring: SpringSpec) -> dict:
    style = {"stroke": "#999", "width": 0.02, "dash": None}
    if spring.kind != DISTANCE:
        style["dash"] = "0.12,0.08"
        style["stroke"] = "#6a9f58"
    if spring.origin == OBSERVATION:
        style["width"] = 0.06
        style["stroke"] = "#222"
    return style


def draw_layout(canvas: SvgCanvas, names: Sequence[str], positions,
                springs: Sequence[SpringSpec], node_radius=0.12,
                label_size=0.3, node_fill="#1f77b4"):
    """Point masses as labelled circles, springs as styled lines."""
    for spring in springs:
        style = _spring_style(spring)
        pairs = [(spring.endpoints[0], spring.endpoints[1])]
        if len(spring.endpoints) == 3:
            pairs.append((spring.endpoints[1], spring.endpoints[2]))
        for a, b in pairs:
            canvas.line(positions[a][0], positions[a][1],
                        positions[b][0], positions[b][1],
                        stroke=style["stroke"], width=style["width"],
                        dash=style["dash"])
    for i, name in enumerate(names):
        x, y = positions[i][0], positions[i][1]
        if name.startswith(ANCHOR_PREFIX):
            canvas.rect(x - 0.08, y - 0.08, 0.16, 0.16, fill="#222")
            continue
        canvas.circle(x, y, node_radius, fill=node_fill)
        canvas.text(x + node_radius * 1.3, y - node_radius * 0.5, name,
                    size=label_size)


def draw_energy_strip(canvas: SvgCanvas, series, x0: float, y0: float,
                      width: float, height: float):
    """Total-energy-vs-time polyline inset, normalised into a strip."""
    rows = list(series)
    if len(rows) < 2:
        return
    totals = [r[1] + r[2] for r in rows]
    t_lo, t_hi = rows[0][0], rows[-1][0]
    e_hi = max(totals) or 1.0
    span_t = (t_hi - t_lo) or 1.0
    canvas.line(x0, y0, x0 + width, y0, stroke="#bbb", width=0.02)
    canvas.line(x0, y0, x0, y0 + height, stroke="#bbb", width=0.02)
    pts = [
        (x0 + (r[0] - t_lo) / span_t * width, y0 + tot / e_hi * height)
        for r, tot in zip(rows, totals)
    ]
    canvas.polyline(pts, stroke="#9467bd", width=0.03)
    canvas.text(x0, y0 + height + 0.1, "energy", size=0.25, fill="#9467bd")


def draw_world(canvas: SvgCanvas, scenario_doc: dict):
    """Occupancy grid walls from a raw scenario document."""
    grid = scenario_doc["grid"]
    res = float(scenario_doc.get("resolution", 0.25))
    ox, oy = scenario_doc.get("origin", (0.0, 0.0))
    rows = len(grid)
    for r, row in enumerate(grid):
        c = 0
        while c < len(row):
            if row[c] != "#":
                c += 1
                continue
            run = c
            while run < len(row) and row[run] == "#":
                run += 1
            x = ox + c * res
            y = oy + (rows - 1 - r) * res
            canvas.rect(x, y, (run - c) * res, res, fill="#3a3a3a")
            c = run


def render_imagination(names, positions, springs, energy=None) -> str:
    canvas = SvgCanvas()
    draw_layout(canvas, names, positions, springs)
    if energy is not None and len(energy) >= 2:
        strip_y = (min(p[1] for p in positions) if len(positions) else 0.0) - 2.0
        strip_x = min((p[0] for p in positions), default=0.0)
        draw_energy_strip(canvas, energy, strip_x, strip_y, 6.0, 1.2)
    return canvas.render()


def render_replay(meta: dict, events, frame: int | None = None) -> str:
    """World, robot path, cue markers, and the imagined layout overlay.

    `frame` selects the state as of the n-th imagine event (0-based);
    the default renders the full trace.
    """
    canvas = SvgCanvas()
    scenario_doc = meta.get("scenario", {})
    if scenario_doc:
        draw_world(canvas, scenario_doc)

    imagine_events = [e for e in events if e.kind == "imagine"]
    if frame is not None and imagine_events:
        frame = max(0, min(frame, len(imagine_events) - 1))
        chosen = imagine_events[frame]
        cutoff_index = events.index(chosen)
    else:
        chosen = imagine_events[-1] if imagine_events else None
        cutoff_index = len(events) - 1
    window = events[: cutoff_index + 1]

    path = [(e.payload["x"], e.payload["y"]) for e in window if e.kind == "pose"]
    if len(path) > 2000:
        stride = len(path) // 2000 + 1
        path = path[::stride] + [path[-1]]
    if path:
        canvas.polyline(path, stroke="#d62728", width=0.06)
        canvas.circle(path[0][0], path[0][1], 0.15, fill="none",
                      stroke="#d62728", width=0.05)
        canvas.cross(path[-1][0], path[-1][1], r=0.2, stroke="#d62728")

    observed = {e.payload.get("id") for e in window if e.kind == "cue"}
    for cue in scenario_doc.get("cues", []):
        x, y = cue["pos"]
        seen = cue["id"] in observed
        canvas.circle(x, y, 0.1, fill="#ff7f0e" if seen else "none",
                      stroke="#ff7f0e", width=0.04)
        canvas.text(x + 0.15, y + 0.05, cue["id"], size=0.22,
                    fill="#b35a00", bold=seen)

    if chosen is not None:
        for name, (x, y) in sorted(chosen.payload.get("positions", {}).items()):
            canvas.circle(x, y, 0.09, fill="#1f77b4")
            canvas.text(x + 0.12, y, name, size=0.22, fill="#1f77b4")
    return canvas.render()
