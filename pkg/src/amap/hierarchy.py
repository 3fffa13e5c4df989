"""Containment hierarchy of places as a levelled, rooted DAG."""
from __future__ import annotations

from dataclasses import dataclass, field


class CyclicGraph(ValueError):
    """Raised when an edge insertion or a traversal finds a cycle."""


class InvalidHierarchy(ValueError):
    """Raised for level or root violations in an explicit hierarchy."""


@dataclass
class HierarchyGraph:
    """Parent->child containment edges, each node tagged with a level.

    Levels grow upward: 1 for rooms, 2 for themed areas, 3 for a whole
    zoo or campus.  Every edge must point from a higher level to a
    strictly lower one.
    """

    levels: dict[str, int] = field(default_factory=dict)
    edges: list[tuple[str, str]] = field(default_factory=list)

    def add_node(self, name: str, level: int = 1) -> None:
        if level < 1:
            raise InvalidHierarchy(f"level must be >= 1, got {level} for {name!r}")
        existing = self.levels.get(name)
        if existing is not None and existing != level:
            raise InvalidHierarchy(
                f"{name!r} already registered at level {existing}, not {level}"
            )
        self.levels[name] = level

    def add_edge(self, parent: str, child: str) -> bool:
        """Insert a containment edge, defaulting unknown levels.

        Returns False when the identical edge is already present.  An
        unknown child defaults to level 1; an unknown parent to one
        level above the child.  A known parent that no longer out-ranks
        its new child is promoted (transitively) instead of rejected,
        since clause-driven hierarchies grow bottom-up.
        """
        if parent == child:
            raise CyclicGraph(f"self containment of {parent!r}")
        if (parent, child) in self.edges:
            return False
        if self._reaches(child, parent):
            raise CyclicGraph(f"edge {parent!r}->{child!r} closes a cycle")
        if child not in self.levels:
            self.levels[child] = 1
        if parent not in self.levels:
            self.levels[parent] = self.levels[child] + 1
        elif self.levels[parent] <= self.levels[child]:
            self._promote(parent, self.levels[child] + 1)
        self.edges.append((parent, child))
        return True

    def _promote(self, node: str, min_level: int) -> None:
        if self.levels.get(node, 0) >= min_level:
            return
        self.levels[node] = min_level
        for p, c in self.edges:
            if c == node:
                self._promote(p, min_level + 1)

    def _reaches(self, start: str, goal: str) -> bool:
        stack = [start]
        seen = set()
        while stack:
            node = stack.pop()
            if node == goal:
                return True
            if node in seen:
                continue
            seen.add(node)
            stack.extend(c for p, c in self.edges if p == node)
        return False

    def level_of(self, name: str, default: int = 1) -> int:
        return self.levels.get(name, default)

    def children_of(self, name: str) -> list[str]:
        return [c for p, c in self.edges if p == name]

    def parents_of(self, name: str) -> list[str]:
        return [p for p, c in self.edges if c == name]

    def roots(self) -> list[str]:
        """Nodes without parents, in insertion order of `levels`."""
        with_parent = {c for _, c in self.edges}
        return [n for n in self.levels if n not in with_parent]

    def edges_depth_first(self) -> list[tuple[str, str]]:
        """Edges in depth-first order from the roots, children as inserted.

        Raises CyclicGraph if a cycle survives in the edge list.
        """
        out: list[tuple[str, str]] = []
        emitted: set[tuple[str, str]] = set()
        for root in self.roots():
            stack = [(root, iter(self.children_of(root)))]
            on_path = {root}
            while stack:
                node, it = stack[-1]
                child = next(it, None)
                if child is None:
                    stack.pop()
                    on_path.discard(node)
                    continue
                if child in on_path:
                    raise CyclicGraph(f"cycle through {child!r}")
                if (node, child) not in emitted:
                    emitted.add((node, child))
                    out.append((node, child))
                stack.append((child, iter(self.children_of(child))))
                on_path.add(child)
        if len(out) != len(set(self.edges)):
            # edges unreachable from any root only happen on cyclic leftovers
            raise CyclicGraph("hierarchy contains edges unreachable from a root")
        return out

    def validate(self) -> None:
        """Full check: acyclic, one root per connected component."""
        self.edges_depth_first()
        parent: dict[str, str] = {}

        def find(x: str) -> str:
            while parent.get(x, x) != x:
                parent[x] = parent.get(parent[x], parent[x])
                x = parent[x]
            return x

        for a, b in self.edges:
            parent.setdefault(a, a)
            parent.setdefault(b, b)
            parent[find(a)] = find(b)
        roots_by_component: dict[str, int] = {}
        for r in self.roots():
            if r not in parent:
                continue
            comp = find(r)
            roots_by_component[comp] = roots_by_component.get(comp, 0) + 1
        for comp, count in roots_by_component.items():
            if count > 1:
                raise InvalidHierarchy("connected component with multiple roots")

    def copy(self) -> HierarchyGraph:
        return HierarchyGraph(dict(self.levels), list(self.edges))
