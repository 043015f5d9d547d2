"""Rooted triplet graph accumulated over verified hypotheses.

The graph always contains the root node "image". Edges are
(subject, predicate, object) triples in insertion order; every subject is
reachable from the root. Each node carries an ordered list of pending
candidate predicates and a set of already-explored ones.
"""

from __future__ import annotations

import logging
import random
import re
from collections import deque
from dataclasses import dataclass

from .errors import GraphError

log = logging.getLogger(__name__)

ROOT = "image"
INITIAL_PREDICATES = ("content", "background", "style")


@dataclass(frozen=True)
class Triplet:
    subject: str
    predicate: str
    object: str

    def __post_init__(self):
        if not (self.subject and self.predicate and self.object):
            raise GraphError(f"triplet fields must be non-empty: {self!r}")

    def as_list(self) -> list[str]:
        return [self.subject, self.predicate, self.object]


@dataclass(frozen=True)
class GraphStats:
    num_nodes: int
    depth: int


class ConceptGraph:
    def __init__(self):
        self.nodes: set[str] = {ROOT}
        self.edges: list[Triplet] = []
        self.pending: dict[str, list[str]] = {ROOT: list(INITIAL_PREDICATES)}
        self.explored: dict[str, set[str]] = {}

    @classmethod
    def new(cls) -> "ConceptGraph":
        return cls()

    def copy(self) -> "ConceptGraph":
        g = ConceptGraph()
        g.nodes = set(self.nodes)
        g.edges = list(self.edges)
        g.pending = {k: list(v) for k, v in self.pending.items()}
        g.explored = {k: set(v) for k, v in self.explored.items()}
        return g

    # ---------------- traversal ----------------

    def _children(self, node: str) -> list[str]:
        out = []
        seen = set()
        for e in self.edges:
            if e.subject == node and e.object not in seen:
                seen.add(e.object)
                out.append(e.object)
        return out

    def _bfs_order(self) -> list[str]:
        order = [ROOT]
        seen = {ROOT}
        queue = deque([ROOT])
        while queue:
            node = queue.popleft()
            for child in self._children(node):
                if child not in seen:
                    seen.add(child)
                    order.append(child)
                    queue.append(child)
        return order

    def node_depths(self) -> dict[str, int]:
        depths = {ROOT: 0}
        queue = deque([ROOT])
        while queue:
            node = queue.popleft()
            for child in self._children(node):
                if child not in depths:
                    depths[child] = depths[node] + 1
                    queue.append(child)
        return depths

    def select_frontier(self, rng: random.Random) -> tuple[str, str] | None:
        """First node in breadth-first order with a pending predicate;
        the predicate is drawn uniformly from that node's pending list.
        Returns None when every pending list is empty (exhausted)."""
        for node in self._bfs_order():
            pending = self.pending.get(node)
            if pending:
                return node, rng.choice(pending)
        return None

    # ---------------- mutation ----------------

    def mark_explored(self, subject: str, predicate: str) -> None:
        """Consume a (subject, predicate) pair without adding an edge."""
        pend = self.pending.get(subject)
        if pend is not None and predicate in pend:
            pend.remove(predicate)
        self.explored.setdefault(subject, set()).add(predicate)

    def commit(self, triplet: Triplet, new_predicates: list[str] | None = None) -> None:
        """Append a verified triplet, consume its (subject, predicate)
        pair, and queue candidate predicates on the object node.

        Committing an existing triple is an idempotent no-op; a subject
        outside the graph is rejected.
        """
        if triplet.subject not in self.nodes:
            raise GraphError(f"subject {triplet.subject!r} is not a node of the graph")
        if triplet in self.edges:
            log.info("duplicate triple ignored: %s", triplet)
            return
        self.edges.append(triplet)
        self.nodes.add(triplet.object)
        pend = self.pending.setdefault(triplet.object, [])
        known = {p.lower() for p in pend}
        known.update(p.lower() for p in self.explored.get(triplet.object, ()))
        for pred in new_predicates or []:
            if pred and pred.lower() not in known:
                known.add(pred.lower())
                pend.append(pred)
        self.mark_explored(triplet.subject, triplet.predicate)

    # ---------------- views ----------------

    def render(self) -> str:
        """Deterministic network-text rendering.

        Root line ``-- ('entity', 'image')``; each edge on its own line as
        ``('s', 'p', 'o')`` behind a depth prefix of (depth-1) ``|   ``
        bars plus ``|-> ``. Children appear in insertion order; a node
        reached twice repeats its subtree (re-entry on the current path
        is cut to keep the walk finite).
        """
        lines = [f"-- ('entity', '{ROOT}')"]

        def walk(node: str, depth: int, path: frozenset[str]) -> None:
            for e in self.edges:
                if e.subject != node:
                    continue
                prefix = "|   " * (depth - 1) + "|-> "
                lines.append(f"{prefix}('{e.subject}', '{e.predicate}', '{e.object}')")
                if e.object not in path:
                    walk(e.object, depth + 1, path | {e.object})

        walk(ROOT, 1, frozenset({ROOT}))
        return "\n".join(lines)

    def stats(self) -> GraphStats:
        depths = self.node_depths()
        return GraphStats(num_nodes=len(self.nodes), depth=max(depths.values()))

    def to_json(self) -> dict:
        return {
            "nodes": sorted(self.nodes),
            "edges": [e.as_list() for e in self.edges],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ConceptGraph":
        g = cls()
        for s, p, o in obj.get("edges", []):
            g.nodes.add(s)
            g.nodes.add(o)
            g.edges.append(Triplet(s, p, o))
        for n in obj.get("nodes", []):
            g.nodes.add(n)
        return g


_EDGE_RE = re.compile(r"^\('(.*)', '(.*)', '(.*)'\)$")
_ROOT_RE = re.compile(r"^-- \('entity', '(.*)'\)$")


def parse_network_text(text: str) -> list[tuple[str, str, str]]:
    """Recover the edge list from a rendering. Used by tests (round-trip
    checks) and by the scripted oracle's novelty comparison."""
    lines = text.split("\n")
    if not lines or not _ROOT_RE.match(lines[0]):
        raise GraphError(f"network text must start with a root line, got {lines[0]!r}")
    edges = []
    for line in lines[1:]:
        if not line.strip():
            continue
        body = line
        while body.startswith("|   "):
            body = body[4:]
        if not body.startswith("|-> "):
            raise GraphError(f"malformed network-text line: {line!r}")
        m = _EDGE_RE.match(body[4:])
        if not m:
            raise GraphError(f"malformed edge tuple in line: {line!r}")
        edges.append((m.group(1), m.group(2), m.group(3)))
    return edges
