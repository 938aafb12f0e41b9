"""Colored multigraph primitives for the self-healing overlay simulator.

Two graph values drive every run:

* ``ColoredGraph`` is the live network.  Every edge carries a *set* of
  colors: the sentinel ``BLACK`` marks edges that were present initially
  or were wired in by the adversary, and each non-black color is the id
  of one healing cloud that uses the edge.  An edge stays alive as long
  as at least one color needs it; the healer only ever deletes an edge
  whose color set has drained to empty.

* ``ShadowGraph`` is the deletion-free baseline: every node ever seen
  and every black edge ever created, kept forever.  All invariant checks
  compare the live graph against this baseline.

Node ids are non-negative integers and are never reused after deletion.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import TYPE_CHECKING, Iterable, Iterator

if TYPE_CHECKING:  # pragma: no cover
    from .adversary import Event

# Sentinel color for original / adversary-inserted edges.  Cloud colors are
# the (non-negative) cloud ids, so a plain int covers both cases.
BLACK: int = -1

Color = int
EdgeKey = tuple[int, int]


class GraphError(Exception):
    """Base class for graph contract violations."""


class DuplicateNode(GraphError):
    pass


class UnknownNode(GraphError):
    pass


class SelfLoop(GraphError):
    pass


class UnknownEdge(GraphError):
    pass


class ColorAbsent(GraphError):
    pass


class NotMarked(GraphError):
    pass


class EmptySubset(GraphError):
    pass


class CloudKind(Enum):
    PRIMARY = "primary"
    SECONDARY = "secondary"


class EnsureResult(Enum):
    CREATED = "created"
    REUSED = "reused"


class StripResult(Enum):
    NOW_EMPTY = "now_empty"
    STILL_COLORED = "still_colored"


class PurgeResult(Enum):
    DELETED = "deleted"
    KEPT = "kept"


def edge_key(u: int, v: int) -> EdgeKey:
    """Canonical unordered representation of an edge."""
    return (u, v) if u < v else (v, u)


@dataclass
class EdgeRecord:
    """One undirected edge plus its color bookkeeping.

    ``kinds`` annotates every non-black color with the role (primary or
    secondary) of the cloud using the edge.  The same physical edge can
    serve one primary and one secondary cloud at once, so the role is
    stored per color rather than as a single field.  ``marked`` flags a
    deletion candidate inside a repair phase; outside a phase it is
    always False.
    """

    u: int
    v: int
    colors: set[Color] = field(default_factory=set)
    kinds: dict[Color, CloudKind] = field(default_factory=dict)
    marked: bool = False

    @property
    def key(self) -> EdgeKey:
        return edge_key(self.u, self.v)

    def other(self, node: int) -> int:
        if node == self.u:
            return self.v
        if node == self.v:
            return self.u
        raise UnknownNode(f"{node} is not an endpoint of {self.key}")


def black_neighbors(removed: Iterable[EdgeRecord], node: int) -> set[int]:
    """Other endpoints of the removed edges that carried the black color."""
    return {rec.other(node) for rec in removed if BLACK in rec.colors}


class ColoredGraph:
    """The live network: simple undirected graph with color-set edges."""

    def __init__(self) -> None:
        self._adj: dict[int, set[int]] = {}
        self._edges: dict[EdgeKey, EdgeRecord] = {}
        # Depth of nested repair brackets; while positive, the "no
        # colorless / marked edges" invariant is suspended between the
        # strip and purge passes.
        self._phase_depth: int = 0

    @property
    def in_repair_phase(self) -> bool:
        return self._phase_depth > 0

    def begin_repair_phase(self) -> None:
        self._phase_depth += 1

    def end_repair_phase(self) -> None:
        assert self._phase_depth > 0, "unbalanced repair phase"
        self._phase_depth -= 1

    # -- nodes ---------------------------------------------------------

    @property
    def node_set(self) -> set[int]:
        return set(self._adj)

    def __contains__(self, node: int) -> bool:
        return node in self._adj

    def node_count(self) -> int:
        return len(self._adj)

    def nodes(self) -> Iterator[int]:
        return iter(self._adj)

    def add_node(self, v: int) -> None:
        if v in self._adj:
            raise DuplicateNode(f"node {v} already present")
        self._adj[v] = set()

    def remove_node(self, v: int) -> list[EdgeRecord]:
        """Drop *v* and all incident edges.

        Returns the removed edge records with their color sets intact so
        the healer can dispatch on what was lost.
        """
        if v not in self._adj:
            raise UnknownNode(f"node {v} not present")
        removed = []
        for nb in sorted(self._adj[v]):
            removed.append(self._edges.pop(edge_key(v, nb)))
            self._adj[nb].discard(v)
        del self._adj[v]
        return removed

    # -- edges ---------------------------------------------------------

    def neighbors(self, v: int) -> set[int]:
        if v not in self._adj:
            raise UnknownNode(f"node {v} not present")
        return self._adj[v]

    def degree(self, v: int) -> int:
        return len(self.neighbors(v))

    def has_edge(self, u: int, v: int) -> bool:
        return edge_key(u, v) in self._edges

    def edge(self, u: int, v: int) -> EdgeRecord:
        try:
            return self._edges[edge_key(u, v)]
        except KeyError:
            raise UnknownEdge(f"no edge {edge_key(u, v)}") from None

    def edges(self) -> Iterator[EdgeRecord]:
        return iter(self._edges.values())

    def edge_count(self) -> int:
        return len(self._edges)

    def add_black_edge(self, u: int, v: int) -> None:
        """Wire a fresh adversary/original edge.  The pair must be new."""
        if u == v:
            raise SelfLoop(f"({u},{u})")
        if u not in self._adj or v not in self._adj:
            raise UnknownNode(f"endpoint of ({u},{v}) not present")
        key = edge_key(u, v)
        if key in self._edges:
            raise GraphError(f"edge {key} already exists")
        self._edges[key] = EdgeRecord(key[0], key[1], colors={BLACK})
        self._adj[u].add(v)
        self._adj[v].add(u)

    def ensure_edge_color(self, u: int, v: int, color: Color, kind: CloudKind) -> EnsureResult:
        """Give the pair (u, v) the cloud color *color*, reusing any
        existing edge, otherwise creating one."""
        if u == v:
            raise SelfLoop(f"({u},{u})")
        if u not in self._adj or v not in self._adj:
            raise UnknownNode(f"endpoint of ({u},{v}) not present")
        if color == BLACK:
            raise ValueError("cloud colors only; black edges come from insertions")
        key = edge_key(u, v)
        rec = self._edges.get(key)
        if rec is not None:
            rec.colors.add(color)
            rec.kinds[color] = kind
            return EnsureResult.REUSED
        self._edges[key] = EdgeRecord(key[0], key[1], colors={color}, kinds={color: kind})
        self._adj[u].add(v)
        self._adj[v].add(u)
        return EnsureResult.CREATED

    def strip_color(self, u: int, v: int, color: Color) -> StripResult:
        """Remove *color* from the edge; report whether it drained."""
        rec = self.edge(u, v)
        if color not in rec.colors:
            raise ColorAbsent(f"edge {rec.key} does not carry color {color}")
        rec.colors.discard(color)
        rec.kinds.pop(color, None)
        return StripResult.NOW_EMPTY if not rec.colors else StripResult.STILL_COLORED

    def mark_edge(self, u: int, v: int) -> None:
        self.edge(u, v).marked = True

    def purge_if_colorless(self, u: int, v: int) -> PurgeResult:
        """Delete a marked edge if nothing recolored it, else unmark it."""
        rec = self.edge(u, v)
        if not rec.marked:
            raise NotMarked(f"edge {rec.key} is not marked")
        if rec.colors:
            rec.marked = False
            return PurgeResult.KEPT
        del self._edges[rec.key]
        self._adj[rec.u].discard(rec.v)
        self._adj[rec.v].discard(rec.u)
        return PurgeResult.DELETED

    # -- integrity -----------------------------------------------------

    def integrity_errors(self) -> list[str]:
        """Structural self-check, used by tests and the verify command."""
        errs = []
        for key, rec in self._edges.items():
            if rec.key != key:
                errs.append(f"edge {key} stored under wrong key")
            if rec.u == rec.v:
                errs.append(f"self loop {key}")
            for end in key:
                if end not in self._adj:
                    errs.append(f"edge {key} endpoint {end} missing")
                elif rec.other(end) not in self._adj[end]:
                    errs.append(f"edge {key} missing from adjacency of {end}")
            nonblack = {c for c in rec.colors if c != BLACK}
            if set(rec.kinds) != nonblack:
                errs.append(f"edge {key} kinds {set(rec.kinds)} != non-black colors {nonblack}")
            if not self.in_repair_phase:
                if not rec.colors:
                    errs.append(f"edge {key} colorless outside repair phase")
                if rec.marked:
                    errs.append(f"edge {key} marked outside repair phase")
        for v, nbrs in self._adj.items():
            for nb in nbrs:
                if edge_key(v, nb) not in self._edges:
                    errs.append(f"adjacency {v}-{nb} has no edge record")
        return errs


class ShadowGraph:
    """Append-only record of all nodes and black edges ever created.

    Deletions only move a node out of ``alive``; the node and its edges
    stay, and metric checks that quote the baseline (degree, density,
    expansion, distances) are computed over this full graph.
    """

    def __init__(self) -> None:
        self.nodes: set[int] = set()
        self.edges: set[EdgeKey] = set()
        self.alive: set[int] = set()
        self._adj: dict[int, set[int]] = {}

    @property
    def node_set(self) -> set[int]:
        return set(self.nodes)

    def __contains__(self, node: int) -> bool:
        return node in self.nodes

    def neighbors(self, v: int) -> set[int]:
        if v not in self.nodes:
            raise UnknownNode(f"node {v} never existed")
        return self._adj[v]

    def degree(self, v: int) -> int:
        """Degree in the full baseline (dead neighbors included)."""
        return len(self.neighbors(v))

    def apply(self, event: "Event") -> None:
        """Record an adversarial event: inserts append, deletes only
        toggle liveness."""
        if event.is_insert:
            if event.node in self.nodes:
                raise DuplicateNode(f"node {event.node} already recorded")
            self.nodes.add(event.node)
            self._adj[event.node] = set()
            self.alive.add(event.node)
            for nb in event.neighbors:
                if nb not in self.nodes:
                    raise UnknownNode(f"neighbor {nb} never existed")
                self.edges.add(edge_key(event.node, nb))
                self._adj[event.node].add(nb)
                self._adj[nb].add(event.node)
        else:
            if event.node not in self.alive:
                raise UnknownNode(f"node {event.node} is not alive")
            self.alive.discard(event.node)

    def seed_initial(self, nodes: Iterable[int], edges: Iterable[EdgeKey]) -> None:
        for v in nodes:
            if v in self.nodes:
                raise DuplicateNode(f"node {v} already recorded")
            self.nodes.add(v)
            self._adj[v] = set()
            self.alive.add(v)
        for u, v in edges:
            self.edges.add(edge_key(u, v))
            self._adj[u].add(v)
            self._adj[v].add(u)


def density(view: ColoredGraph | ShadowGraph, subset: Iterable[int]) -> Fraction:
    """Induced edge count over subset size, as an exact rational."""
    s = set(subset)
    if not s:
        raise EmptySubset("density of the empty set is undefined")
    twice_edges = 0
    for u in s:
        if u not in view:
            raise UnknownNode(f"node {u} not in view")
        twice_edges += len(view.neighbors(u) & s)
    return Fraction(twice_edges // 2, len(s))


def induced_edges(view: ColoredGraph | ShadowGraph, subset: Iterable[int]) -> set[EdgeKey]:
    s = set(subset)
    return {edge_key(u, v) for u in s for v in view.neighbors(u) & s if u < v}


def is_connected(view: ColoredGraph | ShadowGraph) -> bool:
    """True for graphs with at most one node or a single component."""
    nodes = view.node_set
    if len(nodes) <= 1:
        return True
    start = next(iter(nodes))
    seen = {start}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        for nb in view.neighbors(cur):
            if nb not in seen:
                seen.add(nb)
                queue.append(nb)
    return len(seen) == len(nodes)


def bfs_distances(view: ColoredGraph | ShadowGraph, source: int) -> dict[int, int]:
    """Hop counts from *source* to every reachable node of the view."""
    dist = {source: 0}
    queue = deque([source])
    while queue:
        cur = queue.popleft()
        for nb in view.neighbors(cur):
            if nb not in dist:
                dist[nb] = dist[cur] + 1
                queue.append(nb)
    return dist
