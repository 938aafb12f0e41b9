"""Adversarial event generation, trace encoding, and replay input.

A trace is a line-delimited JSON file: a header line, an initial-graph
line, then one event per line.  Non-adaptive strategies (uniform,
delete-only) can be materialized into trace files up front; the
targeting strategies inspect live simulator state and therefore run
online against the engine, one event at a time.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from .graph import EdgeKey, edge_key

if TYPE_CHECKING:  # pragma: no cover
    from .engine import Healer

TRACE_VERSION = 1

STRATEGY_NAMES = ("uniform", "delete-only", "target-max-degree", "target-bridge")
ADAPTIVE_STRATEGIES = ("target-max-degree", "target-bridge")


class AdversaryError(Exception):
    pass


class EmptyNetwork(AdversaryError):
    pass


class InvalidParams(AdversaryError):
    pass


class ParseError(AdversaryError):
    def __init__(self, line_no: int, message: str) -> None:
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class VersionMismatch(AdversaryError):
    pass


@dataclass(frozen=True)
class Event:
    op: str  # "ins" | "del"
    node: int
    neighbors: tuple[int, ...] = ()

    @property
    def is_insert(self) -> bool:
        return self.op == "ins"


@dataclass
class Trace:
    kappa: int
    seed: int
    strategy: str
    params: dict
    initial_nodes: list[int]
    initial_edges: list[EdgeKey]
    events: list[Event] = field(default_factory=list)


@dataclass(frozen=True)
class Strategy:
    """Event-picking policy.

    ``insert_fraction`` is the per-step probability of inserting a node
    (wired to up to ``insert_degree`` uniformly chosen alive nodes); the
    remaining mass goes to the strategy's deletion rule.
    """

    name: str
    insert_fraction: float = 0.0
    insert_degree: int = 4

    def __post_init__(self) -> None:
        if self.name not in STRATEGY_NAMES:
            raise InvalidParams(f"unknown strategy {self.name!r}")
        if not 0.0 <= self.insert_fraction <= 1.0:
            raise InvalidParams("insert_fraction must be in [0, 1]")
        if self.insert_degree < 1:
            raise InvalidParams("insert_degree must be >= 1")

    @property
    def adaptive(self) -> bool:
        return self.name in ADAPTIVE_STRATEGIES


def _insert_event(alive: list[int], next_id: int, degree: int, rng: random.Random) -> Event:
    k = min(degree, len(alive))
    nbrs = tuple(sorted(rng.sample(alive, k))) if k else ()
    return Event("ins", next_id, nbrs)


def next_event(strategy: Strategy, state: "Healer", rng: random.Random) -> Event:
    """Pick the next adversarial move against live simulator state.

    Deterministic given the rng stream, so adaptive runs replay exactly.
    """
    alive = sorted(state.shadow.alive)
    next_id = (max(state.shadow.nodes) + 1) if state.shadow.nodes else 0
    if not alive:
        if strategy.insert_fraction > 0.0:
            return Event("ins", next_id, ())
        raise EmptyNetwork("no alive node to delete")
    if rng.random() < strategy.insert_fraction:
        return _insert_event(alive, next_id, strategy.insert_degree, rng)

    if strategy.name in ("uniform", "delete-only"):
        return Event("del", rng.choice(alive))
    if strategy.name == "target-bridge":
        holders = sorted(set(state.registry.duty) & state.shadow.alive)
        if holders:
            return Event("del", holders[0])
        # fall through to the max-degree rule
    max_deg = max(state.graph.degree(v) for v in alive)
    target = min(v for v in alive if state.graph.degree(v) == max_deg)
    return Event("del", target)


def initial_graph(n0: int, rng: random.Random, extra_edge_frac: float = 0.5
                  ) -> tuple[list[int], list[EdgeKey]]:
    """Seeded connected starting graph: a random recursive tree plus a
    quota of extra random edges."""
    if n0 < 1:
        raise InvalidParams("n0 must be >= 1")
    nodes = list(range(n0))
    edges: set[EdgeKey] = set()
    for v in range(1, n0):
        edges.add(edge_key(v, rng.randrange(v)))
    want_extra = int(n0 * extra_edge_frac)
    attempts = 0
    added = 0
    max_pairs = n0 * (n0 - 1) // 2
    while added < want_extra and len(edges) < max_pairs and attempts < 20 * (want_extra + 1):
        attempts += 1
        u = rng.randrange(n0)
        v = rng.randrange(n0)
        if u == v or edge_key(u, v) in edges:
            continue
        edges.add(edge_key(u, v))
        added += 1
    return nodes, sorted(edges)


def gen_trace(strategy: Strategy, n0: int, steps: int, seed: int,
              kappa: int = 6, extra_edge_frac: float = 0.5) -> Trace:
    """Materialize a non-adaptive trace, reproducible from its inputs."""
    if strategy.adaptive:
        raise InvalidParams(f"{strategy.name} inspects live state; run it online")
    if n0 < 1 or steps < 0:
        raise InvalidParams("need n0 >= 1 and steps >= 0")
    if strategy.name == "delete-only" and steps > n0:
        raise InvalidParams("delete-only cannot delete more nodes than exist")
    rng = random.Random(f"{seed}/trace")
    nodes, edges = initial_graph(n0, rng, extra_edge_frac)
    alive = set(nodes)
    next_id = n0
    events: list[Event] = []
    for _ in range(steps):
        if not alive:
            ev = Event("ins", next_id, ())
        elif strategy.name != "delete-only" and rng.random() < strategy.insert_fraction:
            ev = _insert_event(sorted(alive), next_id, strategy.insert_degree, rng)
        else:
            ev = Event("del", rng.choice(sorted(alive)))
        events.append(ev)
        if ev.is_insert:
            alive.add(ev.node)
            next_id = ev.node + 1
        else:
            alive.discard(ev.node)
    params = {
        "insert_fraction": strategy.insert_fraction,
        "insert_degree": strategy.insert_degree,
        "n0": n0,
        "steps": steps,
        "extra_edge_frac": extra_edge_frac,
    }
    return Trace(kappa, seed, strategy.name, params, nodes, edges, events)


def _dump(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"))


def encode_trace(trace: Trace) -> str:
    """Render a trace in its line-delimited wire format."""
    lines = [
        _dump({"v": TRACE_VERSION, "kappa": trace.kappa, "seed": trace.seed,
               "strategy": trace.strategy, "params": trace.params}),
        _dump({"nodes": trace.initial_nodes,
               "edges": [[u, v] for u, v in trace.initial_edges]}),
    ]
    for t, ev in enumerate(trace.events, start=1):
        if ev.is_insert:
            lines.append(_dump({"t": t, "op": "ins", "node": ev.node,
                                "nbrs": list(ev.neighbors)}))
        else:
            lines.append(_dump({"t": t, "op": "del", "node": ev.node}))
    return "\n".join(lines) + "\n"


def _parse_line(line_no: int, raw: str) -> dict:
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(line_no, f"bad JSON ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise ParseError(line_no, "expected a JSON object")
    return obj


def decode_trace(text: str) -> Trace:
    """Parse the wire format back into a Trace, validating as it goes."""
    lines = [ln for ln in text.splitlines()]
    while lines and not lines[-1].strip():
        lines.pop()
    if len(lines) < 2:
        raise ParseError(1, "trace needs a header and an initial-graph line")

    header = _parse_line(1, lines[0])
    version = header.get("v")
    if version != TRACE_VERSION:
        raise VersionMismatch(f"trace version {version!r}, expected {TRACE_VERSION}")
    for key in ("kappa", "seed", "strategy"):
        if key not in header:
            raise ParseError(1, f"header missing {key!r}")

    init = _parse_line(2, lines[1])
    if "nodes" not in init or "edges" not in init:
        raise ParseError(2, "initial line needs 'nodes' and 'edges'")
    nodes = [int(v) for v in init["nodes"]]
    edges = []
    for pair in init["edges"]:
        if not isinstance(pair, list) or len(pair) != 2:
            raise ParseError(2, f"bad edge {pair!r}")
        edges.append(edge_key(int(pair[0]), int(pair[1])))

    events = []
    for line_no, raw in enumerate(lines[2:], start=3):
        obj = _parse_line(line_no, raw)
        op = obj.get("op")
        if op == "ins":
            try:
                events.append(Event("ins", int(obj["node"]),
                                    tuple(int(x) for x in obj.get("nbrs", []))))
            except (KeyError, TypeError, ValueError):
                raise ParseError(line_no, "bad insert record") from None
        elif op == "del":
            try:
                events.append(Event("del", int(obj["node"])))
            except (KeyError, TypeError, ValueError):
                raise ParseError(line_no, "bad delete record") from None
        else:
            raise ParseError(line_no, f"unknown op {op!r}")
    return Trace(int(header["kappa"]), int(header["seed"]), str(header["strategy"]),
                 dict(header.get("params", {})), nodes, edges, events)


def validate_trace(trace: Trace) -> None:
    """Check that events are individually valid when applied in order."""
    seen = set(trace.initial_nodes)
    alive = set(trace.initial_nodes)
    for i, ev in enumerate(trace.events, start=1):
        if ev.is_insert:
            if ev.node in seen:
                raise InvalidParams(f"event {i}: node {ev.node} reused")
            if ev.node in ev.neighbors:
                raise InvalidParams(f"event {i}: self neighbor")
            missing = set(ev.neighbors) - alive
            if missing:
                raise InvalidParams(f"event {i}: dead neighbors {sorted(missing)}")
            seen.add(ev.node)
            alive.add(ev.node)
        else:
            if ev.node not in alive:
                raise InvalidParams(f"event {i}: delete of dead node {ev.node}")
            alive.discard(ev.node)
