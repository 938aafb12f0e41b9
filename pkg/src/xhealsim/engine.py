"""The healing state machine.

Every adversarial delete is answered inside the same step by one of
three repairs, keyed by the colors of the edges that vanished with the
node:

* only black edges lost: the black neighbors are joined into a fresh
  primary cloud;
* primary cloud edges lost: each of those clouds is rebuilt over its
  survivors, then one free node per cloud plus the black neighbors form
  a new secondary cloud;
* secondary edges lost too: primaries are rebuilt, the secondary cloud
  replaces its dead bridge (or everything merges into one big primary
  cloud when no free node can be found), and the remaining unbridged
  primaries get a new secondary.

Rebuilds never touch black edges: a cloud's color is stripped from its
edges first, edges that drain to colorless are only *marked*, the new
topology reuses whatever edges it can, and a final purge deletes the
marked edges that stayed colorless.  Edge preservation therefore holds
by construction, not by luck.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, fields
from typing import Iterable, Sequence

from .adversary import Event
from .expander import CloudTopology, ExpanderConfig, build_topology
from .graph import (
    BLACK,
    CloudKind,
    ColoredGraph,
    EdgeKey,
    EdgeRecord,
    EnsureResult,
    PurgeResult,
    ShadowGraph,
    StripResult,
    black_neighbors,
    edge_key,
)

FAULTS = ("skip-heal", "drop-black-edge")


class InvalidEvent(Exception):
    pass


@dataclass
class Cloud:
    id: int
    kind: CloudKind
    members: set[int]
    topology: CloudTopology

    @property
    def color(self) -> int:
        return self.id


class CloudRegistry:
    """Who is in which cloud, which node bridges what, who is busy."""

    def __init__(self) -> None:
        self.clouds: dict[int, Cloud] = {}
        self.memberships: dict[int, set[int]] = {}
        # (secondary id, primary id) -> the node representing that primary
        self.bridges: dict[tuple[int, int], int] = {}
        # node -> the one secondary cloud occupying it
        self.duty: dict[int, int] = {}

    def put(self, cloud: Cloud) -> None:
        old = self.clouds.get(cloud.id)
        if old is not None:
            for m in old.members - cloud.members:
                self._unlink(m, cloud.id)
        self.clouds[cloud.id] = cloud
        for m in cloud.members:
            self.memberships.setdefault(m, set()).add(cloud.id)

    def _unlink(self, node: int, cid: int) -> None:
        entry = self.memberships.get(node)
        if entry is not None:
            entry.discard(cid)
            if not entry:
                del self.memberships[node]

    def retire(self, cid: int) -> None:
        cloud = self.clouds.pop(cid)
        for m in cloud.members:
            self._unlink(m, cid)
        for key in [k for k in self.bridges if cid in k]:
            del self.bridges[key]
        if cloud.kind is CloudKind.SECONDARY:
            for node in [n for n, f in self.duty.items() if f == cid]:
                del self.duty[node]

    def clouds_of(self, node: int) -> set[int]:
        return set(self.memberships.get(node, ()))

    def bridged_primaries(self, secondary_id: int) -> set[int]:
        return {c for (f, c) in self.bridges if f == secondary_id}

    def validation_errors(self, alive: set[int]) -> list[str]:
        errs = []
        for cid, cloud in self.clouds.items():
            if cid != cloud.id:
                errs.append(f"cloud {cid} stored under wrong id")
            if not cloud.members:
                errs.append(f"cloud {cid} is empty but registered")
            if not cloud.members <= alive:
                errs.append(f"cloud {cid} has dead members")
            for u, v in cloud.topology.edge_list:
                if u not in cloud.members or v not in cloud.members:
                    errs.append(f"cloud {cid} topology edge ({u},{v}) leaves member set")
            for m in cloud.members:
                if cid not in self.memberships.get(m, ()):
                    errs.append(f"membership index misses {m} in cloud {cid}")
        for node, cids in self.memberships.items():
            for cid in cids:
                if cid not in self.clouds or node not in self.clouds[cid].members:
                    errs.append(f"stale membership {node} -> {cid}")
        for (f, c), node in self.bridges.items():
            if f not in self.clouds or self.clouds[f].kind is not CloudKind.SECONDARY:
                errs.append(f"bridge entry ({f},{c}) has no secondary cloud")
            elif node not in self.clouds[f].members:
                errs.append(f"bridge {node} of ({f},{c}) is not in the secondary cloud")
            if c not in self.clouds or self.clouds[c].kind is not CloudKind.PRIMARY:
                errs.append(f"bridge entry ({f},{c}) has no primary cloud")
        for node, f in self.duty.items():
            if node not in alive:
                errs.append(f"dead node {node} holds duty")
            if f not in self.clouds or self.clouds[f].kind is not CloudKind.SECONDARY:
                errs.append(f"duty of {node} points to missing secondary {f}")
            elif node not in self.clouds[f].members:
                errs.append(f"duty holder {node} not a member of secondary {f}")
        return errs


@dataclass
class RepairCounters:
    """Cumulative per-run tallies; edge counts proxy repair cost."""

    events: int = 0
    inserts: int = 0
    deletes: int = 0
    branch_all_black: int = 0
    branch_primary: int = 0
    branch_secondary: int = 0
    clouds_built: int = 0
    clouds_rebuilt: int = 0
    merges: int = 0
    bridges_borrowed: int = 0
    free_node_misses: int = 0
    edges_created: int = 0
    edges_reused: int = 0
    edges_deleted: int = 0

    def as_dict(self) -> dict[str, int]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


class Healer:
    """Mutable simulation state plus the event handler operating on it."""

    def __init__(self, cfg: ExpanderConfig, rng: random.Random,
                 fault: str | None = None) -> None:
        if fault is not None and fault not in FAULTS:
            raise ValueError(f"unknown fault {fault!r}")
        self.cfg = cfg
        self.rng = rng
        self.fault = fault
        self.graph = ColoredGraph()
        self.shadow = ShadowGraph()
        self.registry = CloudRegistry()
        self.counters = RepairCounters()
        self.next_cloud_id = 0
        self.last_black_neighbors: set[int] = set()

    @classmethod
    def from_initial(cls, nodes: Iterable[int], edges: Iterable[EdgeKey],
                     cfg: ExpanderConfig, rng: random.Random,
                     fault: str | None = None) -> "Healer":
        healer = cls(cfg, rng, fault)
        node_list = sorted(nodes)
        healer.shadow.seed_initial(node_list, edges)
        for v in node_list:
            healer.graph.add_node(v)
        for u, v in sorted(edge_key(a, b) for a, b in edges):
            healer.graph.add_black_edge(u, v)
        return healer

    # -- event entry point ----------------------------------------------

    def handle_event(self, event: Event) -> None:
        if event.is_insert:
            self._validate_insert(event)
            self.counters.events += 1
            self._insert(event)
        else:
            if event.node not in self.shadow.alive:
                raise InvalidEvent(f"delete of non-alive node {event.node}")
            self.counters.events += 1
            self._delete(event.node)

    def _validate_insert(self, event: Event) -> None:
        v = event.node
        if v in self.shadow.nodes:
            raise InvalidEvent(f"node id {v} was already used")
        if self.shadow.nodes and v <= max(self.shadow.nodes):
            raise InvalidEvent(f"node ids must be strictly increasing, got {v}")
        if v in event.neighbors:
            raise InvalidEvent("a node cannot neighbor itself")
        if len(set(event.neighbors)) != len(event.neighbors):
            raise InvalidEvent("duplicate neighbors in insert")
        dead = set(event.neighbors) - self.shadow.alive
        if dead:
            raise InvalidEvent(f"insert wires to non-alive nodes {sorted(dead)}")

    def _insert(self, event: Event) -> None:
        self.shadow.apply(event)
        self.graph.add_node(event.node)
        for nb in sorted(event.neighbors):
            self.graph.add_black_edge(event.node, nb)
        self.counters.inserts += 1

    def _delete(self, v: int) -> None:
        self.shadow.apply(Event("del", v))
        removed = self.graph.remove_node(v)
        self.counters.deletes += 1
        blacks = sorted(black_neighbors(removed, v))
        self.last_black_neighbors = set(blacks)

        v_primary, v_secondary, lost_roles = self._scrub_dead_node(v)

        if self.fault == "skip-heal":
            return
        self._dispatch_repair(v, removed, blacks, v_primary, v_secondary, lost_roles)
        if self.fault == "drop-black-edge":
            self._drop_one_black_edge()

    # -- bookkeeping when a node dies ------------------------------------

    def _scrub_dead_node(self, v: int) -> tuple[list[int], list[int], dict[int, int]]:
        """Remove *v* from every registry structure.

        Returns v's primary cloud ids, secondary cloud ids, and the map
        secondary-id -> primary-id for bridge roles v held, all of which
        the repair dispatch needs.
        """
        reg = self.registry
        lost_roles: dict[int, int] = {}
        for (f, c), node in list(reg.bridges.items()):
            if node == v:
                lost_roles[f] = c
                del reg.bridges[(f, c)]
        reg.duty.pop(v, None)

        member_of = sorted(reg.clouds_of(v))
        v_primary, v_secondary = [], []
        for cid in member_of:
            cloud = reg.clouds[cid]
            (v_primary if cloud.kind is CloudKind.PRIMARY else v_secondary).append(cid)
            cloud.members.discard(v)
            reg._unlink(v, cid)
            topo = cloud.topology
            topo.members = tuple(m for m in topo.members if m != v)
            topo.edge_list = [e for e in topo.edge_list if v not in e]
            if not cloud.members:
                reg.retire(cid)
        return v_primary, v_secondary, lost_roles

    # -- dispatch ---------------------------------------------------------

    def _dispatch_repair(self, v: int, removed: list[EdgeRecord], blacks: list[int],
                         v_primary: list[int], v_secondary: list[int],
                         lost_roles: dict[int, int]) -> None:
        lost_colors = {c for rec in removed for c in rec.colors if c != BLACK}
        lost_kinds = {rec.kinds[c] for rec in removed for c in rec.colors if c != BLACK}

        if not lost_colors:
            self.counters.branch_all_black += 1
            if blacks:
                self._build_cloud(blacks, CloudKind.PRIMARY)
            return

        if CloudKind.SECONDARY not in lost_kinds:
            self.counters.branch_primary += 1
            affected = sorted(c for c in lost_colors
                              if c in self.registry.clouds
                              and self.registry.clouds[c].kind is CloudKind.PRIMARY)
            self._fix_primary_clouds(affected)
            participants = [c for c in affected if c in self.registry.clouds]
            self._make_secondary_cloud(participants, blacks)
            return

        self.counters.branch_secondary += 1
        self._fix_primary_clouds(v_primary)
        merged_ids: list[int] = []
        for f in sorted(lost_roles):
            merged = self._fix_secondary_cloud(f, lost_roles[f])
            if merged is not None:
                merged_ids.append(merged)
        # The new secondary must tie together every region the deleted
        # node used to join.  Regions with an outside attachment (a
        # surviving secondary that bridges some primary, a merge result,
        # an unbridged primary) each contribute one cloud participant; a
        # surviving secondary with no bridged primary has no attachment
        # at all, so it is folded: retired, its members joining the new
        # cloud directly, like black neighbors.
        reg = self.registry
        bridged: set[int] = set()
        anchors: list[int] = []
        folds: list[int] = []
        for f in sorted(set(v_secondary)):
            if f not in reg.clouds:
                continue
            reachable = sorted(reg.bridged_primaries(f))
            bridged |= set(reachable)
            if reachable:
                anchors.append(reachable[0])
                if f not in lost_roles:
                    self._fix_secondary_cloud(f, None)
            else:
                folds.append(f)
        leftovers = {c for c in v_primary if c in reg.clouds and c not in bridged}
        participants = sorted(leftovers | set(anchors)
                              | {m for m in merged_ids if m in reg.clouds})
        fold_nodes: set[int] = set()
        for f in folds:
            fold_nodes |= reg.clouds[f].members
        loose = sorted(set(blacks) | fold_nodes)
        if not loose and len(participants) <= 1:
            # a single self-contained region (or none) needs no tie;
            # folds always carry members, so none are pending here
            return
        self.graph.begin_repair_phase()
        marked = self._strip_cloud_edges(folds)
        for f in folds:
            reg.retire(f)
        self._make_secondary_cloud(participants, loose)
        self._purge_marked(marked)
        self.graph.end_repair_phase()

    # -- repair subroutines ----------------------------------------------

    def _fix_primary_clouds(self, cloud_ids: Sequence[int]) -> None:
        """Rebuild each listed primary cloud over its surviving members,
        reusing edges across all of them before purging."""
        live = [cid for cid in sorted(set(cloud_ids)) if cid in self.registry.clouds]
        if not live:
            return
        self.graph.begin_repair_phase()
        marked = self._strip_cloud_edges(live)
        for cid in live:
            self._build_cloud(sorted(self.registry.clouds[cid].members),
                              CloudKind.PRIMARY, color=cid)
        self._purge_marked(marked)
        self.graph.end_repair_phase()

    def _make_secondary_cloud(self, cloud_ids: Sequence[int],
                              extra_members: Sequence[int]) -> None:
        """Bridge one free node per participant cloud, plus any loose
        nodes (black neighbors, folded members), into a fresh secondary
        cloud.  If any participant has no reachable free node,
        everything merges instead."""
        cids = [cid for cid in sorted(set(cloud_ids))
                if cid in self.registry.clouds and self.registry.clouds[cid].members]
        extras = sorted(set(extra_members))
        if not cids and not extras:
            return
        picks: dict[int, int] = {}
        reserved: set[int] = set()
        for cid in cids:
            free = self._pick_free_node(cid, reserved)
            if free is None:
                self._merge_into_primary(cids, extra_nodes=extras)
                return
            picks[cid] = free
            reserved.add(free)
        members = sorted(set(picks.values()) | set(extras))
        fid = self._build_cloud(members, CloudKind.SECONDARY)
        assert fid is not None
        for cid in sorted(picks):
            self.registry.bridges[(fid, cid)] = picks[cid]
            self.registry.duty[picks[cid]] = fid
        for node in extras:
            # a loose node that already bridges another secondary keeps
            # that duty; it still joins here as a plain member
            self.registry.duty.setdefault(node, fid)

    def _fix_secondary_cloud(self, fid: int, lost_primary: int | None) -> int | None:
        """Repair secondary cloud *fid* after it lost the deleted node.

        When the node was the bridge of some primary cloud, a free
        replacement is drafted (merging everything if none exists);
        either way the cloud is rebuilt over its surviving members.
        Returns the id of the merge result when a merge happened.
        """
        reg = self.registry
        if fid not in reg.clouds:
            return None
        cloud = reg.clouds[fid]
        if lost_primary is not None and lost_primary in reg.clouds:
            replacement = self._pick_free_node(lost_primary, set())
            if replacement is None:
                merge_list = sorted({fid, lost_primary} | reg.bridged_primaries(fid))
                return self._merge_into_primary(merge_list, extra_nodes=())
            reg.duty[replacement] = fid
            reg.bridges[(fid, lost_primary)] = replacement
            new_members = sorted(cloud.members | {replacement})
        else:
            if not cloud.members:
                return None
            new_members = sorted(cloud.members)
        self.graph.begin_repair_phase()
        marked = self._strip_cloud_edges([fid])
        self._build_cloud(new_members, CloudKind.SECONDARY, color=fid)
        self._purge_marked(marked)
        self.graph.end_repair_phase()
        return None

    def _merge_into_primary(self, cloud_ids: Sequence[int],
                            extra_nodes: Sequence[int]) -> int | None:
        """Collapse the listed clouds (and any loose nodes) into one
        fresh primary cloud, retiring the constituents."""
        live = [cid for cid in sorted(set(cloud_ids)) if cid in self.registry.clouds]
        union = set(extra_nodes)
        for cid in live:
            union |= self.registry.clouds[cid].members
        if not union:
            return None
        self.graph.begin_repair_phase()
        marked = self._strip_cloud_edges(live)
        for cid in live:
            self.registry.retire(cid)
        merged = self._build_cloud(sorted(union), CloudKind.PRIMARY)
        self._purge_marked(marked)
        self.graph.end_repair_phase()
        self.counters.merges += 1
        return merged

    def _pick_free_node(self, cid: int, reserved: set[int]) -> int | None:
        """Smallest-id member of the cloud with no secondary duty, else
        the smallest-id free node of a primary cloud sharing a member
        (borrowed), else None."""
        reg = self.registry
        cloud = reg.clouds[cid]
        for node in sorted(cloud.members):
            if node not in reg.duty and node not in reserved:
                return node
        neighbor_cids = sorted({
            other
            for m in cloud.members
            for other in reg.clouds_of(m)
            if other != cid and reg.clouds[other].kind is CloudKind.PRIMARY
        })
        candidates = sorted({
            node
            for other in neighbor_cids
            for node in reg.clouds[other].members
            if node not in reg.duty and node not in reserved
        })
        if candidates:
            self.counters.bridges_borrowed += 1
            return candidates[0]
        self.counters.free_node_misses += 1
        return None

    # -- edge lifecycle ----------------------------------------------------

    def _build_cloud(self, members: Sequence[int], kind: CloudKind,
                     color: int | None = None) -> int | None:
        """Design a topology over *members* and realize it edge by edge,
        reusing existing edges.  A fresh color registers a new cloud; an
        existing color rebuilds that cloud in place."""
        member_list = sorted(set(members))
        if not member_list:
            return None
        if color is None:
            color = self.next_cloud_id
            self.next_cloud_id += 1
            self.counters.clouds_built += 1
        else:
            self.counters.clouds_rebuilt += 1
        topology = build_topology(member_list, self.cfg, self.rng)
        for u, v in topology.edge_list:
            outcome = self.graph.ensure_edge_color(u, v, color, kind)
            if outcome is EnsureResult.CREATED:
                self.counters.edges_created += 1
            else:
                self.counters.edges_reused += 1
        self.registry.put(Cloud(color, kind, set(member_list), topology))
        return color

    def _strip_cloud_edges(self, cloud_ids: Sequence[int]) -> list[EdgeKey]:
        """Remove each cloud's color from its recorded edges, marking
        the ones that drain colorless as deletion candidates."""
        marked: set[EdgeKey] = set()
        for cid in cloud_ids:
            for u, v in sorted(self.registry.clouds[cid].topology.edge_list):
                if self.graph.strip_color(u, v, cid) is StripResult.NOW_EMPTY:
                    self.graph.mark_edge(u, v)
                    marked.add(edge_key(u, v))
        return sorted(marked)

    def _purge_marked(self, marked: Sequence[EdgeKey]) -> None:
        """Delete marked edges nobody recolored; unmark the reused ones."""
        for u, v in marked:
            if self.graph.purge_if_colorless(u, v) is PurgeResult.DELETED:
                self.counters.edges_deleted += 1

    # -- fault injection ----------------------------------------------------

    def _drop_one_black_edge(self) -> None:
        candidates = sorted(rec.key for rec in self.graph.edges() if BLACK in rec.colors)
        if not candidates:
            return
        u, v = self.rng.choice(candidates)
        rec = self.graph.edge(u, v)
        rec.colors.discard(BLACK)
        if rec.colors:
            return
        rec.marked = True
        self.graph.purge_if_colorless(u, v)


# -- coherence oracle ---------------------------------------------------


def expected_edge_state(healer: Healer) -> dict[EdgeKey, tuple[set[int], dict[int, CloudKind]]]:
    """Reconstruct, from the shadow and the registry alone, the color
    set and kind map every live edge is supposed to carry."""
    expected: dict[EdgeKey, tuple[set[int], dict[int, CloudKind]]] = {}
    alive = healer.shadow.alive
    for u, v in healer.shadow.edges:
        if u in alive and v in alive:
            expected[edge_key(u, v)] = ({BLACK}, {})
    for cid, cloud in healer.registry.clouds.items():
        for key in cloud.topology.edge_list:
            colors, kinds = expected.setdefault(key, (set(), {}))
            colors.add(cid)
            kinds[cid] = cloud.kind
    return expected


def coherence_errors(healer: Healer) -> list[str]:
    """Full cross-check of graph, shadow, and registry.

    Empty result means: the graph's color sets are exactly what the
    registry implies, structural indexes agree, and no repair-phase
    debris (marked or colorless edges) is left behind.
    """
    errs = healer.graph.integrity_errors()
    errs.extend(healer.registry.validation_errors(set(healer.shadow.alive)))
    if healer.graph.node_set != healer.shadow.alive:
        errs.append("live node set differs from shadow alive set")
    expected = expected_edge_state(healer)
    actual = {rec.key: rec for rec in healer.graph.edges()}
    for key in sorted(set(expected) | set(actual)):
        if key not in actual:
            errs.append(f"edge {key} expected but missing from graph")
        elif key not in expected:
            errs.append(f"edge {key} present but unexplained by registry/shadow")
        else:
            colors, kinds = expected[key]
            if actual[key].colors != colors:
                errs.append(f"edge {key} colors {sorted(actual[key].colors)} "
                            f"!= expected {sorted(colors)}")
            if actual[key].kinds != kinds:
                errs.append(f"edge {key} kind map mismatch")
    return errs
