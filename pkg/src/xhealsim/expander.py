"""Cloud topology construction and edge-expansion certification.

Small member sets become cliques; larger ones become seeded random
kappa-regular graphs sampled with the pairing model and accepted only
once an expansion certificate clears the configured target.  The
certificate is the exact edge expansion (brute force over all cuts) up
to ``exact_limit`` nodes, and the spectral lower bound lambda2/2 beyond
that.
"""
from __future__ import annotations

import random
from collections import defaultdict, deque
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Mapping, Sequence, AbstractSet

import numpy as np

from .graph import EdgeKey, edge_key


class ExpanderError(Exception):
    pass


class TooLarge(ExpanderError):
    pass


class ZeroNodes(ExpanderError):
    pass


class RetriesExhausted(ExpanderError):
    pass


class TopologyKind(Enum):
    CLIQUE = "clique"
    REGULAR_EXPANDER = "regular_expander"


@dataclass(frozen=True)
class ExpanderConfig:
    """Tuning knobs for cloud construction.

    ``kappa`` must be even (odd regular graphs are not realizable on odd
    member counts) and at least 4.  ``alpha_target`` is the expansion a
    non-clique cloud has to certify before it is accepted.
    """

    kappa: int = 6
    alpha_target: Fraction = Fraction(1)
    exact_limit: int = 20
    max_retries: int = 64

    def __post_init__(self) -> None:
        if self.kappa < 4 or self.kappa % 2 != 0:
            raise ValueError(f"kappa must be even and >= 4, got {self.kappa}")
        if self.alpha_target <= 0:
            raise ValueError("alpha_target must be positive")
        if self.exact_limit < 2:
            raise ValueError("exact_limit must be >= 2")
        if self.max_retries < 1:
            raise ValueError("max_retries must be >= 1")


@dataclass
class CloudTopology:
    kind: TopologyKind
    members: tuple[int, ...]
    edge_list: list[EdgeKey]
    kappa: int
    certified_expansion: Fraction


HARD_ENUMERATION_CEILING = 26


def expansion_exact(adjacency: Mapping[int, AbstractSet[int]], limit: int = 20) -> Fraction:
    """Exact edge expansion: minimum over all cuts with the small side
    at most half the nodes of crossing-edge count over small-side size.

    Every unordered cut is visited once, as the side containing the
    first node; inner-edge counts are built by a vectorized recurrence
    on the highest set bit.  Memory grows as 2^n, so n is capped at 26
    regardless of *limit*.
    """
    n = len(adjacency)
    if n < 2:
        raise ZeroNodes(f"expansion needs >= 2 nodes, got {n}")
    if n > min(limit, HARD_ENUMERATION_CEILING):
        raise TooLarge(f"{n} nodes exceeds exact enumeration limit "
                       f"{min(limit, HARD_ENUMERATION_CEILING)}")
    order = sorted(adjacency)
    index = {v: i for i, v in enumerate(order)}
    nbr_idx: list[list[int]] = [[] for _ in range(n)]
    for v, nbrs in adjacency.items():
        for nb in nbrs:
            nbr_idx[index[v]].append(index[nb])
    deg = [len(nb) for nb in nbr_idx]

    # m encodes the subset S(m) = {0} union {b+1 : bit b of m set}
    total = 1 << (n - 1)
    ar = np.arange(total, dtype=np.int32)
    sizes = np.zeros(total, dtype=np.int16)
    vol = np.zeros(total, dtype=np.int16)
    inner = np.zeros(total, dtype=np.int16)
    sizes[0] = 1
    vol[0] = deg[0]
    for h in range(n - 1):
        lo = 1 << h
        node = h + 1
        sizes[lo:2 * lo] = sizes[:lo] + 1
        vol[lo:2 * lo] = vol[:lo] + deg[node]
        gained = np.zeros(lo, dtype=np.int16)
        for j in nbr_idx[node]:
            if j == 0:
                gained += 1
            elif j < node:
                gained += ((ar[:lo] >> (j - 1)) & 1).astype(np.int16)
        inner[lo:2 * lo] = inner[:lo] + gained
    cross = vol - 2 * inner

    # Crossing counts and sizes are small integers, so float64 quotients
    # are correctly rounded and distinct ratios differ by at least
    # 1/(half^2), far above rounding error: the float argmin is the
    # exact minimum, recovered below as an exact fraction.
    half = n // 2
    best: Fraction | None = None
    chunk = 1 << 22
    for lo in range(0, total, chunk):
        size_c = sizes[lo:lo + chunk].astype(np.float64)
        cross_c = cross[lo:lo + chunk].astype(np.float64)
        own = np.full(size_c.shape, np.inf)
        np.divide(cross_c, size_c, out=own, where=size_c <= half)
        comp_size = n - size_c
        comp = np.full(size_c.shape, np.inf)
        np.divide(cross_c, comp_size, out=comp,
                  where=(comp_size >= 1) & (comp_size <= half))
        for ratios, denom in ((own, size_c), (comp, comp_size)):
            pos = int(ratios.argmin())
            if ratios[pos] == np.inf:
                continue
            cand = Fraction(int(cross[lo + pos]), int(denom[pos]))
            if best is None or cand < best:
                best = cand
    assert best is not None
    return best


def _cheeger_lower_bound(adjacency: Mapping[int, AbstractSet[int]]) -> Fraction:
    """lambda2/2 as a conservative exact rational.

    The eigenvalue itself is floating point; rounding down at 32
    fractional bits keeps the certificate a valid lower bound well below
    the solver tolerance.
    """
    from .metrics import lambda2_of_adjacency  # deferred: metrics imports us

    lam = lambda2_of_adjacency(adjacency)
    safe = max(0.0, lam - 1e-8)
    return Fraction(int(safe * (1 << 32)), 1 << 33)


def certify_expansion(
    members: Sequence[int], edge_list: Sequence[EdgeKey], cfg: ExpanderConfig
) -> Fraction:
    """Expansion certificate for an explicit topology: exact when small
    enough, spectral lower bound otherwise, zero for degenerate sizes."""
    if len(members) < 2:
        return Fraction(0)
    adj = _as_adjacency(members, edge_list)
    if len(members) <= cfg.exact_limit:
        return expansion_exact(adj, limit=cfg.exact_limit)
    return _cheeger_lower_bound(adj)


def _as_adjacency(members: Sequence[int], edge_list: Sequence[EdgeKey]
                  ) -> dict[int, set[int]]:
    adj: dict[int, set[int]] = {v: set() for v in members}
    for u, v in edge_list:
        adj[u].add(v)
        adj[v].add(u)
    return adj


def _gate_certificate(adj: dict[int, set[int]], cfg: ExpanderConfig) -> Fraction:
    """Cheapest certificate that can clear the acceptance gate.

    The spectral bound is a few eigensolver milliseconds and usually
    already beats alpha_target; the exponential exact cut enumeration
    only runs when the spectral bound falls short and the graph is small
    enough.  Both are valid lower bounds on the true expansion.
    """
    cert = _cheeger_lower_bound(adj)
    if cert < cfg.alpha_target and len(adj) <= cfg.exact_limit:
        cert = expansion_exact(adj, limit=cfg.exact_limit)
    return cert


def _pairing_attempt(n: int, kappa: int, rng: random.Random) -> set[tuple[int, int]] | None:
    """One pairing-model draw of a simple kappa-regular graph on
    0..n-1, rematching clashing stubs; None when the draw dead-ends."""

    def suitable(edges: set[tuple[int, int]], potential: dict[int, int]) -> bool:
        if not potential:
            return True
        stubs = list(potential)
        for i, s1 in enumerate(stubs):
            for s2 in stubs[i + 1:]:
                if (min(s1, s2), max(s1, s2)) not in edges:
                    return True
        return False

    edges: set[tuple[int, int]] = set()
    stubs = list(range(n)) * kappa
    rounds = 0
    while stubs:
        rounds += 1
        if rounds > 200:
            return None
        potential: dict[int, int] = defaultdict(int)
        rng.shuffle(stubs)
        it = iter(stubs)
        for s1, s2 in zip(it, it):
            if s1 > s2:
                s1, s2 = s2, s1
            if s1 != s2 and (s1, s2) not in edges:
                edges.add((s1, s2))
            else:
                potential[s1] += 1
                potential[s2] += 1
        if not suitable(edges, potential):
            return None
        stubs = [node for node, count in potential.items() for _ in range(count)]
    return edges


def _connected(n: int, edges: set[tuple[int, int]]) -> bool:
    adj: dict[int, set[int]] = {i: set() for i in range(n)}
    for u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
    seen = {0}
    queue = deque([0])
    while queue:
        cur = queue.popleft()
        for nb in adj[cur]:
            if nb not in seen:
                seen.add(nb)
                queue.append(nb)
    return len(seen) == n


def build_topology(
    members: Sequence[int], cfg: ExpanderConfig, rng: random.Random
) -> CloudTopology:
    """Design the edge set of a cloud over *members*.

    Up to kappa+1 members the cloud is a clique (its exact expansion is
    recorded but never gated).  Beyond that, kappa-regular candidates
    are sampled until one is simple, connected, and certifies expansion
    at least ``alpha_target``.  Deterministic for a fixed rng state.
    """
    ordered = list(members)
    if len(set(ordered)) != len(ordered):
        raise ValueError("cloud members must be distinct")
    m = len(ordered)
    ranked = sorted(ordered)

    if m <= cfg.kappa + 1:
        edge_list = sorted(
            edge_key(ranked[i], ranked[j]) for i in range(m) for j in range(i + 1, m)
        )
        # a clique's minimum cut ratio is attained by a half split:
        # |S|*(m-|S|)/|S| = m - |S|, smallest at |S| = floor(m/2)
        cert = Fraction(0) if m < 2 else Fraction(m - m // 2)
        return CloudTopology(TopologyKind.CLIQUE, tuple(ranked), edge_list, cfg.kappa, cert)

    for _ in range(cfg.max_retries):
        idx_edges = _pairing_attempt(m, cfg.kappa, rng)
        if idx_edges is None or not _connected(m, idx_edges):
            continue
        edge_list = sorted(edge_key(ranked[i], ranked[j]) for i, j in idx_edges)
        cert = _gate_certificate(_as_adjacency(ranked, edge_list), cfg)
        if cert >= cfg.alpha_target:
            return CloudTopology(
                TopologyKind.REGULAR_EXPANDER, tuple(ranked), edge_list, cfg.kappa, cert
            )
    raise RetriesExhausted(
        f"no {cfg.kappa}-regular candidate on {m} nodes certified "
        f"expansion >= {cfg.alpha_target} within {cfg.max_retries} tries"
    )


def verify_cloud(topology: CloudTopology, cfg: ExpanderConfig) -> Fraction:
    """Recompute the expansion certificate of a built topology."""
    return certify_expansion(list(topology.members), topology.edge_list, cfg)
