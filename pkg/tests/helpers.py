"""Independent brute-force oracles and small builders shared by tests.

Everything here deliberately avoids the production code paths it is
used to check: densities count pairs, expansion enumerates subsets in
descending size order, graphs are built edge by edge.
"""
from __future__ import annotations

import itertools
import random
from fractions import Fraction

from xhealsim.graph import ColoredGraph


def density_oracle(has_edge, subset) -> Fraction:
    """|E(S)|/|S| by enumerating all node pairs."""
    nodes = sorted(subset)
    edges = sum(1 for u, v in itertools.combinations(nodes, 2) if has_edge(u, v))
    return Fraction(edges, len(nodes))


def expansion_oracle(adjacency: dict[int, set[int]]) -> Fraction:
    """Minimum cut ratio by plain subset enumeration, largest sizes first."""
    nodes = sorted(adjacency)
    n = len(nodes)
    best = None
    for k in range(n // 2, 0, -1):
        for combo in itertools.combinations(nodes, k):
            inside = set(combo)
            crossing = sum(1 for u in inside for v in adjacency[u] if v not in inside)
            cand = Fraction(crossing, k)
            if best is None or cand < best:
                best = cand
    return best


def random_adjacency(n: int, p: float, rng: random.Random) -> dict[int, set[int]]:
    adj: dict[int, set[int]] = {i: set() for i in range(n)}
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                adj[i].add(j)
                adj[j].add(i)
    return adj


def graph_from_edges(nodes, edges) -> ColoredGraph:
    g = ColoredGraph()
    for v in nodes:
        g.add_node(v)
    for u, v in edges:
        g.add_black_edge(u, v)
    return g


def cycle_adjacency(n: int) -> dict[int, set[int]]:
    return {i: {(i - 1) % n, (i + 1) % n} for i in range(n)}


def complete_adjacency(n: int) -> dict[int, set[int]]:
    return {i: {j for j in range(n) if j != i} for i in range(n)}
