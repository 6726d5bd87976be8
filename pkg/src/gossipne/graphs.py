"""Undirected graphs and the interference/communication graph machinery.

The simulator works with three graphs on the same player set: the
interference graph (whose actions enter whose cost), the communication
graph (who may gossip with whom), and a maximal triangle-free spanning
subgraph of the interference graph, which is the sparsest communication
graph that still lets every player collect all the estimates it needs.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np


class GraphError(ValueError):
    """Raised for malformed graphs or impossible constructions."""


def _canonical_edge(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True, eq=False)
class UndirectedGraph:
    """Simple undirected graph on vertices 0..n-1 with no self-loops."""

    n: int
    edges: frozenset[tuple[int, int]]

    @cached_property
    def neighbor_sets(self) -> tuple[frozenset[int], ...]:
        nbrs: list[set[int]] = [set() for _ in range(self.n)]
        for i, j in self.edges:
            nbrs[i].add(j)
            nbrs[j].add(i)
        return tuple(frozenset(s) for s in nbrs)

    @cached_property
    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=np.int64)
        for i, j in self.edges:
            a[i, j] = 1
            a[j, i] = 1
        return a

    def neighbors(self, i: int) -> tuple[int, ...]:
        return tuple(sorted(self.neighbor_sets[i]))

    def closed_neighbors(self, i: int) -> tuple[int, ...]:
        return tuple(sorted(self.neighbor_sets[i] | {i}))

    def degree(self, i: int) -> int:
        return len(self.neighbor_sets[i])

    def has_edge(self, i: int, j: int) -> bool:
        return _canonical_edge(i, j) in self.edges

    def is_complete(self) -> bool:
        return len(self.edges) == self.n * (self.n - 1) // 2

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, UndirectedGraph):
            return NotImplemented
        return self.n == other.n and self.edges == other.edges

    def __hash__(self) -> int:
        return hash((self.n, self.edges))


def build_graph(n: int, edges: Iterable[Sequence[int]]) -> UndirectedGraph:
    """Build a graph from vertex count and edge pairs, deduplicating edges.

    Rejects self-loops and out-of-range vertices, reporting the offending
    pair.
    """
    if n < 1:
        raise GraphError(f"vertex count must be positive, got {n}")
    canon: set[tuple[int, int]] = set()
    for pair in edges:
        i, j = int(pair[0]), int(pair[1])
        if i == j:
            raise GraphError(f"self-loop ({i}, {j}) not allowed")
        if not (0 <= i < n and 0 <= j < n):
            raise GraphError(f"edge ({i}, {j}) out of range for n={n}")
        canon.add(_canonical_edge(i, j))
    return UndirectedGraph(n=n, edges=frozenset(canon))


def complete_graph(n: int) -> UndirectedGraph:
    return build_graph(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def is_connected(g: UndirectedGraph) -> bool:
    """Breadth-first reachability from vertex 0."""
    if g.n == 0:
        return False
    seen = {0}
    queue = deque([0])
    while queue:
        v = queue.popleft()
        for w in g.neighbor_sets[v]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return len(seen) == g.n


def _bfs_distances_capped(g: UndirectedGraph, src: int, cap: int) -> dict[int, int]:
    """Distances from src up to cap hops (inclusive)."""
    dist = {src: 0}
    queue = deque([src])
    while queue:
        v = queue.popleft()
        if dist[v] == cap:
            continue
        for w in g.neighbor_sets[v]:
            if w not in dist:
                dist[w] = dist[v] + 1
                queue.append(w)
    return dist


def is_triangle_free(g: UndirectedGraph) -> bool:
    for i, j in g.edges:
        if g.neighbor_sets[i] & g.neighbor_sets[j]:
            return False
    return True


def is_maximal_triangle_free_spanning(sub: UndirectedGraph, g: UndirectedGraph) -> bool:
    """Exhaustive check: sub is triangle-free, spans g's vertices, every
    edge of sub is in g, and adding any remaining g-edge closes a triangle.
    """
    if sub.n != g.n or not sub.edges <= g.edges:
        return False
    if not is_triangle_free(sub):
        return False
    for i, j in g.edges - sub.edges:
        if not (sub.neighbor_sets[i] & sub.neighbor_sets[j]):
            return False
    return True


def _greedy_triangle_free(n: int, order: Sequence[tuple[int, int]]) -> set[tuple[int, int]]:
    nbrs: list[set[int]] = [set() for _ in range(n)]
    chosen: set[tuple[int, int]] = set()
    for i, j in order:
        if not (nbrs[i] & nbrs[j]):
            chosen.add(_canonical_edge(i, j))
            nbrs[i].add(j)
            nbrs[j].add(i)
    return chosen


def _bfs_tree_edges(g: UndirectedGraph) -> list[tuple[int, int]]:
    seen = {0}
    queue = deque([0])
    tree: list[tuple[int, int]] = []
    while queue:
        v = queue.popleft()
        for w in sorted(g.neighbor_sets[v]):
            if w not in seen:
                seen.add(w)
                tree.append(_canonical_edge(v, w))
                queue.append(w)
    return tree


def maximal_triangle_free_spanning_subgraph(
    g_i: UndirectedGraph,
    edge_order: Sequence[tuple[int, int]] | None = None,
) -> UndirectedGraph:
    """Greedy maximal triangle-free spanning subgraph of a connected graph.

    Edges are considered in `edge_order` (default: lexicographic) and kept
    whenever they do not close a triangle with the edges kept so far. Any
    rejected edge closes a triangle with two kept edges, and kept edges are
    never removed, so the result is maximal by construction. Connectivity
    is asserted; if the greedy pass ever produced a disconnected subgraph
    the construction retries with a breadth-first spanning tree seeded
    first, and fails loudly if that also disconnects.
    """
    if not is_connected(g_i):
        raise GraphError("triangle-free subgraph construction needs a connected graph")
    if edge_order is None:
        order = sorted(g_i.edges)
    else:
        order = [_canonical_edge(int(i), int(j)) for i, j in edge_order]
        if set(order) != set(g_i.edges) or len(order) != len(g_i.edges):
            raise GraphError("edge_order must enumerate every graph edge exactly once")

    chosen = _greedy_triangle_free(g_i.n, order)
    sub = UndirectedGraph(n=g_i.n, edges=frozenset(chosen))
    if not is_connected(sub):
        tree = _bfs_tree_edges(g_i)
        rest = [e for e in order if e not in set(tree)]
        chosen = _greedy_triangle_free(g_i.n, tree + rest)
        sub = UndirectedGraph(n=g_i.n, edges=frozenset(chosen))
        if not is_connected(sub):
            raise GraphError("could not construct a connected triangle-free spanning subgraph")
    if not is_maximal_triangle_free_spanning(sub, g_i):
        raise GraphError("greedy construction produced a non-maximal subgraph")
    return sub


@dataclass(frozen=True, eq=False)
class GraphPair:
    """Interference graph, communication graph, and a chosen maximal
    triangle-free spanning subgraph of the interference graph."""

    g_interference: UndirectedGraph
    g_communication: UndirectedGraph
    g_triangle_free: UndirectedGraph

    @classmethod
    def build(
        cls,
        g_interference: UndirectedGraph,
        g_communication: UndirectedGraph | None = None,
        edge_order: Sequence[tuple[int, int]] | None = None,
    ) -> "GraphPair":
        if not is_connected(g_interference):
            raise GraphError("interference graph must be connected")
        g_m = maximal_triangle_free_spanning_subgraph(g_interference, edge_order)
        g_c = g_communication if g_communication is not None else g_m
        if g_c.n != g_interference.n:
            raise GraphError("graphs must share the vertex count")
        return cls(g_interference=g_interference, g_communication=g_c, g_triangle_free=g_m)


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of the communication-graph admissibility checks.

    `sandwich_ok` is the subgraph chain triangle-free <= communication <=
    interference; `fallback_ok` requires every interference neighbor to be
    within two communication hops. The pair is admissible when either
    holds.
    """

    sandwich_ok: bool
    fallback_ok: bool
    passed: bool
    interference_connected: bool
    communication_connected: bool
    communication_within_interference: bool
    violations: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "sandwich_ok": self.sandwich_ok,
            "fallback_ok": self.fallback_ok,
            "passed": self.passed,
            "interference_connected": self.interference_connected,
            "communication_connected": self.communication_connected,
            "communication_within_interference": self.communication_within_interference,
            "violations": list(self.violations),
        }


def validate_communication_graph(pair: GraphPair) -> ValidationReport:
    """Check the admissibility of a communication graph.

    Both the sandwich condition and the two-hop fallback are always
    evaluated so the report stays useful for diagnostics even when the
    first check already settles the outcome.
    """
    g_i, g_c, g_m = pair.g_interference, pair.g_communication, pair.g_triangle_free
    if not (g_i.n == g_c.n == g_m.n):
        raise GraphError("graphs must share the vertex count")
    violations: list[str] = []

    sandwich_ok = g_m.edges <= g_c.edges and g_c.edges <= g_i.edges
    if not g_m.edges <= g_c.edges:
        missing = sorted(g_m.edges - g_c.edges)
        violations.append(f"communication graph misses required edges {missing}")
    subset_ok = g_c.edges <= g_i.edges
    if not subset_ok:
        extra = sorted(g_c.edges - g_i.edges)
        violations.append(f"communication edges outside the interference graph: {extra}")

    fallback_ok = True
    for i in range(g_i.n):
        dist = _bfs_distances_capped(g_c, i, 2)
        for j in sorted(g_i.neighbor_sets[i]):
            if j not in dist:
                fallback_ok = False
                violations.append(
                    f"players {i} and {j} interfere but are more than two communication hops apart"
                )

    gi_conn = is_connected(g_i)
    gc_conn = is_connected(g_c)
    if not gi_conn:
        violations.append("interference graph is disconnected")
    if not gc_conn:
        violations.append("communication graph is disconnected")

    passed = gi_conn and gc_conn and (sandwich_ok or fallback_ok)
    return ValidationReport(
        sandwich_ok=sandwich_ok,
        fallback_ok=fallback_ok,
        passed=passed,
        interference_connected=gi_conn,
        communication_connected=gc_conn,
        communication_within_interference=subset_ok,
        violations=tuple(violations),
    )


def check_neighbor_union(pair: GraphPair) -> bool:
    """True iff every player can assemble estimates of all its
    interference neighbors from the players it communicates with.

    Player i learns about exactly the players that each communication
    partner j also tracks; the union over partners must cover all of i's
    interference neighbors.
    """
    g_i, g_c = pair.g_interference, pair.g_communication
    for i in range(g_i.n):
        need = g_i.neighbor_sets[i]
        got: set[int] = set()
        for j in g_c.neighbor_sets[i]:
            got |= need & (g_i.neighbor_sets[j] | {j})
        if got != set(need):
            return False
    return True


def graph_to_json(g: UndirectedGraph) -> dict:
    return {"n": g.n, "edges": [list(e) for e in sorted(g.edges)]}


def graph_from_json(obj: dict) -> UndirectedGraph:
    return build_graph(int(obj["n"]), obj.get("edges", []))
