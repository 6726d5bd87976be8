import numpy as np
import pytest

from gossipne import (
    GraphPair,
    UndirectedGraph,
    build_graph,
    build_layout,
    is_connected,
    maximal_triangle_free_spanning_subgraph,
)

# 4-player example used throughout: interference pentagon-with-chord,
# communication graph one edge short of it (0-indexed).
EXAMPLE_GI_EDGES = [(0, 1), (1, 2), (2, 3), (0, 3), (0, 2)]
EXAMPLE_GC_EDGES = [(0, 1), (1, 2), (0, 3), (0, 2)]


@pytest.fixture(scope="session")
def example_gi() -> UndirectedGraph:
    return build_graph(4, EXAMPLE_GI_EDGES)


@pytest.fixture(scope="session")
def example_gc() -> UndirectedGraph:
    return build_graph(4, EXAMPLE_GC_EDGES)


@pytest.fixture(scope="session")
def example_pair(example_gi, example_gc) -> GraphPair:
    return GraphPair.build(example_gi, example_gc)


@pytest.fixture(scope="session")
def example_layout(example_gi):
    return build_layout(example_gi)


def random_connected_graph(rng: np.random.Generator, n: int, extra_edge_prob: float = 0.3):
    """Random spanning tree plus a seeded sprinkling of extra edges."""
    edges = set()
    order = rng.permutation(n)
    for idx in range(1, n):
        parent = order[rng.integers(idx)]
        child = order[idx]
        edges.add((min(parent, child), max(parent, child)))
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) not in edges and rng.random() < extra_edge_prob:
                edges.add((i, j))
    g = build_graph(n, edges)
    assert is_connected(g)
    return g


def random_admissible_pair(rng: np.random.Generator, n: int) -> GraphPair:
    """Random connected interference graph with a communication graph
    sampled between its triangle-free core and the full graph."""
    g_i = random_connected_graph(rng, n)
    g_m = maximal_triangle_free_spanning_subgraph(g_i)
    optional = sorted(g_i.edges - g_m.edges)
    keep = [e for e in optional if rng.random() < 0.5]
    g_c = build_graph(n, sorted(g_m.edges) + keep)
    return GraphPair(g_interference=g_i, g_communication=g_c, g_triangle_free=g_m)
