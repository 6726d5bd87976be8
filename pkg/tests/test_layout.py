import numpy as np
import pytest

from gossipne import (
    GraphError,
    build_graph,
    build_layout,
    complete_graph,
    extract_estimate,
    layout_to_json,
    replicate,
    shared_players,
)
from conftest import random_connected_graph

# 1-based slot table of the 4-player example, as published.
EXAMPLE_SLOTS = {
    "1,1": 1, "1,2": 2, "1,3": 3, "1,4": 4,
    "2,1": 5, "2,2": 6, "2,3": 7,
    "3,1": 8, "3,2": 9, "3,3": 10, "3,4": 11,
    "4,1": 12, "4,3": 13, "4,4": 14,
}


def test_example_layout_matches_reference_table(example_layout):
    assert example_layout.dims == (4, 3, 4, 3)
    assert example_layout.total_dim == 14
    dump = layout_to_json(example_layout)
    assert dump["slots"] == EXAMPLE_SLOTS
    assert dump["dims"] == [4, 3, 4, 3]
    # player 2's estimate of player 3 sits at stacked index 7 (1-based)
    assert example_layout.slot[(1, 2)] == 6


def test_two_player_path_layout():
    layout = build_layout(build_graph(2, [(0, 1)]))
    assert layout.dims == (2, 2)
    assert layout.total_dim == 4
    assert layout.slot == {(0, 0): 0, (0, 1): 1, (1, 0): 2, (1, 1): 3}


def test_triangle_layout_block_identity():
    layout = build_layout(complete_graph(3))
    assert layout.total_dim == 9
    hth = layout.replication.T @ layout.replication
    assert np.array_equal(hth, 3 * np.eye(3, dtype=np.int64))


def test_shared_players_examples(example_layout):
    assert shared_players(example_layout, 1, 2) == {0, 1, 2}
    path = build_layout(build_graph(2, [(0, 1)]))
    assert shared_players(path, 0, 1) == {0, 1}
    k4 = build_layout(complete_graph(4))
    assert shared_players(k4, 0, 3) == {0, 1, 2, 3}


def test_extract_estimate_example(example_layout):
    stacked = np.arange(1.0, 15.0)
    own, others = extract_estimate(example_layout, stacked, 1)
    assert own == 6.0
    assert others.tolist() == [5.0, 7.0]


def test_extract_estimate_on_replicated_vector(example_layout):
    z = np.array([3.0, -1.0, 2.5, 7.0])
    stacked = replicate(example_layout, z)
    for i in range(4):
        own, others = extract_estimate(example_layout, stacked, i)
        assert own == z[i]
        assert others.tolist() == [z[j] for j in example_layout.neighbors[i]]


def test_extract_estimate_path():
    layout = build_layout(build_graph(2, [(0, 1)]))
    own, others = extract_estimate(layout, np.array([1.0, 2.0, 3.0, 4.0]), 0)
    assert own == 1.0 and others.tolist() == [2.0]


def test_extract_dimension_mismatch(example_layout):
    with pytest.raises(ValueError, match="length 14"):
        extract_estimate(example_layout, np.zeros(5), 0)


def test_layout_rejects_tiny_or_disconnected():
    with pytest.raises(GraphError):
        build_layout(build_graph(1, []))
    with pytest.raises(GraphError):
        build_layout(build_graph(4, [(0, 1), (2, 3)]))


def test_random_layout_identities():
    rng = np.random.default_rng(42)
    for _ in range(100):
        n = int(rng.integers(2, 13))
        g = random_connected_graph(rng, n)
        layout = build_layout(g)
        m = layout.total_dim
        assert n < m <= n * n
        # slot map is a bijection onto 0..m-1
        assert sorted(layout.slot.values()) == list(range(m))
        h = layout.replication
        assert np.array_equal(h.T @ h, np.diag(np.array(layout.dims, dtype=np.int64)))
        assert np.abs(layout.block_mean @ h - np.eye(n)).max() < 1e-14
        assert np.array_equal(h.sum(axis=0), np.array(layout.dims))
        # replication followed by extraction is the identity on actions
        z = rng.standard_normal(n)
        stacked = replicate(layout, z)
        for i in range(n):
            own, others = extract_estimate(layout, stacked, i)
            assert own == z[i]
            assert np.array_equal(others, z[list(layout.neighbors[i])])
