"""Estimate-vector layout: slot indexing and the replication/averaging
matrices that turn per-player estimate blocks into one stacked vector.

Each player keeps one estimate per member of its closed interference
neighborhood (its own action included). Blocks are stacked player by
player; inside a block, slots are ordered by the estimated player's id.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import GraphError, UndirectedGraph, is_connected


@dataclass(frozen=True, eq=False)
class EstimateLayout:
    """Immutable index map for the stacked estimate vector.

    Attributes:
        n: number of players.
        closed_adjacency: adjacency of the interference graph plus identity.
        dims: per-player estimate counts (interference degree + 1).
        total_dim: sum of dims, the stacked vector length.
        slot: (owner, estimated player) -> stacked index, 0-based.
        slot_owner: owning player of each slot.
        slot_player: estimated player of each slot.
        own_slot: per player, the slot holding its own action.
        neighbor_slots: per player, slots of its interference neighbors in
            ascending neighbor order.
        neighbors: per player, ascending interference neighbors.
        replication: 0/1 matrix mapping an action vector to the stacked
            layout (column j has ones at every slot that estimates j).
        block_mean: left inverse of replication that averages the slots
            estimating each player.
    """

    n: int
    closed_adjacency: np.ndarray
    dims: tuple[int, ...]
    total_dim: int
    slot: dict[tuple[int, int], int]
    slot_owner: np.ndarray
    slot_player: np.ndarray
    own_slot: np.ndarray
    neighbor_slots: tuple[np.ndarray, ...]
    neighbors: tuple[tuple[int, ...], ...]
    replication: np.ndarray
    block_mean: np.ndarray
    graph: UndirectedGraph


def build_layout(g_i: UndirectedGraph) -> EstimateLayout:
    """Build the stacked-estimate layout for a connected interference graph."""
    if g_i.n < 2:
        raise GraphError("layout needs at least two players")
    if not is_connected(g_i):
        raise GraphError("layout needs a connected interference graph")

    n = g_i.n
    closed = g_i.adjacency + np.eye(n, dtype=np.int64)
    dims = tuple(int(g_i.degree(i)) + 1 for i in range(n))
    total = int(sum(dims))

    slot: dict[tuple[int, int], int] = {}
    slot_owner = np.empty(total, dtype=np.int64)
    slot_player = np.empty(total, dtype=np.int64)
    offset = 0
    for i in range(n):
        for j in g_i.closed_neighbors(i):
            slot[(i, j)] = offset
            slot_owner[offset] = i
            slot_player[offset] = j
            offset += 1
    assert offset == total

    own_slot = np.array([slot[(i, i)] for i in range(n)], dtype=np.int64)
    neighbor_slots = tuple(
        np.array([slot[(i, j)] for j in g_i.neighbors(i)], dtype=np.int64) for i in range(n)
    )
    neighbors = tuple(g_i.neighbors(i) for i in range(n))

    replication = np.zeros((total, n), dtype=np.int64)
    replication[np.arange(total), slot_player] = 1
    dims_arr = np.array(dims, dtype=np.float64)
    block_mean = (replication.T / dims_arr[:, None]).astype(np.float64)

    return EstimateLayout(
        n=n,
        closed_adjacency=closed,
        dims=dims,
        total_dim=total,
        slot=slot,
        slot_owner=slot_owner,
        slot_player=slot_player,
        own_slot=own_slot,
        neighbor_slots=neighbor_slots,
        neighbors=neighbors,
        replication=replication,
        block_mean=block_mean,
        graph=g_i,
    )


def shared_players(layout: EstimateLayout, i: int, j: int) -> set[int]:
    """Players whose estimates both i and j keep (closed neighborhoods
    intersected); these are the slots a gossip exchange between i and j
    averages."""
    b = layout.closed_adjacency
    return {d for d in range(layout.n) if b[i, d] and b[j, d]}


def extract_estimate(
    layout: EstimateLayout, stacked: np.ndarray, i: int
) -> tuple[float, np.ndarray]:
    """Player i's view of a stacked vector: (own action, neighbor estimates
    in ascending neighbor order)."""
    stacked = np.asarray(stacked, dtype=np.float64)
    if stacked.shape != (layout.total_dim,):
        raise ValueError(
            f"expected a vector of length {layout.total_dim}, got shape {stacked.shape}"
        )
    own = float(stacked[layout.own_slot[i]])
    others = stacked[layout.neighbor_slots[i]].copy()
    return own, others


def block_average(layout: EstimateLayout, stacked: np.ndarray) -> np.ndarray:
    """Per-player mean over all slots estimating that player."""
    sums = np.bincount(layout.slot_player, weights=stacked, minlength=layout.n)
    return sums / np.asarray(layout.dims, dtype=np.float64)


def replicate(layout: EstimateLayout, actions: np.ndarray) -> np.ndarray:
    """Broadcast an action vector onto the stacked layout."""
    actions = np.asarray(actions, dtype=np.float64)
    if actions.shape != (layout.n,):
        raise ValueError(f"expected {layout.n} actions, got shape {actions.shape}")
    return actions[layout.slot_player]


def layout_to_json(layout: EstimateLayout) -> dict:
    """Dump dims and the slot table with 1-based players and indices, the
    convention used by the reference tables."""
    table = {f"{i + 1},{j + 1}": idx + 1 for (i, j), idx in sorted(layout.slot.items())}
    return {"dims": list(layout.dims), "total_dim": layout.total_dim, "slots": table}
