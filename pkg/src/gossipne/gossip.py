"""Gossip mixing matrices, their expectation under the uniform scheduler,
and the spectral quantities driving consensus.

A gossip event between communication neighbors i and j averages, slot by
slot, the estimates both players keep. The per-event mixing matrix is
doubly stochastic and acts as the identity outside the affected slots. Its
expectation over the uniform wake-up scheduler has second-largest
eigenvalue gamma, the contraction factor of the consensus error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import GraphError, UndirectedGraph
from .layout import EstimateLayout, shared_players

# Eigenvalues within this distance of 1 count as the leading (consensus)
# eigenvalue when locating the second-largest one.
_UNIT_EIG_GAP = 1e-9


def gossip_slot_pairs(layout: EstimateLayout, i: int, j: int) -> tuple[np.ndarray, np.ndarray]:
    """Slot indices (in i's block, in j's block) averaged when i and j
    gossip, one pair per shared player, ascending."""
    shared = sorted(shared_players(layout, i, j))
    a = np.array([layout.slot[(i, d)] for d in shared], dtype=np.int64)
    b = np.array([layout.slot[(j, d)] for d in shared], dtype=np.int64)
    return a, b


@dataclass(frozen=True, eq=False)
class GossipMatrix:
    """Dense mixing matrix for one gossip event, with the slot pairs it
    averages."""

    pair: tuple[int, int]
    slot_pairs: tuple[tuple[int, int], ...]
    matrix: np.ndarray


def mixing_matrix(
    layout: EstimateLayout, g_c: UndirectedGraph, i: int, j: int
) -> GossipMatrix:
    """Mixing matrix for an event on communication edge (i, j).

    Identity minus half the sum of rank-one terms, one per shared player;
    each term averages the pair of slots in which i and j estimate that
    player.
    """
    if not g_c.has_edge(i, j):
        raise GraphError(f"({i}, {j}) is not a communication edge")
    a_idx, b_idx = gossip_slot_pairs(layout, i, j)
    m = layout.total_dim
    w = np.eye(m)
    for a, b in zip(a_idx, b_idx):
        w[a, a] -= 0.5
        w[b, b] -= 0.5
        w[a, b] += 0.5
        w[b, a] += 0.5
    return GossipMatrix(
        pair=(i, j),
        slot_pairs=tuple((int(a), int(b)) for a, b in zip(a_idx, b_idx)),
        matrix=w,
    )


def apply_mixing(
    layout: EstimateLayout,
    pair_slots: tuple[np.ndarray, np.ndarray],
    stacked: np.ndarray,
) -> np.ndarray:
    """Apply one gossip event without materializing the matrix: every
    shared slot pair is replaced by its mean, all other entries pass
    through."""
    stacked = np.asarray(stacked, dtype=np.float64)
    if stacked.shape != (layout.total_dim,):
        raise ValueError(
            f"expected a vector of length {layout.total_dim}, got shape {stacked.shape}"
        )
    a_idx, b_idx = pair_slots
    out = stacked.copy()
    mean = 0.5 * (stacked[a_idx] + stacked[b_idx])
    out[a_idx] = mean
    out[b_idx] = mean
    return out


@dataclass(frozen=True, eq=False)
class SpectralCore:
    """Expected mixing matrix and derived spectral quantities.

    gamma is the largest eigenvalue of the expected matrix strictly below
    one; it equals the top eigenvalue of the expected squared deviation
    operator and lies in [0, 1) for admissible graph pairs.
    """

    expected_matrix: np.ndarray
    expected_deviation: np.ndarray
    residual_projector: np.ndarray
    gamma: float
    eigenvalues: np.ndarray

    def to_json(self) -> dict:
        return {
            "gamma": self.gamma,
            "m": int(self.expected_matrix.shape[0]),
            "eig_wbar": [float(v) for v in self.eigenvalues],
        }


def second_largest_eigenvalue(eigenvalues: np.ndarray) -> float:
    """Largest eigenvalue strictly below 1, treating near-1 values (within
    1e-9) as the leading eigenvalue, which may be repeated."""
    below = eigenvalues[eigenvalues < 1.0 - _UNIT_EIG_GAP]
    if below.size == 0:
        return 0.0
    return float(below.max())


def expected_mixing(layout: EstimateLayout, g_c: UndirectedGraph) -> SpectralCore:
    """Expectation of the mixing matrix under the uniform scheduler.

    The waking player is uniform over all players and picks a uniform
    communication neighbor, so edge (i, j) taken from i's side carries
    weight 1/(n deg(i)).
    """
    if g_c.n != layout.n:
        raise GraphError("communication graph does not match the layout")
    n = layout.n
    m = layout.total_dim
    w_bar = np.eye(m)
    for i in range(n):
        deg = g_c.degree(i)
        if deg == 0:
            raise GraphError(f"player {i} has no communication neighbors")
        coeff = 1.0 / (2.0 * n * deg)
        for j in g_c.neighbors(i):
            a_idx, b_idx = gossip_slot_pairs(layout, i, j)
            for a, b in zip(a_idx, b_idx):
                w_bar[a, a] -= coeff
                w_bar[b, b] -= coeff
                w_bar[a, b] += coeff
                w_bar[b, a] += coeff

    consensus_projector = layout.replication @ layout.block_mean
    expected_deviation = w_bar - consensus_projector
    residual_projector = np.eye(m) - consensus_projector

    eigenvalues = np.linalg.eigvalsh(w_bar)
    gamma = second_largest_eigenvalue(eigenvalues)
    return SpectralCore(
        expected_matrix=w_bar,
        expected_deviation=expected_deviation,
        residual_projector=residual_projector,
        gamma=gamma,
        eigenvalues=eigenvalues,
    )


@dataclass(frozen=True)
class IdentityReport:
    """Max absolute residuals of the structural matrix identities."""

    residuals: dict[str, float]

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values())

    def ok(self, tol: float = 1e-10) -> bool:
        return self.max_residual < tol

    def to_dict(self) -> dict:
        return {"residuals": dict(self.residuals), "max_residual": self.max_residual}


def verify_identities(
    layout: EstimateLayout,
    g_c: UndirectedGraph,
    rng: np.random.Generator | None = None,
    n_random_vectors: int = 20,
) -> IdentityReport:
    """Numerically verify the structural identities of the mixing matrices
    over every communication edge.

    Checked per event matrix W with replication matrix H and block-mean
    left inverse: W'W = W, WH = H, H'W = H', H'WH = diag(dims), unit row
    and column sums, and that the deviation operator annihilates
    replicated vectors. For the expectation: unit row/column sums, the
    deviation identity, and that the residual projector's squared spectrum
    is {0, 1} with multiplicity of one equal to total_dim - n.
    """
    rng = rng or np.random.default_rng(0)
    h = layout.replication.astype(np.float64)
    dims = np.asarray(layout.dims, dtype=np.float64)
    consensus_projector = h @ layout.block_mean
    m = layout.total_dim

    res: dict[str, float] = {
        "mixing_idempotent": 0.0,
        "replication_fixed": 0.0,
        "transpose_replication_fixed": 0.0,
        "block_diagonal": 0.0,
        "row_sums": 0.0,
        "col_sums": 0.0,
        "deviation_annihilates_replicated": 0.0,
        "per_event_deviation_form": 0.0,
    }

    z_draws = rng.standard_normal((n_random_vectors, layout.n))
    for i in range(layout.n):
        for j in g_c.neighbors(i):
            if j < i:
                continue
            w = mixing_matrix(layout, g_c, i, j).matrix
            res["mixing_idempotent"] = max(
                res["mixing_idempotent"], float(np.abs(w.T @ w - w).max())
            )
            res["replication_fixed"] = max(
                res["replication_fixed"], float(np.abs(w @ h - h).max())
            )
            res["transpose_replication_fixed"] = max(
                res["transpose_replication_fixed"], float(np.abs(h.T @ w - h.T).max())
            )
            res["block_diagonal"] = max(
                res["block_diagonal"], float(np.abs(h.T @ w @ h - np.diag(dims)).max())
            )
            res["row_sums"] = max(res["row_sums"], float(np.abs(w.sum(axis=1) - 1.0).max()))
            res["col_sums"] = max(res["col_sums"], float(np.abs(w.sum(axis=0) - 1.0).max()))
            q = w - consensus_projector @ w
            for z in z_draws:
                res["deviation_annihilates_replicated"] = max(
                    res["deviation_annihilates_replicated"], float(np.abs(q @ (h @ z)).max())
                )
            res["per_event_deviation_form"] = max(
                res["per_event_deviation_form"],
                float(np.abs(q.T @ q - (w - consensus_projector)).max()),
            )

    core = expected_mixing(layout, g_c)
    res["expected_row_sums"] = float(np.abs(core.expected_matrix.sum(axis=1) - 1.0).max())
    res["expected_col_sums"] = float(np.abs(core.expected_matrix.sum(axis=0) - 1.0).max())

    rtr = core.residual_projector.T @ core.residual_projector
    eig_rtr = np.linalg.eigvalsh(rtr)
    res["projector_spectrum"] = float(
        np.abs(np.minimum(np.abs(eig_rtr), np.abs(eig_rtr - 1.0))).max()
    )
    n_unit = int(np.count_nonzero(eig_rtr > 0.5))
    res["projector_rank_defect"] = float(abs(n_unit - (m - layout.n)))

    return IdentityReport(residuals=res)
