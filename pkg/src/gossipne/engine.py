"""Asynchronous gossip event loop for distributed equilibrium seeking.

One round: a uniformly random player wakes, picks a uniform communication
neighbor, the two average every estimate slot they share, then both take a
projected gradient step on their own action using the freshly mixed
neighbor estimates, and write the new action back into their own slot.
All other estimates carry the mixed values forward; players not involved
keep their actions unchanged.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .games import DomainError, FdConfig, GameDefinition, GameError, fd_gradient_boxed
from .gossip import gossip_slot_pairs
from .graphs import GraphError, GraphPair, UndirectedGraph
from .layout import EstimateLayout, block_average, replicate

_RNG_BLOCK = 1 << 14


@dataclass(frozen=True)
class StepSchedule:
    """Step-size rule: diminishing (inverse of the player's update count)
    or constant per player."""

    kind: str = "diminishing"
    alpha: float | np.ndarray = 0.1

    def __post_init__(self):
        if self.kind not in ("diminishing", "constant"):
            raise GameError(f"unknown step schedule {self.kind!r}")

    def constant_for(self, n: int) -> np.ndarray:
        if np.isscalar(self.alpha):
            return np.full(n, float(self.alpha))
        arr = np.asarray(self.alpha, dtype=np.float64)
        if arr.shape != (n,):
            raise GameError("per-player constant steps must have length n")
        return arr


@dataclass(eq=False)
class EngineState:
    """Mutable per-run state: the stacked estimates, per-player update
    counts, the round counter, and the random streams."""

    estimates: np.ndarray
    actions: np.ndarray
    update_counts: np.ndarray
    k: int
    seed: int
    skipped_steps: int = 0
    onesided_fd_steps: int = 0
    _wake_rng: np.random.Generator = field(repr=False, default=None)
    _nbr_rng: np.random.Generator = field(repr=False, default=None)
    _wake_buf: np.ndarray = field(repr=False, default=None)
    _nbr_buf: np.ndarray = field(repr=False, default=None)
    _buf_pos: int = field(repr=False, default=_RNG_BLOCK)

    def _refill(self, n: int) -> None:
        self._wake_buf = self._wake_rng.integers(0, n, size=_RNG_BLOCK)
        self._nbr_buf = self._nbr_rng.random(_RNG_BLOCK)
        self._buf_pos = 0

    def draw_event(self, n: int) -> tuple[int, float]:
        if self._buf_pos >= _RNG_BLOCK:
            self._refill(n)
        i = int(self._wake_buf[self._buf_pos])
        u = float(self._nbr_buf[self._buf_pos])
        self._buf_pos += 1
        return i, u


@dataclass(eq=False)
class Trajectory:
    """Sampled run metrics.

    norm_err is ||x - x*|| / ||x*|| when a reference equilibrium is known,
    consensus_err the distance between the stacked estimates and their
    per-player block average replicated back onto the layout, action_err
    the distance between the actions and that block average.
    """

    ks: np.ndarray
    xs: np.ndarray
    norm_err: np.ndarray | None
    consensus_err: np.ndarray
    action_err: np.ndarray
    weighted_consensus_sum: np.ndarray | None
    meta: dict

    def final_norm_err(self) -> float | None:
        return float(self.norm_err[-1]) if self.norm_err is not None else None

    def summary(self) -> dict:
        out = {
            "rounds": int(self.ks[-1]),
            "final_x": [float(v) for v in self.xs[-1]],
            "final_consensus_err": float(self.consensus_err[-1]),
            "final_action_err": float(self.action_err[-1]),
        }
        if self.norm_err is not None:
            out["final_norm_err"] = float(self.norm_err[-1])
        out.update(self.meta)
        return out

    def to_csv(self, path) -> None:
        n = self.xs.shape[1]
        header = ["k"] + [f"x_{i + 1}" for i in range(n)] + ["norm_err", "consensus_err"]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(header) + "\n")
            for row in range(len(self.ks)):
                cells = [str(int(self.ks[row]))]
                cells += [repr(float(v)) for v in self.xs[row]]
                cells.append(
                    repr(float(self.norm_err[row])) if self.norm_err is not None else ""
                )
                cells.append(repr(float(self.consensus_err[row])))
                fh.write(",".join(cells) + "\n")


def update_probabilities(g_c: UndirectedGraph) -> np.ndarray:
    """Per-player probability of taking part in a round under the uniform
    scheduler: wake up yourself, or be picked by a waking neighbor. The
    probabilities sum to 2 because every round involves two players."""
    n = g_c.n
    p = np.empty(n)
    for i in range(n):
        p[i] = 1.0 / n + sum(1.0 / g_c.degree(j) for j in g_c.neighbors(i)) / n
    return p


class GossipEngine:
    """Precomputed run context binding a layout, graphs, and a game.

    The layout may be built on a supergraph of the game's interference
    graph (e.g. the complete graph, reproducing the fully coupled
    variant); gradient evaluations then select the true neighbors out of
    the wider estimate blocks.
    """

    def __init__(
        self,
        layout: EstimateLayout,
        graphs: GraphPair,
        game: GameDefinition,
        mode: str = "exact",
        schedule: StepSchedule | None = None,
        fd: FdConfig | None = None,
    ):
        if mode not in ("exact", "fd"):
            raise GameError(f"unknown gradient mode {mode!r}")
        if layout.n != game.n:
            raise GameError("layout and game disagree on the player count")
        if not game.interference.edges <= layout.graph.edges:
            raise GameError("layout graph must contain every interference edge")
        self.layout = layout
        self.graphs = graphs
        self.game = game
        self.mode = mode
        self.schedule = schedule or StepSchedule()
        self.fd = fd or FdConfig()

        g_c = graphs.g_communication
        self._nbr_lists = tuple(
            np.array(g_c.neighbors(i), dtype=np.int64) for i in range(layout.n)
        )
        if any(len(nb) == 0 for nb in self._nbr_lists):
            raise GraphError("every player needs at least one communication neighbor")
        self._pair_slots: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}
        for i, j in g_c.edges:
            self._pair_slots[(i, j)] = gossip_slot_pairs(layout, i, j)

        # Positions of the game's interference neighbors inside the
        # layout's (possibly wider) neighbor blocks; None when identical.
        self._nbr_select: list[np.ndarray | None] = []
        for i in range(layout.n):
            lay_nbrs = layout.neighbors[i]
            game_nbrs = game.neighbors(i)
            if lay_nbrs == game_nbrs:
                self._nbr_select.append(None)
            else:
                pos = {j: k for k, j in enumerate(lay_nbrs)}
                self._nbr_select.append(np.array([pos[j] for j in game_nbrs], dtype=np.int64))

        self._const_alpha = (
            self.schedule.constant_for(layout.n) if self.schedule.kind == "constant" else None
        )
        self._slot_lo = game.lo[layout.slot_player]
        self._slot_hi = game.hi[layout.slot_player]

    # ------------------------------------------------------------------
    def init_state(self, init=None, seed: int = 0) -> EngineState:
        """Assemble the initial stacked estimates.

        init may be None (the game's feasible start broadcast to every
        block), "random" (seeded per-slot draw inside each owning box), a
        length-n action vector broadcast consistently, or a full stacked
        vector. Every slot must start inside the box of the player it
        estimates.
        """
        layout = self.layout
        ss = np.random.SeedSequence(seed)
        wake_ss, nbr_ss, init_ss = ss.spawn(3)

        if init is None:
            stacked = replicate(layout, self.game.start_point())
        elif isinstance(init, str) and init == "random":
            rng = np.random.default_rng(init_ss)
            stacked = self._slot_lo + (self._slot_hi - self._slot_lo) * rng.random(
                layout.total_dim
            )
        else:
            arr = np.asarray(init, dtype=np.float64)
            if arr.shape == (layout.n,):
                stacked = replicate(layout, arr)
            elif arr.shape == (layout.total_dim,):
                stacked = arr.copy()
            else:
                raise GameError(
                    f"init must have length {layout.n} or {layout.total_dim}, got {arr.shape}"
                )
        if np.any(stacked < self._slot_lo) or np.any(stacked > self._slot_hi):
            bad = int(np.argmax((stacked < self._slot_lo) | (stacked > self._slot_hi)))
            raise GameError(
                f"initial estimate at slot {bad} lies outside the box of player "
                f"{int(layout.slot_player[bad])}"
            )

        state = EngineState(
            estimates=stacked,
            actions=stacked[layout.own_slot].copy(),
            update_counts=np.zeros(layout.n, dtype=np.int64),
            k=0,
            seed=seed,
        )
        state._wake_rng = np.random.default_rng(wake_ss)
        state._nbr_rng = np.random.default_rng(nbr_ss)
        return state

    # ------------------------------------------------------------------
    def gossip_round(self, state: EngineState) -> None:
        """Draw one gossip event and execute it in place."""
        i_k, u = state.draw_event(self.layout.n)
        nbrs = self._nbr_lists[i_k]
        j_k = int(nbrs[int(u * len(nbrs))])
        self.apply_event(state, i_k, j_k)

    def apply_event(self, state: EngineState, i_k: int, j_k: int) -> None:
        """Execute the gossip event for a given communicating pair:
        average the shared estimate slots, let both players take a
        projected gradient step on their own action using the mixed
        neighbor estimates, and write the new actions into their own
        slots."""
        layout = self.layout
        key = (i_k, j_k) if i_k < j_k else (j_k, i_k)
        a_idx, b_idx = self._pair_slots[key]

        est = state.estimates
        mean = 0.5 * (est[a_idx] + est[b_idx])
        est[a_idx] = mean
        est[b_idx] = mean

        # Both players evaluate on the mixed vector; write-backs happen
        # only after both gradients are taken.
        new_actions = []
        for pl in key:
            state.update_counts[pl] += 1
            if self._const_alpha is not None:
                alpha = self._const_alpha[pl]
            else:
                alpha = 1.0 / state.update_counts[pl]
            x_old = state.actions[pl]
            others = est[layout.neighbor_slots[pl]]
            sel = self._nbr_select[pl]
            if sel is not None:
                others = others[sel]
            try:
                if self.mode == "exact":
                    g = self.game.grad(pl, x_old, others)
                else:
                    c = self.fd.perturbation(int(state.update_counts[pl]))
                    g, clipped = fd_gradient_boxed(self.game, pl, x_old, others, c)
                    if clipped:
                        state.onesided_fd_steps += 1
            except DomainError:
                state.skipped_steps += 1
                new_actions.append((pl, x_old))
                continue
            x_new = min(max(x_old - alpha * g, self.game.lo[pl]), self.game.hi[pl])
            new_actions.append((pl, x_new))

        for pl, x_new in new_actions:
            state.actions[pl] = x_new
            est[layout.own_slot[pl]] = x_new

        state.k += 1

    # ------------------------------------------------------------------
    def run(
        self,
        state: EngineState,
        rounds: int,
        sample_stride: int = 1000,
        x_star: np.ndarray | None = None,
        track_weighted_consensus: bool = False,
    ) -> Trajectory:
        """Run `rounds` gossip events, sampling metrics every
        `sample_stride` rounds (the initial and final states are always
        sampled). Returns the trajectory; `state` holds the final state."""
        if rounds < 1:
            raise GameError("need at least one round")
        layout = self.layout
        if x_star is not None:
            x_star = np.asarray(x_star, dtype=np.float64)
            star_norm = float(np.linalg.norm(x_star))
            if star_norm <= 0:
                raise GameError("reference equilibrium must be nonzero")

        ks, xs, nerr, cerr, aerr, wsum = [], [], [], [], [], []
        running_weighted = 0.0

        def sample() -> None:
            z = block_average(layout, state.estimates)
            ks.append(state.k)
            xs.append(state.actions.copy())
            cerr.append(float(np.linalg.norm(state.estimates - z[layout.slot_player])))
            aerr.append(float(np.linalg.norm(state.actions - z)))
            if x_star is not None:
                nerr.append(float(np.linalg.norm(state.actions - x_star)) / star_norm)
            if track_weighted_consensus:
                wsum.append(running_weighted)

        t0 = time.perf_counter()
        sample()
        for _ in range(rounds):
            if track_weighted_consensus:
                if self._const_alpha is not None:
                    alpha_max = float(self._const_alpha.max())
                else:
                    min_count = int(state.update_counts.min())
                    alpha_max = 1.0 if min_count == 0 else 1.0 / min_count
                z = block_average(layout, state.estimates)
                running_weighted += alpha_max * float(
                    np.linalg.norm(state.estimates - z[layout.slot_player])
                )
            self.gossip_round(state)
            if state.k % sample_stride == 0:
                sample()
        if ks[-1] != state.k:
            sample()
        wall = time.perf_counter() - t0

        meta = {
            "seed": state.seed,
            "mode": self.mode,
            "schedule": self.schedule.kind,
            "skipped_steps": int(state.skipped_steps),
            "onesided_fd_steps": int(state.onesided_fd_steps),
            "wall_time_s": wall,
        }
        return Trajectory(
            ks=np.array(ks, dtype=np.int64),
            xs=np.array(xs),
            norm_err=np.array(nerr) if x_star is not None else None,
            consensus_err=np.array(cerr),
            action_err=np.array(aerr),
            weighted_consensus_sum=np.array(wsum) if track_weighted_consensus else None,
            meta=meta,
        )
