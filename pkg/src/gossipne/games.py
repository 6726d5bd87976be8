"""Game definitions: costs, gradients, box constraints, benchmark games,
and a centralized equilibrium oracle.

A player's cost depends only on its own action and those of its
interference neighbors; evaluators receive the neighbor actions as an
array in ascending neighbor order. All action sets are closed intervals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .graphs import GraphError, UndirectedGraph, build_graph, is_connected


class GameError(ValueError):
    """Raised for malformed game definitions or solver failures."""


class DomainError(ValueError):
    """Raised when a cost or gradient is evaluated outside its domain,
    e.g. aggregate flow at or beyond a link capacity."""


@dataclass(frozen=True)
class GameConstants:
    """Analytic or sampled regularity constants of a game.

    grad_bound caps |own-partial gradient| over the box, lipschitz_L the
    sensitivity of that partial to neighbor actions, rho the Lipschitz
    constant of the pseudo-gradient, mu its (strong) monotonicity
    constant, and eta the Lipschitz constant of the own second derivative
    used by the finite-difference error bound.
    """

    grad_bound: float
    lipschitz_L: float
    rho: float
    mu: float
    eta: float | None = None


@dataclass(frozen=True, eq=False)
class GameDefinition:
    """A partially coupled game on an interference graph.

    cost(i, x_i, others) and grad(i, x_i, others) take the player's own
    action and the interference-neighbor actions in ascending neighbor
    order.
    """

    n: int
    lo: np.ndarray
    hi: np.ndarray
    interference: UndirectedGraph
    cost: Callable[[int, float, np.ndarray], float]
    grad: Callable[[int, float, np.ndarray], float]
    known_ne: np.ndarray | None = None
    constants: GameConstants | None = None
    default_action: np.ndarray | None = None
    kind: str = "custom"

    def neighbors(self, i: int) -> tuple[int, ...]:
        return self.interference.neighbors(i)

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lo, self.hi)

    def contains(self, x: np.ndarray) -> bool:
        return bool(np.all(x >= self.lo) and np.all(x <= self.hi))

    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def start_point(self) -> np.ndarray:
        if self.default_action is not None:
            return self.default_action.copy()
        return self.midpoint()

    def random_interior(self, rng: np.random.Generator, margin: float = 0.05) -> np.ndarray:
        span = self.hi - self.lo
        return self.lo + span * (margin + (1 - 2 * margin) * rng.random(self.n))


def _as_bounds(bounds, n: int) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = bounds
    lo = np.full(n, float(lo)) if np.isscalar(lo) else np.asarray(lo, dtype=np.float64)
    hi = np.full(n, float(hi)) if np.isscalar(hi) else np.asarray(hi, dtype=np.float64)
    if lo.shape != (n,) or hi.shape != (n,):
        raise GameError("bounds must be scalars or per-player arrays")
    if np.any(lo >= hi):
        raise GameError("every action interval must have positive length")
    return lo, hi


def pseudo_gradient(game: GameDefinition, x: np.ndarray) -> np.ndarray:
    """Stack of own-action partial gradients evaluated at the true
    neighbor actions."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (game.n,):
        raise GameError(f"expected {game.n} actions, got shape {x.shape}")
    if not game.contains(x):
        raise GameError("point lies outside the action box")
    out = np.empty(game.n)
    for i in range(game.n):
        others = x[list(game.neighbors(i))]
        out[i] = game.grad(i, float(x[i]), others)
    return out


def fd_gradient(
    game: GameDefinition, i: int, x_i: float, others: np.ndarray, c: float
) -> float:
    """Symmetric difference quotient of player i's cost in its own action."""
    if c <= 0:
        raise GameError("perturbation must be positive")
    plus = game.cost(i, x_i + c, others)
    minus = game.cost(i, x_i - c, others)
    return (plus - minus) / (2.0 * c)


def fd_gradient_boxed(
    game: GameDefinition, i: int, x_i: float, others: np.ndarray, c: float
) -> tuple[float, bool]:
    """Difference quotient with perturbations clipped to the action box.

    Falls back to a one-sided quotient at the boundary; returns the
    estimate and whether clipping occurred.
    """
    if c <= 0:
        raise GameError("perturbation must be positive")
    lo, hi = float(game.lo[i]), float(game.hi[i])
    x_plus = min(x_i + c, hi)
    x_minus = max(x_i - c, lo)
    if x_plus <= x_minus:
        raise GameError(f"degenerate perturbation interval for player {i}")
    clipped = (x_plus != x_i + c) or (x_minus != x_i - c)
    plus = game.cost(i, x_plus, others)
    minus = game.cost(i, x_minus, others)
    return (plus - minus) / (x_plus - x_minus), clipped


@dataclass(frozen=True)
class FdConfig:
    """Perturbation schedule for gradient-free runs: size decays as a
    power of the player's update count."""

    c0: float = 0.1
    exponent: float = 0.25

    def __post_init__(self):
        if self.c0 <= 0 or self.exponent <= 0:
            raise GameError("perturbation schedule needs positive c0 and exponent")

    def perturbation(self, update_count: int) -> float:
        return self.c0 * update_count ** (-self.exponent)

    def summable_with_diminishing_steps(self) -> bool:
        # sum of nu^-(1 + 2 e) converges iff 1 + 2 e > 1, true for e > 0.
        return self.exponent > 0.0

    def summable_with_constant_steps(self) -> bool:
        # sum of nu^-(2 e) converges iff 2 e > 1.
        return self.exponent > 0.5


def make_quadratic_game(
    g_i: UndirectedGraph,
    q,
    coupling,
    c,
    bounds=(0.0, 10.0),
) -> GameDefinition:
    """Quadratic benchmark game with a closed-form equilibrium.

    Player i's cost is q_i x_i^2 / 2 + x_i * sum_j b_ij x_j + c_i x_i over
    interference edges. Requires q_i > sum_j |b_ij| so the pseudo-gradient
    is strongly monotone; the equilibrium solves the box-constrained
    linear system (diag(q) + B) x = -c.
    """
    n = g_i.n
    q = np.full(n, float(q)) if np.isscalar(q) else np.asarray(q, dtype=np.float64)
    c = np.full(n, float(c)) if np.isscalar(c) else np.asarray(c, dtype=np.float64)
    if q.shape != (n,) or c.shape != (n,):
        raise GameError("q and c must be scalars or length-n arrays")

    b = np.zeros((n, n))
    if np.isscalar(coupling):
        for i, j in g_i.edges:
            b[i, j] = b[j, i] = float(coupling)
    else:
        for (i, j), w in dict(coupling).items():
            if not g_i.has_edge(i, j):
                raise GameError(f"coupling on non-edge ({i}, {j})")
            b[i, j] = b[j, i] = float(w)

    row_abs = np.abs(b).sum(axis=1)
    if np.any(q <= row_abs):
        bad = int(np.argmax(row_abs - q))
        raise GameError(
            f"diagonal dominance violated for player {bad}: q={q[bad]} vs coupling mass {row_abs[bad]}"
        )

    lo, hi = _as_bounds(bounds, n)
    m_mat = np.diag(q) + b
    neighbor_lists = [list(g_i.neighbors(i)) for i in range(n)]
    coupling_rows = [b[i, neighbor_lists[i]] for i in range(n)]

    def cost(i: int, x_i: float, others: np.ndarray) -> float:
        return 0.5 * q[i] * x_i * x_i + x_i * float(coupling_rows[i] @ others) + c[i] * x_i

    def grad(i: int, x_i: float, others: np.ndarray) -> float:
        return q[i] * x_i + float(coupling_rows[i] @ others) + c[i]

    x_unc = np.linalg.solve(m_mat, -c)
    if np.all(x_unc >= lo) and np.all(x_unc <= hi):
        known_ne = x_unc
    else:
        known_ne = _projected_fixed_point(
            lambda x: m_mat @ x + c, lo, hi, np.clip(x_unc, lo, hi), 1.0 / float(np.linalg.norm(m_mat, 2) + 1.0), 1e-12, 1_000_000
        )

    sym = 0.5 * (m_mat + m_mat.T)
    x_abs = np.maximum(np.abs(lo), np.abs(hi))
    grad_bound = float(np.max(q * x_abs + np.abs(b) @ x_abs + np.abs(c)))
    constants = GameConstants(
        grad_bound=grad_bound,
        lipschitz_L=float(np.max(np.linalg.norm(b, axis=1))),
        rho=float(np.linalg.norm(m_mat, 2)),
        mu=float(np.linalg.eigvalsh(sym).min()),
        eta=0.0,
    )
    return GameDefinition(
        n=n,
        lo=lo,
        hi=hi,
        interference=g_i,
        cost=cost,
        grad=grad,
        known_ne=known_ne,
        constants=constants,
        kind="quadratic",
    )


def make_wanet_game(
    paths: list[set[int] | list[int]],
    capacities,
    kappa: float = 1.0,
    chi=10.0,
    bounds=(0.0, 10.0),
    eps_cap: float = 1e-6,
) -> GameDefinition:
    """Flow-control game on a shared-link network.

    User i routes flow over its link set; each used link contributes a
    capacity barrier kappa / (C_l - aggregate flow), and the user earns
    chi_i * log(1 + x_i). Interference pairs users sharing at least one
    link. Evaluations with an aggregate within eps_cap of a capacity raise
    DomainError.
    """
    n = len(paths)
    path_sets = [frozenset(int(l) for l in p) for p in paths]
    if any(len(p) == 0 for p in path_sets):
        raise GameError("every user needs at least one link")
    n_links = max(max(p) for p in path_sets) + 1
    caps = (
        np.full(n_links, float(capacities))
        if np.isscalar(capacities)
        else np.asarray(capacities, dtype=np.float64)
    )
    if caps.shape[0] < n_links:
        raise GameError("capacity missing for some links")
    if np.any(caps <= 0) or kappa <= 0:
        raise GameError("kappa and capacities must be positive")
    chi_arr = np.full(n, float(chi)) if np.isscalar(chi) else np.asarray(chi, dtype=np.float64)
    if np.any(chi_arr <= 0):
        raise GameError("chi must be positive")

    edges = [
        (i, j)
        for i in range(n)
        for j in range(i + 1, n)
        if path_sets[i] & path_sets[j]
    ]
    g_i = build_graph(n, edges)
    if n > 1 and not is_connected(g_i):
        raise GraphError("link overlaps induce a disconnected interference graph")

    lo, hi = _as_bounds(bounds, n)
    users_on_link = [
        [w for w in range(n) if l in path_sets[w]] for l in range(n_links)
    ]
    nbrs = [g_i.neighbors(i) for i in range(n)]
    # For player i and link l: positions in the neighbor array of the other
    # users sharing l, so aggregates come straight out of `others`.
    link_positions: list[list[tuple[int, np.ndarray]]] = []
    for i in range(n):
        pos_of = {j: k for k, j in enumerate(nbrs[i])}
        rows = []
        for l in sorted(path_sets[i]):
            sharers = np.array(
                [pos_of[w] for w in users_on_link[l] if w != i], dtype=np.int64
            )
            rows.append((l, sharers))
        link_positions.append(rows)

    def _aggregates(i: int, x_i: float, others: np.ndarray):
        for l, sharers in link_positions[i]:
            agg = x_i + float(others[sharers].sum()) if sharers.size else x_i
            if agg >= caps[l] - eps_cap:
                raise DomainError(
                    f"aggregate flow {agg:.6g} reaches capacity {caps[l]:.6g} on link {l}"
                )
            yield l, agg

    def cost(i: int, x_i: float, others: np.ndarray) -> float:
        if x_i <= -1.0:
            raise DomainError(f"flow {x_i:.6g} below the utility domain")
        total = -chi_arr[i] * math.log(x_i + 1.0)
        for l, agg in _aggregates(i, x_i, others):
            total += kappa / (caps[l] - agg)
        return total

    def grad(i: int, x_i: float, others: np.ndarray) -> float:
        if x_i <= -1.0:
            raise DomainError(f"flow {x_i:.6g} below the utility domain")
        total = -chi_arr[i] / (x_i + 1.0)
        for l, agg in _aggregates(i, x_i, others):
            total += kappa / (caps[l] - agg) ** 2
        return total

    # Start every link strictly inside capacity: split half the tightest
    # capacity among its users.
    start = np.empty(n)
    for i in range(n):
        start[i] = min(
            0.5 * caps[l] / len(users_on_link[l]) for l in sorted(path_sets[i])
        )
    start = np.clip(start, lo, hi)

    return GameDefinition(
        n=n,
        lo=lo,
        hi=hi,
        interference=g_i,
        cost=cost,
        grad=grad,
        known_ne=None,
        constants=None,
        default_action=start,
        kind="wanet",
    )


def generate_wanet(
    n_users: int = 15, n_links: int = 16, seed: int = 7
) -> list[set[int]]:
    """Deterministic multi-hop topology: users occupy arcs of a link ring.

    User i starts at link i mod n_links with a seeded arc length of 2 or
    3, so consecutive users always share a link and the induced
    interference graph is connected.
    """
    rng = np.random.default_rng(seed)
    lengths = rng.integers(2, 4, size=n_users)
    return [
        {(i + t) % n_links for t in range(int(lengths[i]))} for i in range(n_users)
    ]


def _projected_fixed_point(f, lo, hi, x0, alpha, tol, max_iter):
    x = x0.copy()
    for _ in range(max_iter):
        x_next = np.clip(x - alpha * f(x), lo, hi)
        if np.linalg.norm(x_next - x) <= tol * max(1.0, alpha):
            x = x_next
            break
        x = x_next
    return x


def solve_ne_centralized(
    game: GameDefinition,
    tol: float = 1e-10,
    max_iter: int = 500_000,
    alpha: float | None = None,
    start: np.ndarray | None = None,
) -> np.ndarray:
    """Centralized equilibrium oracle via the projected-gradient fixed
    point x = T[x - alpha F(x)].

    The step defaults to 1 / (rho + mu) from declared or sampled
    constants (1e-2 fallback). Steps landing outside a game's evaluable
    region (barrier games) are backtracked. Raises GameError carrying the
    last residual when the fixed-point residual does not reach tol.
    """
    if alpha is None:
        consts = game.constants or estimate_constants(game, np.random.default_rng(0), 2000)
        denom = consts.rho + max(consts.mu, 0.0)
        alpha = 1.0 / denom if denom > 0 else 1e-2
    x = game.project(start.copy() if start is not None else game.start_point())
    grad_now = pseudo_gradient(game, x)
    residual = math.inf
    for _ in range(max_iter):
        step_size = alpha
        for _ in range(60):
            candidate = game.project(x - step_size * grad_now)
            try:
                grad_next = pseudo_gradient(game, candidate)
                break
            except DomainError:
                step_size *= 0.5
        else:
            raise GameError("projected step cannot stay inside the evaluable region")
        residual = float(np.linalg.norm(x - candidate))
        x, grad_now = candidate, grad_next
        if residual <= tol and step_size == alpha:
            return x
    raise GameError(
        f"centralized solve did not converge: residual {residual:.3e} > tol {tol:.1e}"
    )


def best_response_solve(
    game: GameDefinition,
    tol: float = 1e-9,
    max_sweeps: int = 5_000,
    start: np.ndarray | None = None,
) -> np.ndarray:
    """Cyclic exact best-response iteration, an oracle independent of the
    projected-gradient path. Each sweep minimizes every player's cost over
    its interval by bounded scalar search."""
    x = game.project(start.copy() if start is not None else game.start_point())

    def penalized(i: int, t: float, others: np.ndarray) -> float:
        # Barrier games are +inf beyond capacity; give the scalar search
        # the same picture instead of an exception.
        try:
            return game.cost(i, float(t), others)
        except DomainError:
            return math.inf

    def best_response(i: int, others: np.ndarray) -> float:
        # Bracket the minimum on a grid first so infinite plateaus cannot
        # mislead the bounded scalar search.
        lo, hi = float(game.lo[i]), float(game.hi[i])
        grid = np.linspace(lo, hi, 257)
        values = np.array([penalized(i, t, others) for t in grid])
        best = int(np.argmin(values))
        if not np.isfinite(values[best]):
            raise GameError(f"player {i} has no evaluable response on its interval")
        left = grid[max(best - 1, 0)]
        right = grid[min(best + 1, len(grid) - 1)]
        res = minimize_scalar(
            lambda t: penalized(i, float(t), others),
            bounds=(left, right),
            method="bounded",
            options={"xatol": tol * 1e-2},
        )
        return float(res.x) if res.fun <= values[best] else float(grid[best])

    for _ in range(max_sweeps):
        shift = 0.0
        for i in range(game.n):
            others = x[list(game.neighbors(i))]
            t = best_response(i, others)
            shift = max(shift, abs(t - x[i]))
            x[i] = t
        if shift <= tol:
            return x
    raise GameError(f"best-response iteration did not settle (last sweep moved {shift:.3e})")


def _sample_evaluable(
    game: GameDefinition, rng: np.random.Generator, count: int
) -> list[np.ndarray]:
    """Points where the pseudo-gradient evaluates, drawn from the box but
    pulled toward the game's feasible start when the box itself leaves the
    evaluable region (barrier games)."""
    anchor = game.project(game.start_point())
    points: list[np.ndarray] = []
    attempts = 0
    while len(points) < count and attempts < 50 * count:
        attempts += 1
        u = game.random_interior(rng, 0.02)
        # radius 1 is the raw box draw; smaller radii interpolate to the anchor
        radius = 1.0 if attempts % 3 else float(rng.random())
        x = anchor + radius * (u - anchor)
        try:
            pseudo_gradient(game, x)
        except DomainError:
            continue
        points.append(x)
    if len(points) < max(2, count // 10):
        raise GameError("could not sample the game anywhere inside the box")
    return points


def estimate_constants(
    game: GameDefinition,
    rng: np.random.Generator,
    n_samples: int = 10_000,
) -> GameConstants:
    """Sample-based estimates of the regularity constants over the
    evaluable part of the box.

    Declared analytic constants on the game win; this is the fallback for
    games that do not state them.
    """
    points = _sample_evaluable(game, rng, 2 * ((n_samples + 1) // 2))
    half = len(points) // 2
    xs, ys = points[:half], points[half : 2 * half]

    grad_bound = 0.0
    rho = 0.0
    mu = math.inf
    for x, y in zip(xs, ys):
        fx = pseudo_gradient(game, x)
        fy = pseudo_gradient(game, y)
        grad_bound = max(grad_bound, float(np.abs(fx).max()), float(np.abs(fy).max()))
        diff = np.linalg.norm(x - y)
        if diff > 1e-9:
            rho = max(rho, float(np.linalg.norm(fx - fy) / diff))
            mu = min(mu, float((fx - fy) @ (x - y) / diff**2))

    lipschitz = 0.0
    eta = 0.0
    n_small = min(len(xs), max(200, n_samples // 20))
    for x in xs[:n_small]:
        i = int(rng.integers(game.n))
        nbr = list(game.neighbors(i))
        if not nbr:
            continue
        u = x[nbr]
        v = u + (game.hi[nbr] - game.lo[nbr]) * 0.01 * rng.standard_normal(len(nbr))
        v = np.clip(v, game.lo[nbr], game.hi[nbr])
        du = np.linalg.norm(u - v)
        if du <= 1e-12:
            continue
        try:
            gu = game.grad(i, float(x[i]), u)
            gv = game.grad(i, float(x[i]), v)
            lipschitz = max(lipschitz, abs(gu - gv) / du)
            h = 1e-3 * (game.hi[i] - game.lo[i])
            if game.lo[i] + 2 * h < x[i] < game.hi[i] - 2 * h:
                d2a = (
                    game.cost(i, float(x[i] + h), u)
                    - 2 * game.cost(i, float(x[i]), u)
                    + game.cost(i, float(x[i] - h), u)
                ) / h**2
                d2b = (
                    game.cost(i, float(x[i] + 2 * h), u)
                    - 2 * game.cost(i, float(x[i] + h), u)
                    + game.cost(i, float(x[i]), u)
                ) / h**2
                eta = max(eta, abs(d2b - d2a) / h)
        except DomainError:
            continue

    return GameConstants(
        grad_bound=grad_bound,
        lipschitz_L=lipschitz,
        rho=rho,
        mu=mu if mu != math.inf else 0.0,
        eta=eta if eta > 0 else None,
    )


def game_to_json(game: GameDefinition) -> dict:
    from .graphs import graph_to_json

    return {"kind": game.kind, "n": game.n, "interference": graph_to_json(game.interference)}
