"""Convergence-rate artifacts for constant-step runs: the step-admissibility
factor phi, the constant chain feeding the averaging-time lower bound, and
the per-round time model comparing interference-aware and fully coupled
estimate exchange.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graphs import UndirectedGraph
from .layout import EstimateLayout


class RateError(ValueError):
    """Raised when rate analysis preconditions fail."""


@dataclass(frozen=True)
class RateInputs:
    """Everything the rate bound needs.

    gamma is the spectral contraction factor; alpha/p bounds are over
    players; grad_bound, lipschitz_L, rho, mu are the game's regularity
    constants; x_max bounds action magnitudes and x_min0 is the smallest
    initial action norm. d_star is the measured steady-state offset; None
    selects the boundary case where the offset saturates its bound, which
    zeroes the b constant.
    """

    gamma: float
    alpha_max: float
    alpha_min: float
    p_max: float
    p_min: float
    grad_bound: float
    lipschitz_L: float
    rho: float
    mu: float
    x_max: float
    x_min0: float
    n_players: int
    total_dim: int
    d_star: float | None = None

    def __post_init__(self):
        if not (0.0 <= self.gamma < 1.0):
            raise RateError(f"gamma must lie in [0, 1), got {self.gamma}")
        positives = {
            "alpha_max": self.alpha_max,
            "alpha_min": self.alpha_min,
            "p_max": self.p_max,
            "p_min": self.p_min,
            "grad_bound": self.grad_bound,
            "rho": self.rho,
            "mu": self.mu,
            "x_max": self.x_max,
            "x_min0": self.x_min0,
        }
        for name, val in positives.items():
            if val <= 0:
                raise RateError(f"{name} must be positive, got {val}")
        if self.lipschitz_L < 0:
            raise RateError("lipschitz_L must be nonnegative")
        if self.x_min0 > self.x_max:
            raise RateError("x_min0 cannot exceed x_max")

    def with_gamma(self, gamma: float) -> "RateInputs":
        return RateInputs(
            gamma=gamma,
            alpha_max=self.alpha_max,
            alpha_min=self.alpha_min,
            p_max=self.p_max,
            p_min=self.p_min,
            grad_bound=self.grad_bound,
            lipschitz_L=self.lipschitz_L,
            rho=self.rho,
            mu=self.mu,
            x_max=self.x_max,
            x_min0=self.x_min0,
            n_players=self.n_players,
            total_dim=self.total_dim,
            d_star=self.d_star,
        )


@dataclass(frozen=True)
class PhiReport:
    value: float
    admissible: bool


def compute_phi(inp: RateInputs) -> PhiReport:
    """Constant-step contraction factor; the rate bound needs 0 < phi < 1."""
    value = (
        1.0
        + (1.0 + inp.rho**2 + 2.0 * inp.alpha_max) * inp.p_max * inp.alpha_max
        - (1.0 + inp.rho**2 + 2.0 * inp.mu) * inp.p_min * inp.alpha_min
    )
    return PhiReport(value=value, admissible=0.0 < value < 1.0)


@dataclass(frozen=True)
class RateReport:
    """The constant chain of the averaging-time lower bound."""

    phi: float
    gamma: float
    x_min0: float
    c1: float
    c2: float
    c21: float
    c3: float
    c4: float
    c41: float
    c5: float
    c51: float
    c6: float
    c7: float
    c8: float
    a: float
    b: float

    @property
    def d_star_sq_bound(self) -> float:
        return self.c7

    def to_dict(self) -> dict:
        return {
            k: getattr(self, k)
            for k in (
                "phi",
                "gamma",
                "c1",
                "c2",
                "c21",
                "c3",
                "c4",
                "c41",
                "c5",
                "c51",
                "c6",
                "c7",
                "c8",
                "a",
                "b",
            )
        }


def _chain(inp: RateInputs, phi: float) -> dict[str, float]:
    g = inp.gamma
    sg = math.sqrt(g)
    am = inp.alpha_max
    c_b = inp.grad_bound
    x_max = inp.x_max
    n = inp.n_players
    l2p = inp.lipschitz_L**2 * inp.p_max

    c1 = max(am * c_b, x_max)
    c2 = math.sqrt(n) * x_max
    c21 = (2.0 * math.sqrt(2.0) * c1 + 2.0 * am * c_b) / (1.0 - sg)
    c3 = max(x_max**2, am**2 * c_b**2 + 2.0 * am * c_b * c1)
    c4 = c_b * c2 * am / (1.0 - sg / 2.0)
    c41 = (
        (2.0 * math.sqrt(2.0) / 3.0) * c3
        + 2.0 * (1.0 + math.sqrt(2.0)) * am * c_b * c1
        + c_b * c21 * am * sg
        + 2.0 * am**2 * c_b**2
    ) / (1.0 - sg / 2.0) + n * x_max**2 * sg / 2.0
    c5 = (2.0 * math.sqrt(2.0) * c4 + 4.0 * am * c_b * c2) / (1.0 - g)
    c51 = (
        (4.0 / 3.0) * c3
        + 4.0 * am**2 * c_b**2
        + (2.0 * math.sqrt(2.0) * c41 + 4.0 * am * c_b * c21) * sg
    ) / (1.0 - g) + g * n * x_max**2
    c6 = max(n * x_max**2, 4.0 * n * c_b**2 * inp.p_max * am**2 + 2.0 * l2p * c51)
    c7 = c6 / (1.0 - phi)
    c8 = 2.0 * l2p * c5 / (1.0 - phi)
    return {
        "c1": c1,
        "c2": c2,
        "c21": c21,
        "c3": c3,
        "c4": c4,
        "c41": c41,
        "c5": c5,
        "c51": c51,
        "c6": c6,
        "c7": c7,
        "c8": c8,
    }


def _chain_second_transcription(inp: RateInputs, phi: float) -> dict[str, float]:
    # Independent re-typing of the same formulas with different grouping;
    # constants_chain cross-checks against it to catch transcription slips.
    g, am, cb, xm, n = inp.gamma, inp.alpha_max, inp.grad_bound, inp.x_max, inp.n_players
    r2 = 2.0**0.5
    sg = g**0.5
    out: dict[str, float] = {}
    out["c1"] = xm if xm >= am * cb else am * cb
    out["c2"] = n**0.5 * xm
    out["c21"] = (2 * r2 * out["c1"] + 2 * am * cb) * (1 - sg) ** -1
    out["c3"] = max(xm * xm, am * cb * (am * cb + 2 * out["c1"]))
    half = 1 - 0.5 * sg
    out["c4"] = (cb * out["c2"] * am) / half
    out["c41"] = (
        (2 * r2 / 3) * out["c3"]
        + (2 + 2 * r2) * am * cb * out["c1"]
        + am * sg * cb * out["c21"]
        + 2 * (am * cb) ** 2
    ) / half + 0.5 * sg * n * xm * xm
    out["c5"] = (2 * r2 * out["c4"] + 4 * am * cb * out["c2"]) / (1 - g)
    out["c51"] = (
        (4 * out["c3"]) / 3 + 4 * (am * cb) ** 2 + sg * (2 * r2 * out["c41"] + 4 * am * cb * out["c21"])
    ) / (1 - g) + n * xm * xm * g
    lp = inp.p_max * inp.lipschitz_L**2
    out["c6"] = max(n * xm * xm, 4 * n * inp.p_max * (cb * am) ** 2 + 2 * lp * out["c51"])
    out["c7"] = out["c6"] / (1 - phi)
    out["c8"] = (2 * lp * out["c5"]) / (1 - phi)
    return out


def constants_chain(inp: RateInputs) -> RateReport:
    """Evaluate the full constant chain.

    Refuses when phi is outside (0, 1) since the chain then carries no
    information. Every constant is cross-checked against an independently
    coded transcription of the same formulas.
    """
    phi_rep = compute_phi(inp)
    if not phi_rep.admissible:
        raise RateError(
            f"phi = {phi_rep.value:.6g} outside (0, 1); "
            "decrease the steps or increase monotonicity before asking for the bound"
        )
    chain = _chain(inp, phi_rep.value)
    check = _chain_second_transcription(inp, phi_rep.value)
    for key, val in chain.items():
        ref = check[key]
        if not math.isclose(val, ref, rel_tol=1e-9, abs_tol=1e-12):
            raise RateError(f"transcription mismatch for {key}: {val!r} vs {ref!r}")

    if inp.d_star is None:
        d_star_sq = chain["c7"]
    else:
        d_star_sq = float(inp.d_star) ** 2
        if d_star_sq > chain["c7"] * (1.0 + 1e-12):
            raise RateError(
                f"measured offset {inp.d_star} exceeds its theoretical cap sqrt(c7)"
            )
    a = chain["c8"] / inp.x_min0**2
    b = (chain["c7"] - d_star_sq) / inp.x_min0**2
    return RateReport(
        phi=phi_rep.value, gamma=inp.gamma, x_min0=inp.x_min0, a=a, b=b, **chain
    )


def averaging_time_lower_bound(report: RateReport, epsilon: float) -> float | None:
    """Lower bound on the rounds needed to reach an epsilon-ball around the
    steady-state offset; None where the bound is undefined (epsilon^3 must
    exceed b)."""
    if not (0.0 < epsilon < 1.0):
        raise RateError("epsilon must lie in (0, 1)")
    margin = epsilon**3 - report.b
    if margin <= 0.0:
        return None
    if report.gamma <= 0.0:
        return 0.0
    return math.log(report.a / margin) / math.log(1.0 / math.sqrt(report.gamma))


def averaging_time_curve(
    base: RateInputs, gammas, epsilon: float
) -> list[tuple[float, float | None]]:
    """Bound as a function of gamma with every other input held fixed."""
    out = []
    for g in gammas:
        rep = constants_chain(base.with_gamma(float(g)))
        out.append((float(g), averaging_time_lower_bound(rep, epsilon)))
    return out


@dataclass(frozen=True)
class RoundTimeModel:
    """Expected per-round wall time: interference-aware exchange versus the
    fully coupled one on the same communication graph."""

    t_av_sparse: float
    t_av_complete: float


def _default_pair_weight(g_c: UndirectedGraph, i: int, j: int) -> float:
    # Scaled so weight / n is the probability that the unordered pair
    # {i, j} gossips in a round under the uniform scheduler.
    return 1.0 / g_c.degree(i) + 1.0 / g_c.degree(j)


def round_time_model(
    layout: EstimateLayout,
    g_c: UndirectedGraph,
    exchange_time: float,
    gradient_time: float,
    pair_weight=None,
) -> RoundTimeModel:
    """Average per-round time for both exchange regimes.

    For a contact between i and j, player i receives one estimate per
    interference neighbor it shares with j's closed neighborhood, then
    evaluates a gradient whose cost scales with its estimate-block size;
    the fully coupled regime always exchanges n - 1 estimates and pays the
    full gradient.
    """
    g_i = layout.graph
    n = layout.n
    weight = pair_weight or (lambda i, j: _default_pair_weight(g_c, i, j))
    t_sparse = 0.0
    t_complete = 0.0
    for i in range(n):
        for j in g_c.neighbors(i):
            w = weight(i, j) / n
            overlap = len(g_i.neighbor_sets[i] & (g_i.neighbor_sets[j] | {j}))
            t_sparse += w * (overlap * exchange_time + layout.dims[i] / n * gradient_time)
            t_complete += w * ((n - 1) * exchange_time + gradient_time)
    if t_sparse > t_complete + 1e-12:
        raise RateError("interference-aware round time exceeded the fully coupled one")
    return RoundTimeModel(t_av_sparse=t_sparse, t_av_complete=t_complete)


def measure_d_star(norm_dist: np.ndarray, tail_fraction: float = 0.2) -> float:
    """Steady-state offset: minimum distance to the equilibrium over the
    trailing fraction of the samples (the infimum over all rounds would be
    contaminated by the transient)."""
    norm_dist = np.asarray(norm_dist, dtype=np.float64)
    tail = max(1, int(len(norm_dist) * tail_fraction))
    return float(norm_dist[-tail:].min())


def measured_rounds_to_epsilon(
    ks: np.ndarray,
    dist: np.ndarray,
    x0_norm: float,
    d_star: float,
    epsilon: float,
) -> int | None:
    """First sampled round at which the distance to the equilibrium enters
    the epsilon-ball around the steady-state offset, normalized by the
    initial action norm; None if it never does."""
    if x0_norm <= 0:
        raise RateError("initial action norm must be positive")
    hit = np.nonzero((dist - d_star) / x0_norm < epsilon)[0]
    if hit.size == 0:
        return None
    return int(ks[hit[0]])
