"""Gossip-based Nash equilibrium seeking for partially coupled networked
games, with the spectral and rate analysis needed to sanity-check runs."""

from .engine import EngineState, GossipEngine, StepSchedule, Trajectory, update_probabilities
from .games import (
    DomainError,
    FdConfig,
    GameConstants,
    GameDefinition,
    GameError,
    best_response_solve,
    estimate_constants,
    fd_gradient,
    fd_gradient_boxed,
    generate_wanet,
    make_quadratic_game,
    make_wanet_game,
    pseudo_gradient,
    solve_ne_centralized,
)
from .gossip import (
    GossipMatrix,
    IdentityReport,
    SpectralCore,
    apply_mixing,
    expected_mixing,
    gossip_slot_pairs,
    mixing_matrix,
    second_largest_eigenvalue,
    verify_identities,
)
from .graphs import (
    GraphError,
    GraphPair,
    UndirectedGraph,
    ValidationReport,
    build_graph,
    check_neighbor_union,
    complete_graph,
    graph_from_json,
    graph_to_json,
    is_connected,
    is_maximal_triangle_free_spanning,
    is_triangle_free,
    maximal_triangle_free_spanning_subgraph,
    validate_communication_graph,
)
from .layout import (
    EstimateLayout,
    block_average,
    build_layout,
    extract_estimate,
    layout_to_json,
    replicate,
    shared_players,
)
from .rates import (
    PhiReport,
    RateError,
    RateInputs,
    RateReport,
    RoundTimeModel,
    averaging_time_curve,
    averaging_time_lower_bound,
    compute_phi,
    constants_chain,
    measure_d_star,
    measured_rounds_to_epsilon,
    round_time_model,
)

__version__ = "0.1.0"
