import numpy as np
import pytest

from gossipne import (
    GameError,
    GossipEngine,
    GraphPair,
    StepSchedule,
    block_average,
    build_graph,
    build_layout,
    complete_graph,
    extract_estimate,
    make_quadratic_game,
    make_wanet_game,
    mixing_matrix,
    replicate,
    solve_ne_centralized,
    update_probabilities,
)


@pytest.fixture(scope="module")
def quad4(example_gi):
    return make_quadratic_game(example_gi, 4.0, 1.0, -4.0, (0.0, 10.0))


@pytest.fixture()
def engine(example_layout, example_pair, quad4):
    return GossipEngine(example_layout, example_pair, quad4)


def reference_event(layout, g_c, game, est, actions, counts, i_k, j_k, const_alpha=None):
    """Dense-matrix transcription of one event, kept independent of the
    engine's sparse in-place path."""
    w = mixing_matrix(layout, g_c, i_k, j_k).matrix
    mixed = w @ est
    new_est = mixed.copy()
    new_actions = actions.copy()
    new_counts = counts.copy()
    for pl in (i_k, j_k):
        new_counts[pl] += 1
        alpha = const_alpha if const_alpha is not None else 1.0 / new_counts[pl]
        _, others = extract_estimate(layout, mixed, pl)
        g = game.grad(pl, float(actions[pl]), others)
        new_actions[pl] = min(max(actions[pl] - alpha * g, game.lo[pl]), game.hi[pl])
    for pl in range(layout.n):
        new_est[layout.own_slot[pl]] = new_actions[pl]
    return new_est, new_actions, new_counts


# ------------------------------------------------------------------ init
def test_init_zero_vector(engine):
    state = engine.init_state(init=np.zeros(4), seed=0)
    assert np.array_equal(state.estimates, np.zeros(14))
    assert np.array_equal(state.actions, np.zeros(4))
    assert state.k == 0 and state.update_counts.sum() == 0


def test_init_consistent_broadcast_has_zero_consensus_error(engine, example_layout):
    z0 = np.array([1.0, 2.0, 3.0, 4.0])
    state = engine.init_state(init=z0, seed=0)
    z = block_average(example_layout, state.estimates)
    assert np.abs(state.estimates - z[example_layout.slot_player]).max() == 0.0


def test_init_rejects_out_of_box(engine):
    with pytest.raises(GameError, match="outside the box"):
        engine.init_state(init=np.array([0.0, 0.0, -1.0, 0.0]), seed=0)
    with pytest.raises(GameError, match="length"):
        engine.init_state(init=np.zeros(5), seed=0)


def test_default_init_uses_game_start(engine, quad4, example_layout):
    state = engine.init_state(seed=0)
    assert np.allclose(state.estimates, replicate(example_layout, quad4.start_point()))


def test_same_seed_bitwise_identical(engine, quad4):
    runs = []
    for _ in range(2):
        state = engine.init_state(init="random", seed=99)
        traj = engine.run(state, 3000, sample_stride=100, x_star=quad4.known_ne)
        runs.append(traj)
    assert np.array_equal(runs[0].xs, runs[1].xs)
    assert np.array_equal(runs[0].norm_err, runs[1].norm_err)
    assert np.array_equal(runs[0].consensus_err, runs[1].consensus_err)


def test_different_seeds_differ(engine):
    a = engine.run(engine.init_state(init="random", seed=1), 500, sample_stride=100)
    b = engine.run(engine.init_state(init="random", seed=2), 500, sample_stride=100)
    assert not np.array_equal(a.xs, b.xs)


# ----------------------------------------------------------- single round
def test_event_matches_reference_example(example_gi, example_layout, example_pair):
    game = make_quadratic_game(example_gi, 4.0, 1.0, -4.0, (0.0, 20.0))
    engine = GossipEngine(example_layout, example_pair, game)
    state = engine.init_state(init=np.arange(1.0, 15.0), seed=0)
    ref_est, ref_act, ref_cnt = reference_event(
        example_layout,
        example_pair.g_communication,
        game,
        state.estimates.copy(),
        state.actions.copy(),
        state.update_counts.copy(),
        1,
        2,
    )
    engine.apply_event(state, 1, 2)
    assert np.allclose(state.estimates, ref_est)
    assert np.allclose(state.actions, ref_act)
    assert np.array_equal(state.update_counts, ref_cnt)
    # untouched blocks carry their previous values
    assert np.array_equal(state.estimates[[0, 1, 2, 3]], np.arange(1.0, 5.0))
    assert np.array_equal(state.estimates[[10, 11, 12]], np.array([11.0, 12.0, 13.0]))


def test_event_sequence_matches_reference(engine, example_layout, example_pair, quad4):
    rng = np.random.default_rng(31)
    state = engine.init_state(init="random", seed=5)
    est = state.estimates.copy()
    act = state.actions.copy()
    cnt = state.update_counts.copy()
    g_c = example_pair.g_communication
    edges = sorted(g_c.edges)
    for _ in range(60):
        i, j = edges[rng.integers(len(edges))]
        if rng.random() < 0.5:
            i, j = j, i
        engine.apply_event(state, i, j)
        est, act, cnt = reference_event(example_layout, g_c, quad4, est, act, cnt, i, j)
        assert np.allclose(state.estimates, est, atol=1e-13)
        assert np.allclose(state.actions, act, atol=1e-13)


def test_equilibrium_with_consensus_is_fixed_point(engine, quad4):
    state = engine.init_state(init=quad4.known_ne, seed=0)
    for i, j in [(1, 2), (0, 1), (0, 3), (0, 2)]:
        engine.apply_event(state, i, j)
    assert np.abs(state.actions - quad4.known_ne).max() < 1e-12
    assert np.abs(state.estimates - replicate(engine.layout, quad4.known_ne)).max() < 1e-12


def test_skipped_steps_on_domain_error():
    game = make_wanet_game([{0, 1}, {0, 1}], 10.0, 1.0, 10.0, (0.0, 10.0))
    pair = GraphPair.build(game.interference)
    layout = build_layout(game.interference)
    eng = GossipEngine(layout, pair, game)
    # both players believe the shared links are saturated
    state = eng.init_state(init=np.full(4, 9.0), seed=0)
    eng.apply_event(state, 0, 1)
    assert state.skipped_steps == 2
    assert np.array_equal(state.actions, [9.0, 9.0])
    assert np.array_equal(state.update_counts, [1, 1])


# ------------------------------------------------------------------ runs
def test_short_run_reduces_error(engine, quad4):
    state = engine.init_state(init="random", seed=3)
    traj = engine.run(state, 20000, sample_stride=500, x_star=quad4.known_ne)
    assert traj.norm_err[-1] < 0.01 * traj.norm_err[0]
    assert traj.consensus_err[-1] < 1e-3 * traj.consensus_err[0]
    assert traj.meta["skipped_steps"] == 0


def test_zero_coupling_converges_regardless_of_gossip(example_gi):
    game = make_quadratic_game(example_gi, 4.0, 0.0, (-2.0, -3.0, -4.0, -5.0), (0.0, 10.0))
    pair = GraphPair.build(example_gi, example_gi)
    layout = build_layout(example_gi)
    eng = GossipEngine(layout, pair, game)
    state = eng.init_state(init="random", seed=8)
    traj = eng.run(state, 20000, sample_stride=1000, x_star=game.known_ne)
    assert traj.norm_err[-1] < 1e-3


def test_box_invariant_and_self_consistency(engine, quad4):
    state = engine.init_state(init="random", seed=13)
    traj = engine.run(state, 5000, sample_stride=100)
    assert np.all(traj.xs >= quad4.lo) and np.all(traj.xs <= quad4.hi)
    slot_lo = quad4.lo[engine.layout.slot_player]
    slot_hi = quad4.hi[engine.layout.slot_player]
    assert np.all(state.estimates >= slot_lo) and np.all(state.estimates <= slot_hi)
    assert np.array_equal(state.actions, state.estimates[engine.layout.own_slot])


def test_update_counts_track_participation(engine):
    state = engine.init_state(seed=21)
    traj = engine.run(state, 4000, sample_stride=4000)
    assert state.update_counts.sum() == 2 * 4000
    # empirical participation frequencies approach the scheduler's law
    p = update_probabilities(engine.graphs.g_communication)
    emp = state.update_counts / 4000
    assert np.abs(emp - p).max() < 4e-2


def test_weighted_consensus_sum_growth(engine, quad4):
    short = engine.run(
        engine.init_state(init="random", seed=6), 2000, sample_stride=100,
        track_weighted_consensus=True,
    )
    long = engine.run(
        engine.init_state(init="random", seed=6), 20000, sample_stride=100,
        track_weighted_consensus=True,
    )
    s_short = short.weighted_consensus_sum[-1]
    s_long = long.weighted_consensus_sum[-1]
    assert s_short > 0
    # the running sum is summable: a 10x longer run barely adds to it
    assert s_long < 1.05 * s_short


def test_complete_layout_mode(example_gi, example_pair, quad4):
    # same game run on the complete-graph layout (full estimate vectors)
    full = complete_graph(4)
    layout = build_layout(full)
    pair = GraphPair(
        g_interference=full,
        g_communication=example_pair.g_communication,
        g_triangle_free=example_pair.g_triangle_free,
    )
    eng = GossipEngine(layout, pair, quad4)
    assert layout.total_dim == 16
    state = eng.init_state(init="random", seed=4)
    traj = eng.run(state, 30000, sample_stride=1000, x_star=quad4.known_ne)
    assert traj.norm_err[-1] < 1e-3


def test_trajectory_csv_round_trip(tmp_path, engine, quad4):
    state = engine.init_state(init="random", seed=7)
    traj = engine.run(state, 1000, sample_stride=100, x_star=quad4.known_ne)
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "k,x_1,x_2,x_3,x_4,norm_err,consensus_err"
    last = lines[-1].split(",")
    assert int(last[0]) == traj.ks[-1]
    assert [float(v) for v in last[1:5]] == [float(v) for v in traj.xs[-1]]


# -------------------------------------------------------- probabilities
def test_update_probabilities_path():
    g = build_graph(2, [(0, 1)])
    assert np.array_equal(update_probabilities(g), [1.0, 1.0])


def test_update_probabilities_star():
    star = build_graph(4, [(0, 1), (0, 2), (0, 3)])
    p = update_probabilities(star)
    assert p[0] == pytest.approx(1.0)
    assert np.allclose(p[1:], 1.0 / 3.0)
    assert p.sum() == pytest.approx(2.0)


def test_update_probabilities_sum_to_two(example_gc):
    p = update_probabilities(example_gc)
    assert p.sum() == pytest.approx(2.0)
    assert np.allclose(p, [0.75, 11.0 / 24.0, 11.0 / 24.0, 1.0 / 3.0])


def test_update_probabilities_monte_carlo(example_gc):
    rng = np.random.default_rng(12345)
    n = example_gc.n
    draws = 1_000_000
    wakers = rng.integers(0, n, size=draws)
    picks = rng.random(draws)
    counts = np.zeros(n)
    nbrs = [np.array(example_gc.neighbors(i)) for i in range(n)]
    for i in range(n):
        sel = wakers == i
        chosen = nbrs[i][(picks[sel] * len(nbrs[i])).astype(int)]
        counts[i] += sel.sum()
        counts += np.bincount(chosen, minlength=n)
    freq = counts / draws
    assert np.abs(freq - update_probabilities(example_gc)).max() < 1e-3
