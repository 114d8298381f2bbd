import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from searchtta import CoverageComplete, ParameterError
from searchtta.grid import ScoreMap, is_adjacent, neighbors, to_rc
from searchtta.plan import (
    DijkstraQuery,
    InformationSurfing,
    Lawnmower,
    Observation,
    box_blur,
    dijkstra_query,
    is_step,
    lawnmower_step,
    lawnmower_track,
    make_planner,
    planner_to_dict,
    step_cost,
)


def obs_for(belief, position, visited_cells=(), n=None):
    belief = np.asarray(belief, dtype=float).reshape(-1)
    n = n or int(np.sqrt(belief.size))
    visited = np.zeros(n * n, dtype=bool)
    visited[list(visited_cells)] = True
    visited[position] = True
    return Observation(position, visited, ScoreMap(n, belief), 100)


# --- information surfing -----------------------------------------------------------


def test_is_follows_eastward_slope():
    n = 9
    belief = np.tile(np.linspace(0.1, 0.9, n), n)
    assert is_step(obs_for(belief, 4 * n + 4)) == 4 * n + 5


def test_is_uniform_prefers_north():
    assert is_step(obs_for(np.full(81, 0.5), 40)) == 31


def test_is_skips_visited_neighbours():
    n = 9
    belief = np.tile(np.linspace(0.1, 0.9, n), n)
    # east is visited: best remaining move is the tie between N and S, so N
    assert is_step(obs_for(belief, 40, visited_cells=[41])) == 31


def test_is_reenters_visited_ground_when_boxed_in():
    n = 5
    belief = np.full(25, 0.2)
    belief[14] = 0.9  # right-hand side of the ring
    belief[13] = 0.8
    block = [6, 7, 8, 11, 13, 16, 17, 18]
    step = is_step(obs_for(belief, 12, visited_cells=block))
    # every neighbour is visited; the move heads for the best nearest unvisited cell
    assert step == 13
    assert belief[step] == max(belief[c] for c in neighbors(12, n, 4))


def test_is_boxed_in_picks_route_to_nearest_unvisited():
    n = 5
    belief = np.full(25, 0.3)
    visited = [c for c in range(25) if c != 0]
    assert is_step(obs_for(belief, 12, visited_cells=visited)) in (7, 11)


def test_is_all_visited_signals_completion():
    with pytest.raises(CoverageComplete):
        is_step(obs_for(np.full(4, 0.5), 0, visited_cells=range(4)))


@st.composite
def random_obs(draw):
    n = draw(st.integers(2, 8))
    seed = draw(st.integers(0, 2**31))
    rng = np.random.default_rng(seed)
    belief = rng.random(n * n)
    visited = rng.random(n * n) < draw(st.floats(0, 0.9))
    pos = draw(st.integers(0, n * n - 1))
    visited[pos] = True
    if visited.all():
        visited[(pos + 1) % (n * n)] = False
    return Observation(pos, visited, ScoreMap(n, belief), 10)


@settings(max_examples=100, deadline=None)
@given(random_obs())
def test_is_moves_are_adjacent_and_deterministic(obs):
    a, b = is_step(obs), is_step(obs)
    assert a == b and is_adjacent(obs.position, a, obs.n, 4)


@settings(max_examples=100, deadline=None)
@given(random_obs(), st.sampled_from([0.5, 0.25, 1.0 / 3.0, 0.9, 0.01]))
def test_is_invariant_to_belief_scaling(obs, scale):
    scaled = Observation(obs.position, obs.visited, ScoreMap(obs.n, obs.belief.values * scale), obs.remaining)
    assert is_step(scaled) == is_step(obs)


def test_box_blur_zero_padded():
    grid = np.ones((3, 3))
    out = box_blur(grid, 1)
    assert out[1, 1] == 9 and out[0, 0] == 4 and out[0, 1] == 6


# --- lawnmower -------------------------------------------------------------------------


def test_lawnmower_descends_at_row_end():
    assert lawnmower_step(obs_for(np.zeros(9), 2)) == 5


def test_lawnmower_reverses_on_odd_rows():
    assert lawnmower_step(obs_for(np.zeros(9), 5)) == 4


def test_lawnmower_track_shape():
    assert lawnmower_track(3).tolist() == [0, 1, 2, 5, 4, 3, 6, 7, 8]


def test_lawnmower_finishes():
    with pytest.raises(CoverageComplete):
        lawnmower_step(obs_for(np.zeros(9), 8))  # last track cell for n=3


def test_lawnmower_256_steps_cover_257_cells():
    n = 24
    pos, cells = 0, [0]
    for _ in range(256):
        pos = lawnmower_step(obs_for(np.zeros(n * n), pos))
        cells.append(pos)
    assert len(set(cells)) == 257 == len(cells)
    assert all(is_adjacent(a, b, n, 4) for a, b in zip(cells, cells[1:]))


# --- Dijkstra query ---------------------------------------------------------------------


def chebyshev(a, b, n):
    (ra, ca), (rb, cb) = to_rc(a, n), to_rc(b, n)
    return max(abs(ra - rb), abs(ca - cb))


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 9), st.data())
def test_dijkstra_plain_shortest_path(n, data):
    pos = data.draw(st.integers(0, n * n - 1))
    obs = obs_for(np.full(n * n, 0.5), pos)
    path = dijkstra_query(obs, (1.0, 0.0, 0.0))
    query = 0 if pos != 0 else 1
    assert path[-1] == query
    assert len(path) == chebyshev(pos, query, n)
    assert all(is_adjacent(a, b, n, 8) for a, b in zip([pos] + path, path))


def enumerate_paths(start, goal, n, max_len):
    out = []

    def walk(path):
        if path[-1] == goal:
            out.append(path[1:])
            return
        if len(path) > max_len:
            return
        for v in neighbors(path[-1], n, 8):
            if v not in path:
                walk(path + [v])

    walk([start])
    return out


def test_dijkstra_prefers_ridge_exhaustive_oracle():
    n = 5
    belief = np.full(25, 0.1)
    belief[14] = 1.0  # query: (2, 4)
    belief[[6, 7, 8]] = 0.9  # ridge on row 1
    obs = obs_for(belief, 10)
    weights = (1.0, 0.5, 0.5)
    cost = step_cost(belief, obs.visited, weights)
    paths = enumerate_paths(10, 14, n, 6)
    costs = [sum(cost[c] for c in p) for p in paths]
    best = min(costs)
    winners = [p for p, c in zip(paths, costs) if abs(c - best) < 1e-12]
    route = dijkstra_query(obs, weights)
    assert sum(cost[c] for c in route) == pytest.approx(best, abs=1e-12)
    assert winners == [route]
    assert route == [6, 7, 8, 14]
    # without the probability term the straight row is as good as the ridge
    assert len(dijkstra_query(obs, (1.0, 0.0, 0.0))) == 4


def test_dijkstra_avoids_visited_cells():
    n = 5
    belief = np.full(25, 0.1)
    belief[14] = 1.0
    straight = dijkstra_query(obs_for(belief, 10, visited_cells=[6, 7, 8]), (1.0, 0.0, 0.5))
    assert not set(straight) & {6, 7, 8}


def test_dijkstra_query_is_unvisited_argmax():
    rng = np.random.default_rng(0)
    for _ in range(30):
        belief = rng.random(36)
        visited = rng.random(36) < 0.5
        pos = int(rng.integers(36))
        visited[pos] = True
        obs = Observation(pos, visited, ScoreMap(6, belief), 5)
        path = dijkstra_query(obs)
        assert path[-1] == int(np.argmax(np.where(visited, -1, belief)))


@pytest.mark.parametrize("scale", [2.0, 4.0, 3.0, 0.5])
def test_dijkstra_invariant_to_joint_cost_scaling(scale):
    rng = np.random.default_rng(1)
    belief = rng.random(49)
    obs = obs_for(belief, 3, visited_cells=rng.choice(49, 10, replace=False))
    w = np.array([1.0, 0.5, 0.5])
    assert dijkstra_query(obs, tuple(w)) == dijkstra_query(obs, tuple(w * scale))


def test_dijkstra_completion_and_weights():
    with pytest.raises(CoverageComplete):
        dijkstra_query(obs_for(np.full(4, 0.5), 0, visited_cells=range(4)))
    with pytest.raises(ParameterError):
        dijkstra_query(obs_for(np.full(4, 0.5), 0), (1.0, -0.5, 0.0))


def test_cost_floor_keeps_costs_positive():
    cost = step_cost(np.array([1.0, 0.0]), np.array([False, True]), (0.1, 5.0, 0.0))
    assert cost[0] == 1e-6 and cost[1] == pytest.approx(0.1)


# --- planner objects ---------------------------------------------------------------------


def test_planner_connectivity_fixed_per_kind():
    assert InformationSurfing().connectivity == 4
    assert Lawnmower().connectivity == 4
    assert DijkstraQuery().connectivity == 8


@pytest.mark.parametrize(
    "doc",
    [{"kind": "information_surfing", "blur_radius": 2}, {"kind": "lawnmower"}, {"kind": "dijkstra_query", "weights": [1.0, 0.2, 0.3]}],
)
def test_planner_config_round_trip(doc):
    planner = make_planner(doc)
    assert planner_to_dict(planner) == doc


def test_planner_config_errors():
    with pytest.raises(ParameterError):
        make_planner({"kind": "rl"})
    with pytest.raises(ParameterError):
        make_planner({"kind": "lawnmower", "weights": [1, 1, 1]})


def test_observation_distribution_sums_to_one():
    obs = obs_for(np.random.default_rng(0).random(36), 0)
    assert obs.distribution.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.all(obs.distribution >= 0)
