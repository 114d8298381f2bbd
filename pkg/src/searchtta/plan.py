"""Planners: information surfing, lawnmower coverage, and Dijkstra query routing.

A planner is anything with a ``connectivity`` attribute and a
``step(obs) -> cell`` method; externally trained policies plug in the same way.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from searchtta.errors import CoverageComplete, ParameterError
from searchtta.grid import CARDINAL, ScoreMap, neighbors, to_rc

COST_FLOOR = 1e-6
DEFAULT_WEIGHTS = (1.0, 0.5, 0.5)


@dataclass(frozen=True, eq=False)
class Observation:
    position: int
    visited: np.ndarray
    belief: ScoreMap
    remaining: int

    @property
    def n(self) -> int:
        return self.belief.n

    @property
    def distribution(self) -> np.ndarray:
        return self.belief.normalized()


class Planner(Protocol):
    connectivity: int

    def step(self, obs: Observation) -> int: ...


def box_blur(grid: np.ndarray, radius: int = 1) -> np.ndarray:
    """Zero-padded (2r+1)^2 box sum; every window is summed in the same order."""
    if radius < 0:
        raise ParameterError("blur radius must be >= 0")
    n0, n1 = grid.shape
    padded = np.pad(grid, radius)
    out = np.zeros_like(grid, dtype=float)
    for dr in range(2 * radius + 1):
        for dc in range(2 * radius + 1):
            out += padded[dr : dr + n0, dc : dc + n1]
    return out


def _step_towards_unvisited(obs: Observation) -> int:
    """First move on a shortest 4-connected path to the best nearest unvisited cell."""
    n = obs.n
    if obs.visited.all():
        raise CoverageComplete("every cell has been visited")
    dist = np.full(n * n, -1)
    dist[obs.position] = 0
    queue = deque([obs.position])
    while queue:
        u = queue.popleft()
        for v in neighbors(u, n, 4):
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    open_cells = np.flatnonzero(~obs.visited)
    d_min = dist[open_cells].min()
    nearest = open_cells[dist[open_cells] == d_min]
    goal = int(nearest[np.argmax(obs.belief.values[nearest])])
    # walk back from the goal with a BFS rooted there
    back = np.full(n * n, -1)
    back[goal] = 0
    queue = deque([goal])
    while queue:
        u = queue.popleft()
        for v in neighbors(u, n, 4):
            if back[v] < 0:
                back[v] = back[u] + 1
                queue.append(v)
    for v in neighbors(obs.position, n, 4):
        if back[v] == back[obs.position] - 1:
            return v
    raise AssertionError("unreachable: grid is connected")


def is_step(obs: Observation, blur_radius: int = 1) -> int:
    """Greedy move along the local slope of the remaining-information map.

    Sensed cells carry no information (the sensor is perfect), so the belief
    is zeroed there before blurring. Unvisited cardinal neighbours are ranked
    by blurred-information difference, then raw belief, then N, E, S, W.
    With no unvisited neighbour the agent re-enters visited ground along a
    shortest path towards the nearest unvisited cell.
    """
    n = obs.n
    belief = obs.belief.values
    info = np.where(obs.visited, 0.0, belief).reshape(n, n)
    blurred = box_blur(info, blur_radius).reshape(-1)
    here = blurred[obs.position]

    r, c = to_rc(obs.position, n)
    best, best_key = None, None
    for order, (dr, dc) in enumerate(CARDINAL):
        rr, cc = r + dr, c + dc
        if not (0 <= rr < n and 0 <= cc < n):
            continue
        cell = rr * n + cc
        if obs.visited[cell]:
            continue
        key = (blurred[cell] - here, belief[cell], -order)
        if best_key is None or key > best_key:
            best, best_key = cell, key
    if best is not None:
        return best
    return _step_towards_unvisited(obs)


def lawnmower_track(n: int) -> np.ndarray:
    """Boustrophedon order from the top-left cell: row 0 left to right, row 1 back, ..."""
    rows = [np.arange(r * n, (r + 1) * n) for r in range(n)]
    return np.concatenate([row if r % 2 == 0 else row[::-1] for r, row in enumerate(rows)])


def lawnmower_step(obs: Observation) -> int:
    track = lawnmower_track(obs.n)
    idx = int(np.flatnonzero(track == obs.position)[0])
    if idx + 1 >= track.size:
        raise CoverageComplete("lawnmower track finished")
    return int(track[idx + 1])


def step_cost(belief: np.ndarray, visited: np.ndarray, weights) -> np.ndarray:
    w_dist, w_prob, w_visited = weights
    cost = w_dist - w_prob * belief + w_visited * visited.astype(float)
    return np.maximum(cost, COST_FLOOR)


def dijkstra_query(obs: Observation, weights=DEFAULT_WEIGHTS) -> list[int]:
    """Route (excluding the current cell) to the most likely unvisited cell.

    Entering a cell costs ``w_dist - w_prob*belief + w_visited*visited``,
    floored at 1e-6. Equal-cost routes prefer smaller cell indices.
    """
    if any(w < 0 for w in weights):
        raise ParameterError(f"weights must be non-negative, got {weights}")
    n = obs.n
    belief = obs.belief.values
    if obs.visited.all():
        raise CoverageComplete("every cell has been visited")
    masked = np.where(obs.visited, -np.inf, belief)
    query = int(np.argmax(masked))

    cost = step_cost(belief, obs.visited, weights)
    dist = np.full(n * n, np.inf)
    pred = np.full(n * n, -1)
    dist[obs.position] = 0.0
    heap = [(0.0, obs.position)]
    done = np.zeros(n * n, dtype=bool)
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        if u == query:
            break
        for v in neighbors(u, n, 8):
            if done[v]:
                continue
            nd = d + cost[v]
            if nd < dist[v] or (nd == dist[v] and u < pred[v]):
                dist[v] = nd
                pred[v] = u
                heapq.heappush(heap, (nd, v))

    path = [query]
    while path[-1] != obs.position:
        path.append(int(pred[path[-1]]))
    return path[::-1][1:]


@dataclass(frozen=True)
class InformationSurfing:
    blur_radius: int = 1
    connectivity: int = field(default=4, init=False)
    kind: str = field(default="information_surfing", init=False)

    def step(self, obs: Observation) -> int:
        return is_step(obs, self.blur_radius)


@dataclass(frozen=True)
class Lawnmower:
    connectivity: int = field(default=4, init=False)
    kind: str = field(default="lawnmower", init=False)
    fixed_start: int = field(default=0, init=False)

    def step(self, obs: Observation) -> int:
        return lawnmower_step(obs)


@dataclass(frozen=True)
class DijkstraQuery:
    weights: tuple = DEFAULT_WEIGHTS
    connectivity: int = field(default=8, init=False)
    kind: str = field(default="dijkstra_query", init=False)

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if len(self.weights) != 3 or any(w < 0 for w in self.weights):
            raise ParameterError(f"weights must be three non-negative numbers, got {self.weights}")

    def step(self, obs: Observation) -> int:
        return dijkstra_query(obs, self.weights)[0]


PLANNERS = {
    "information_surfing": InformationSurfing,
    "lawnmower": Lawnmower,
    "dijkstra_query": DijkstraQuery,
}


def make_planner(doc: dict):
    """Build a planner from ``{kind, weights?, blur_radius?}``."""
    doc = dict(doc)
    kind = doc.pop("kind", None)
    if kind not in PLANNERS:
        raise ParameterError(f"unknown planner kind {kind!r}; choose from {sorted(PLANNERS)}")
    try:
        return PLANNERS[kind](**doc)
    except TypeError as exc:
        raise ParameterError(f"bad parameters for {kind}: {exc}") from None


def planner_to_dict(planner) -> dict:
    doc = {"kind": planner.kind}
    if isinstance(planner, InformationSurfing):
        doc["blur_radius"] = planner.blur_radius
    elif isinstance(planner, DijkstraQuery):
        doc["weights"] = list(planner.weights)
    return doc
