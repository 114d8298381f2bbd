"""Search environment: hidden targets on an n x n grid, a perfect per-cell sensor,
and a budgeted agent whose every move costs one step."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from searchtta.errors import AdjacencyError, BudgetError, FormatError, ParameterError
from searchtta.grid import ScoreMap, check_cell, is_adjacent


@dataclass(frozen=True)
class Measurement:
    cell: int
    positive_count: int
    step: int

    @property
    def positive(self) -> bool:
        return self.positive_count > 0


@dataclass(frozen=True, eq=False)
class GridWorld:
    """Ground truth for one episode.

    ``targets`` may be given with repeated cells; they are collapsed into a
    sorted tuple of ``(cell, count)`` pairs.
    """

    n: int
    targets: tuple
    gt_score_map: ScoreMap
    seed: int = 0

    def __post_init__(self):
        if self.gt_score_map.n != self.n:
            raise ParameterError(f"ground-truth map is {self.gt_score_map.n}x, world is {self.n}x")
        counts: dict[int, int] = {}
        for cell, count in self.targets:
            cell = check_cell(cell, self.n)
            if int(count) < 1:
                raise ParameterError(f"target count at cell {cell} must be >= 1, got {count}")
            counts[cell] = counts.get(cell, 0) + int(count)
        object.__setattr__(self, "targets", tuple(sorted(counts.items())))
        object.__setattr__(self, "_counts", counts)

    @property
    def n_cells(self) -> int:
        return self.n * self.n

    @property
    def total_targets(self) -> int:
        return sum(c for _, c in self.targets)

    def count_at(self, cell: int) -> int:
        return self._counts.get(int(cell), 0)

    def target_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_cells, dtype=bool)
        for cell, _ in self.targets:
            mask[cell] = True
        return mask

    def to_dict(self, inline_map: bool = True, map_path: str | None = None) -> dict:
        out = {"n": self.n, "targets": [[c, k] for c, k in self.targets], "seed": self.seed}
        if inline_map or map_path is None:
            out["gt_score_map"] = self.gt_score_map.values.tolist()
        else:
            out["gt_score_map"] = map_path
        return out

    @classmethod
    def from_dict(cls, doc: dict, base_dir: Path | None = None) -> "GridWorld":
        from searchtta.priors import load_score_map

        try:
            n = int(doc["n"])
            gt = doc["gt_score_map"]
            if isinstance(gt, str):
                path = Path(gt)
                if base_dir is not None and not path.is_absolute():
                    path = base_dir / path
                gt_map = load_score_map(path)
            else:
                gt_map = ScoreMap(n, np.asarray(gt, dtype=float).reshape(-1))
            targets = [(int(c), int(k)) for c, k in doc["targets"]]
            return cls(n, tuple(targets), gt_map, int(doc.get("seed", 0)))
        except (KeyError, TypeError) as exc:
            raise FormatError(f"malformed world document: {exc!r}") from exc

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()


def save_world(world: GridWorld, path) -> None:
    Path(path).write_text(json.dumps(world.to_dict()) + "\n", encoding="utf-8")


def load_world(path) -> GridWorld:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return GridWorld.from_dict(doc, base_dir=path.parent)


def sense(world: GridWorld, cell: int, step: int) -> Measurement:
    cell = check_cell(cell, world.n)
    return Measurement(cell, world.count_at(cell), int(step))


@dataclass(frozen=True, eq=False)
class AgentState:
    n: int
    position: int
    budget: int
    steps_used: int = 0
    trajectory: tuple = ()
    visited: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        check_cell(self.position, self.n)
        if self.budget < 0:
            raise ParameterError(f"budget must be >= 0, got {self.budget}")
        if not self.trajectory:
            object.__setattr__(self, "trajectory", (int(self.position),))
        if self.visited is None:
            visited = np.zeros(self.n * self.n, dtype=bool)
            visited[list(self.trajectory)] = True
            visited.setflags(write=False)
            object.__setattr__(self, "visited", visited)

    def __eq__(self, other):
        if not isinstance(other, AgentState):
            return NotImplemented
        return (
            self.n == other.n
            and self.position == other.position
            and self.budget == other.budget
            and self.steps_used == other.steps_used
            and self.trajectory == other.trajectory
            and np.array_equal(self.visited, other.visited)
        )

    __hash__ = None


def initial_state(n: int, start: int, budget: int) -> AgentState:
    return AgentState(n=n, position=check_cell(start, n), budget=int(budget))


def apply_action(state: AgentState, next_cell: int, connectivity: int = 4) -> AgentState:
    """Move to an adjacent cell. Diagonal moves cost one step like cardinal ones."""
    next_cell = check_cell(next_cell, state.n)
    if state.steps_used >= state.budget:
        raise BudgetError(f"budget of {state.budget} steps exhausted")
    if not is_adjacent(state.position, next_cell, state.n, connectivity):
        raise AdjacencyError(
            f"cell {next_cell} is not {connectivity}-adjacent to {state.position}"
        )
    visited = state.visited.copy()
    visited[next_cell] = True
    visited.setflags(write=False)
    return replace(
        state,
        position=next_cell,
        steps_used=state.steps_used + 1,
        trajectory=state.trajectory + (next_cell,),
        visited=visited,
    )


def remaining_budget(state: AgentState) -> int:
    return max(state.budget - state.steps_used, 0)


def replay(n: int, trajectory, budget: int, connectivity: int = 4) -> AgentState:
    """Rebuild the final state of a trajectory, validating every move."""
    trajectory = list(trajectory)
    state = initial_state(n, trajectory[0], budget)
    for cell in trajectory[1:]:
        state = apply_action(state, cell, connectivity)
    return state
