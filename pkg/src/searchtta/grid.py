"""Row-major cell indexing and the two per-cell containers shared by every module."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from searchtta.errors import BoundsError, ParameterError

# (drow, dcol) in the fixed tie-break order N, E, S, W.
CARDINAL = ((-1, 0), (0, 1), (1, 0), (0, -1))
DIAGONAL = ((-1, -1), (-1, 1), (1, -1), (1, 1))


def to_rc(cell: int, n: int) -> tuple[int, int]:
    return divmod(int(cell), n)


def to_cell(row: int, col: int, n: int) -> int:
    return row * n + col


def check_cell(cell: int, n: int) -> int:
    cell = int(cell)
    if not 0 <= cell < n * n:
        raise BoundsError(f"cell {cell} outside [0, {n * n})")
    return cell


def neighbors(cell: int, n: int, connectivity: int = 4) -> list[int]:
    """In-bounds neighbours of `cell`; cardinal ones first in N, E, S, W order."""
    if connectivity not in (4, 8):
        raise ParameterError(f"connectivity must be 4 or 8, got {connectivity}")
    r, c = to_rc(cell, n)
    offsets = CARDINAL if connectivity == 4 else CARDINAL + DIAGONAL
    out = []
    for dr, dc in offsets:
        rr, cc = r + dr, c + dc
        if 0 <= rr < n and 0 <= cc < n:
            out.append(rr * n + cc)
    return out


def is_adjacent(a: int, b: int, n: int, connectivity: int = 4) -> bool:
    ra, ca = to_rc(a, n)
    rb, cb = to_rc(b, n)
    dr, dc = abs(ra - rb), abs(ca - cb)
    if connectivity == 4:
        return dr + dc == 1
    return max(dr, dc) == 1


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ScoreMap:
    """n*n probability-like scores in [0, 1], stored flat in row-major order."""

    n: int
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values).reshape(-1)
        if self.n < 1 or values.size != self.n * self.n:
            raise ParameterError(f"score map needs {self.n * self.n} values, got {values.size}")
        if not np.all(np.isfinite(values)):
            raise ParameterError("score map values must be finite")
        if values.min() < 0.0 or values.max() > 1.0:
            raise ParameterError("score map values must lie in [0, 1]")
        object.__setattr__(self, "values", values)

    @classmethod
    def uniform(cls, n: int, value: float = 0.5) -> "ScoreMap":
        return cls(n, np.full(n * n, value))

    def grid(self) -> np.ndarray:
        return self.values.reshape(self.n, self.n)

    def normalized(self) -> np.ndarray:
        """Values scaled to sum to one (uniform if the map is all zeros)."""
        total = self.values.sum()
        if total <= 0.0:
            return np.full(self.values.size, 1.0 / self.values.size)
        return self.values / total

    def __eq__(self, other):
        if not isinstance(other, ScoreMap):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.values, other.values)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class FeatureField:
    """One feature vector of length `dim` per cell."""

    n: int
    vectors: np.ndarray

    def __post_init__(self):
        vectors = np.array(self.vectors, dtype=float)
        if vectors.ndim == 1:
            vectors = vectors[:, None]
        if vectors.ndim != 2 or vectors.shape[0] != self.n * self.n or vectors.shape[1] < 1:
            raise ParameterError(
                f"feature field needs shape ({self.n * self.n}, D>=1), got {vectors.shape}"
            )
        if not np.all(np.isfinite(vectors)):
            raise ParameterError("feature vectors must be finite")
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __eq__(self, other):
        if not isinstance(other, FeatureField):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.vectors, other.vectors)

    __hash__ = None
