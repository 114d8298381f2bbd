"""Score-map I/O, synthetic scenarios, and prior-quality scoring.

Score maps are produced outside this package (CLIP cosine similarities, VLM
heat maps, ...) and must already be scaled to [0, 1] when they arrive here.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from searchtta.errors import FormatError, ParameterError, UndefinedQualityError
from searchtta.grid import FeatureField, ScoreMap
from searchtta.world import GridWorld

__all__ = [
    "CORRUPTIONS",
    "FeatureField",
    "ScenarioParams",
    "ScoreMap",
    "load_score_map",
    "map_quality",
    "save_score_map",
    "scenario_regions",
    "synth_scenario",
]

CORRUPTIONS = ("none", "mode_swap", "uniform_blur")

HIGH_SCORE = 0.8
LOW_SCORE = 0.1
MAP_NOISE = 0.05
FEATURE_NOISE = 0.02
# coordinate channels span [0, COORD_SCALE]; kept below the one-hot separation
COORD_SCALE = 0.5
_RANGE_SLACK = 1e-3


def load_score_map(path) -> ScoreMap:
    """Read the ``n=<int>`` header CSV. Values within 1e-3 of [0, 1] are clamped."""
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        lines = [ln.rstrip("\r\n") for ln in fh]
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise FormatError(f"{path}: empty file")

    header = lines[0].strip().replace(" ", "")
    if not header.startswith("n="):
        raise FormatError(f"{path}: row 0: expected header 'n=<int>', got {lines[0]!r}")
    try:
        n = int(header[2:])
    except ValueError:
        raise FormatError(f"{path}: row 0: bad side length {header[2:]!r}") from None
    if n < 1:
        raise FormatError(f"{path}: row 0: side length must be >= 1")

    rows = lines[1:]
    if len(rows) != n:
        raise FormatError(f"{path}: expected {n} data rows for n={n}, got {len(rows)}")
    values = np.empty((n, n))
    for i, line in enumerate(rows):
        cells = line.split(",")
        if len(cells) != n:
            raise FormatError(f"{path}: row {i + 1}: expected {n} columns, got {len(cells)}")
        for j, raw in enumerate(cells):
            try:
                # float() ignores the process locale, unlike locale.atof
                v = float(raw.strip())
            except ValueError:
                raise FormatError(
                    f"{path}: row {i + 1}, column {j + 1}: non-numeric value {raw!r}"
                ) from None
            if not math.isfinite(v) or v < -_RANGE_SLACK or v > 1.0 + _RANGE_SLACK:
                raise FormatError(
                    f"{path}: row {i + 1}, column {j + 1}: value {v!r} outside [0, 1]"
                )
            values[i, j] = v
    return ScoreMap(n, np.clip(values, 0.0, 1.0).reshape(-1))


def save_score_map(score_map: ScoreMap, path) -> None:
    lines = [f"n={score_map.n}"]
    for row in score_map.grid():
        lines.append(",".join(format(float(v), ".17g") for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class ScenarioParams:
    n: int = 24
    num_regions: int = 2
    targets_total: int = 10
    target_region_bias: float = 0.9
    corruption: str = "none"
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ParameterError(f"n must be >= 2, got {self.n}")
        if not 2 <= self.num_regions <= 4:
            raise ParameterError(f"num_regions must be in [2, 4], got {self.num_regions}")
        if self.num_regions > self.n * self.n:
            raise ParameterError("more regions than cells")
        if self.targets_total < 1:
            raise ParameterError(f"targets_total must be >= 1, got {self.targets_total}")
        if not 0.0 <= self.target_region_bias <= 1.0:
            raise ParameterError("target_region_bias must lie in [0, 1]")
        if self.corruption not in CORRUPTIONS:
            raise ParameterError(f"corruption must be one of {CORRUPTIONS}, got {self.corruption!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioParams":
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ParameterError(f"unknown scenario fields: {sorted(unknown)}")
        return cls(**doc)


def scenario_regions(params: ScenarioParams) -> tuple[np.ndarray, int]:
    """Voronoi region label per cell and the index of the region holding most targets."""
    rng = np.random.default_rng([params.seed, 0])
    n = params.n
    seeds = rng.choice(n * n, size=params.num_regions, replace=False)
    rows, cols = np.divmod(np.arange(n * n), n)
    sr, sc = np.divmod(seeds, n)
    d2 = (rows[:, None] - sr[None, :]) ** 2 + (cols[:, None] - sc[None, :]) ** 2
    labels = np.argmin(d2, axis=1)
    true_region = int(rng.integers(params.num_regions))
    return labels, true_region


def synth_scenario(params: ScenarioParams) -> tuple[GridWorld, ScoreMap, FeatureField]:
    """Build a seeded world, the (possibly corrupted) prior map, and per-cell features."""
    n = params.n
    labels, true_region = scenario_regions(params)
    rng = np.random.default_rng([params.seed, 1])

    in_true = labels == true_region
    noise = rng.normal(0.0, MAP_NOISE, n * n)
    gt = np.clip(np.where(in_true, HIGH_SCORE, LOW_SCORE) + noise, 0.0, 1.0)

    inside = np.flatnonzero(in_true)
    outside = np.flatnonzero(~in_true)
    n_inside = int(math.floor(params.target_region_bias * params.targets_total + 0.5))
    n_outside = params.targets_total - n_inside
    if n_inside > inside.size or n_outside > outside.size:
        raise ParameterError(
            f"cannot place {n_inside} targets in {inside.size} true-region cells "
            f"and {n_outside} in {outside.size} other cells"
        )
    cells = np.concatenate(
        [rng.choice(inside, n_inside, replace=False), rng.choice(outside, n_outside, replace=False)]
    )
    world = GridWorld(n, tuple((int(c), 1) for c in cells), ScoreMap(n, gt), params.seed)

    onehot = np.eye(params.num_regions)[labels]
    rows, cols = np.divmod(np.arange(n * n), n)
    coords = COORD_SCALE * np.stack([rows, cols], axis=1) / (n - 1)
    vectors = np.hstack([onehot, coords])
    vectors = vectors + rng.normal(0.0, FEATURE_NOISE, vectors.shape)
    features = FeatureField(n, vectors)

    if params.corruption == "none":
        base = world.gt_score_map
    elif params.corruption == "mode_swap":
        base = ScoreMap(n, np.clip(np.where(in_true, LOW_SCORE, HIGH_SCORE) + noise, 0.0, 1.0))
    else:
        base = ScoreMap.uniform(n, 0.5)
    return world, base, features


def map_quality(pred: ScoreMap, world: GridWorld) -> float:
    """Count-weighted mean predicted score over the cells that hold targets."""
    if pred.n != world.n:
        raise ParameterError(f"map is {pred.n}x, world is {world.n}x")
    if not world.targets:
        raise UndefinedQualityError("world has no targets")
    cells = np.array([c for c, _ in world.targets])
    counts = np.array([k for _, k in world.targets], dtype=float)
    return float(np.dot(pred.values[cells], counts) / counts.sum())


def load_params(path) -> ScenarioParams:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return ScenarioParams.from_dict(doc)
