"""Semantic region segmentation of the per-cell feature field.

k-means with k-means++ seeding; k is picked as the rounded mean of the
silhouette-optimal k and the elbow (knee) of the within-cluster sum of
squares, then capped.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist, squareform

from searchtta.errors import CriterionUndefinedError, DegenerateInputError, ParameterError
from searchtta.grid import FeatureField

MAX_ITER = 100
TOL = 1e-8
N_INIT = 10


def _as_points(features) -> np.ndarray:
    if isinstance(features, FeatureField):
        return features.vectors
    pts = np.asarray(features, dtype=float)
    return pts[:, None] if pts.ndim == 1 else pts


def _sq_dists(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - centroids[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int
    history: list = field(default_factory=list)


def _plusplus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centroids = [x[rng.integers(n)]]
    closest = np.sum((x - centroids[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = closest.sum()
        idx = rng.choice(n, p=closest / total)
        centroids.append(x[idx])
        closest = np.minimum(closest, np.sum((x - x[idx]) ** 2, axis=1))
    return np.array(centroids)


def kmeans_fit(
    features,
    k: int,
    seed: int = 0,
    n_init: int = N_INIT,
    max_iter: int = MAX_ITER,
    tol: float = TOL,
) -> KMeansResult:
    """Best of `n_init` seeded Lloyd runs, by final within-cluster sum of squares."""
    x = _as_points(features)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ParameterError(f"k must be in [1, {n}], got {k}")
    distinct = np.unique(x, axis=0).shape[0]
    if k > distinct:
        raise DegenerateInputError(f"k={k} exceeds the {distinct} distinct feature vectors")
    if n_init < 1:
        raise ParameterError(f"n_init must be >= 1, got {n_init}")

    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        run = lloyd(x, _plusplus(x, k, rng), max_iter, tol)
        if best is None or run.inertia < best.inertia:
            best = run
    return best


def lloyd(x: np.ndarray, centroids: np.ndarray, max_iter: int = MAX_ITER, tol: float = TOL) -> KMeansResult:
    """Lloyd iterations from the given centroids.

    ``history`` holds the within-cluster sum of squares after every
    assignment step; it never increases. Clusters left empty are re-seeded
    at the point farthest from its centroid.
    """
    n = x.shape[0]
    k = centroids.shape[0]
    history = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        d = _sq_dists(x, centroids)
        labels = np.argmin(d, axis=1)
        point_d = d[np.arange(n), labels]
        history.append(float(point_d.sum()))

        new = centroids.copy()
        counts = np.bincount(labels, minlength=k)
        for j in range(k):
            if counts[j]:
                new[j] = x[labels == j].mean(axis=0)
        for j in np.flatnonzero(counts == 0):
            far = int(np.argmax(point_d))
            new[j] = x[far]
            point_d[far] = 0.0
        shift = float(np.max(np.linalg.norm(new - centroids, axis=1)))
        centroids = new
        if shift < tol:
            break

    d = _sq_dists(x, centroids)
    labels = np.argmin(d, axis=1)
    inertia = float(d[np.arange(n), labels].sum())
    history.append(inertia)
    return KMeansResult(labels, centroids, inertia, n_iter, history)


def kmeans(features, k: int, seed: int = 0, n_init: int = N_INIT) -> np.ndarray:
    return kmeans_fit(features, k, seed, n_init).labels


def silhouette(features, labels) -> float:
    """Mean silhouette coefficient; singleton clusters score 0."""
    x = _as_points(features)
    labels = np.asarray(labels)
    uniq, inv = np.unique(labels, return_inverse=True)
    if uniq.size < 2:
        raise CriterionUndefinedError("silhouette needs at least two clusters")

    dist = squareform(pdist(x))
    onehot = np.eye(uniq.size)[inv]
    sums = dist @ onehot
    counts = onehot.sum(axis=0)

    rows = np.arange(x.shape[0])
    own = counts[inv]
    a = np.where(own > 1, sums[rows, inv] / np.maximum(own - 1, 1), 0.0)
    other = sums / counts
    other[rows, inv] = np.inf
    b = other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((own > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(s.mean())


def knee(ks, wcss) -> int:
    """k whose point lies farthest from the chord joining the curve's endpoints."""
    ks = np.asarray(ks, dtype=float)
    w = np.asarray(wcss, dtype=float)
    p0 = np.array([ks[0], w[0]])
    chord = np.array([ks[-1], w[-1]]) - p0
    length = np.hypot(*chord)
    if length == 0.0:
        return int(ks[0])
    rel = np.stack([ks, w], axis=1) - p0
    dist = np.abs(chord[0] * rel[:, 1] - chord[1] * rel[:, 0]) / length
    return int(ks[int(np.argmax(dist))])


def _k_scan(features, k_min, k_max, seed):
    fits = {k: kmeans_fit(features, k, seed) for k in range(k_min, k_max + 1)}
    sil = {k: silhouette(features, fit.labels) for k, fit in fits.items()}
    return fits, sil


def _combine(k_sil: int, k_elbow: int, cap: int) -> int:
    return min(cap, int(math.floor((k_sil + k_elbow) / 2 + 0.5)))


def select_k(features, k_min: int = 2, k_max: int = 8, cap: int = 4, seed: int = 0) -> int:
    return _select(features, k_min, k_max, cap, seed)[0]


def _select(features, k_min, k_max, cap, seed):
    if not 2 <= k_min <= k_max:
        raise ParameterError(f"need 2 <= k_min <= k_max, got {k_min}, {k_max}")
    fits, sil = _k_scan(features, k_min, k_max, seed)
    ks = sorted(fits)
    k_sil = max(ks, key=lambda k: (sil[k], -k))
    k_elbow = knee(ks, [fits[k].inertia for k in ks])
    return _combine(k_sil, k_elbow, cap), fits


@dataclass(frozen=True, eq=False)
class RegionPartition:
    k: int
    labels: np.ndarray

    def __post_init__(self):
        labels = np.array(self.labels, dtype=int).reshape(-1)
        if labels.size == 0 or labels.min() < 0 or labels.max() >= self.k:
            raise ParameterError(f"labels must lie in [0, {self.k})")
        sizes = np.bincount(labels, minlength=self.k)
        if np.any(sizes == 0):
            raise ParameterError("every region must be non-empty")
        labels.setflags(write=False)
        sizes.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "sizes", sizes)

    @classmethod
    def from_labels(cls, labels) -> "RegionPartition":
        """Compact arbitrary labels to 0..k-1 in order of first appearance."""
        labels = np.asarray(labels).reshape(-1)
        _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
        order = np.argsort(np.argsort(first))
        return cls(int(first.size), order[inv])

    @property
    def region_sizes(self) -> np.ndarray:
        return self.sizes

    def to_json(self) -> str:
        return json.dumps({"k": self.k, "labels": self.labels.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "RegionPartition":
        doc = json.loads(text)
        return cls(int(doc["k"]), doc["labels"])

    def __eq__(self, other):
        if not isinstance(other, RegionPartition):
            return NotImplemented
        return self.k == other.k and np.array_equal(self.labels, other.labels)

    __hash__ = None


def partition(features, seed: int = 0, k_min: int = 2, k_max: int = 8, cap: int = 4) -> RegionPartition:
    k, fits = _select(features, k_min, k_max, cap, seed)
    labels = fits[k].labels if k in fits else kmeans(features, k, seed)
    return RegionPartition.from_labels(labels)
