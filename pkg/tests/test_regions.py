import math

import numpy as np
import pytest
from sklearn.metrics import adjusted_rand_score

from searchtta import CriterionUndefinedError, DegenerateInputError, ParameterError
from searchtta.grid import FeatureField
from searchtta.priors import ScenarioParams, scenario_regions, synth_scenario
from searchtta.regions import (
    RegionPartition,
    _plusplus,
    kmeans,
    kmeans_fit,
    knee,
    lloyd,
    partition,
    select_k,
    silhouette,
)


def brute_silhouette(points, labels):
    """O(N^2) textbook silhouette with explicit loops."""
    points = [tuple(p) for p in points]
    labels = list(labels)
    clusters = sorted(set(labels))
    total = 0.0
    for i, p in enumerate(points):
        own = [j for j in range(len(points)) if labels[j] == labels[i] and j != i]
        if not own:
            continue
        a = sum(math.dist(p, points[j]) for j in own) / len(own)
        b = min(
            sum(math.dist(p, points[j]) for j in range(len(points)) if labels[j] == c)
            / sum(1 for lab in labels if lab == c)
            for c in clusters
            if c != labels[i]
        )
        if max(a, b) > 0:
            total += (b - a) / max(a, b)
    return total / len(points)


def gaussian_blobs(seed, per=20, sigma=0.05, side=3.0):
    rng = np.random.default_rng(seed)
    centers = np.array([[0.0, 0.0], [side, 0.0], [side / 2, side * math.sqrt(3) / 2]])
    pts = np.vstack([c + sigma * rng.standard_normal((per, 2)) for c in centers])
    return pts, np.repeat(np.arange(3), per)


def test_kmeans_k1_all_zero():
    pts = np.random.default_rng(0).random((30, 3))
    assert np.all(kmeans(pts, 1, seed=0) == 0)


def test_kmeans_separates_two_groups():
    pts = np.vstack([np.zeros((10, 4)), np.full((10, 4), 10.0)])
    labels = kmeans(pts, 2, seed=5)
    assert len(set(labels[:10])) == 1 and len(set(labels[10:])) == 1
    assert labels[0] != labels[10]


def test_kmeans_degenerate():
    with pytest.raises(DegenerateInputError):
        kmeans(np.ones((20, 3)), 2, seed=0)
    with pytest.raises(ParameterError):
        kmeans(np.random.default_rng(0).random((5, 2)), 6)


@pytest.mark.parametrize("seed", range(50))
def test_lloyd_wcss_never_increases(seed):
    rng = np.random.default_rng(seed)
    pts = rng.random((80, 3))
    run = lloyd(pts, _plusplus(pts, 5, rng))
    assert all(b <= a + 1e-12 for a, b in zip(run.history, run.history[1:]))
    # brute-force WCSS of the reported labels
    wcss = sum(np.sum((pts[run.labels == j] - pts[run.labels == j].mean(0)) ** 2) for j in set(run.labels))
    assert run.inertia == pytest.approx(wcss, rel=1e-9)


def test_lloyd_reseeds_empty_cluster():
    pts = np.array([[0.0], [0.1], [5.0], [5.1]])
    # second centroid starts far from every point and captures nothing
    run = lloyd(pts, np.array([[0.0], [100.0]]))
    assert sorted(np.bincount(run.labels, minlength=2)) == [2, 2]


def test_kmeans_deterministic_in_seed():
    pts = np.random.default_rng(1).random((100, 4))
    assert np.array_equal(kmeans(pts, 4, seed=9), kmeans(pts, 4, seed=9))


@pytest.mark.parametrize("scale", [0.5, 2.0, 8.0, 3.7, 1e3])
def test_kmeans_scale_invariant(scale):
    pts, _ = gaussian_blobs(4)
    assert np.array_equal(kmeans(pts, 3, seed=2), kmeans(pts * scale, 3, seed=2))


@pytest.mark.parametrize("seed", range(10))
def test_silhouette_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(50, 3))
    labels = rng.integers(0, 4, 50)
    labels[0] = 3  # keep some cluster sizes small; singletons allowed
    assert abs(silhouette(pts, labels) - brute_silhouette(pts, labels)) <= 1e-12


def test_silhouette_singleton_counts_zero():
    pts = np.array([[0.0], [0.1], [0.2], [9.0]])
    labels = [0, 0, 0, 1]
    assert silhouette(pts, labels) == pytest.approx(brute_silhouette(pts, labels), abs=1e-15)


def test_silhouette_tight_far_clusters():
    rng = np.random.default_rng(0)
    pts = np.vstack([rng.normal(0, 0.01, (5, 2)), rng.normal(10, 0.01, (5, 2))])
    labels = [0] * 5 + [1] * 5
    brute = brute_silhouette(pts, labels)
    assert brute > 0.9
    assert silhouette(pts, labels) == pytest.approx(brute, abs=1e-12)


def test_silhouette_identical_points():
    assert silhouette(np.ones((10, 2)), [0] * 5 + [1] * 5) == 0.0


def test_silhouette_random_uniform_near_zero():
    scores = []
    for seed in range(20):
        pts = np.random.default_rng(seed).random((60, 2))
        scores.append(silhouette(pts, np.random.default_rng(seed + 100).integers(0, 2, 60)))
    assert max(abs(s) for s in scores) < 0.3


def test_silhouette_needs_two_clusters():
    with pytest.raises(CriterionUndefinedError):
        silhouette(np.random.default_rng(0).random((5, 2)), [0] * 5)


def test_knee_on_textbook_curve():
    # chord from (1, 10) to (5, 0); distances peak at k=2
    assert knee([1, 2, 3, 4, 5], [10, 3, 2, 1, 0]) == 2
    assert knee([2, 3, 4], [5, 5, 5]) == 2


@pytest.mark.parametrize(
    "k_sil, k_elbow, expected",
    [(2, 2, 2), (6, 6, 4), (2, 3, 3), (3, 4, 4), (2, 5, 4), (3, 3, 3)],
)
def test_select_k_combination_rule(monkeypatch, k_sil, k_elbow, expected):
    import searchtta.regions as regions

    class Fit:
        def __init__(self, k):
            self.inertia = 0.0
            self.labels = np.zeros(1)

    monkeypatch.setattr(
        regions,
        "_k_scan",
        lambda f, lo, hi, seed: ({k: Fit(k) for k in range(lo, hi + 1)}, {k: float(k == k_sil) for k in range(lo, hi + 1)}),
    )
    monkeypatch.setattr(regions, "knee", lambda ks, w: k_elbow)
    assert select_k(np.zeros((4, 1))) == expected


@pytest.mark.parametrize("seed", range(10))
def test_select_k_three_blobs(seed):
    pts, _ = gaussian_blobs(seed)
    assert select_k(pts, seed=seed) == 3


@pytest.mark.parametrize("seed", range(5))
def test_partition_recovers_synthetic_regions(seed):
    params = ScenarioParams(num_regions=3, seed=seed)
    _, _, features = synth_scenario(params)
    truth, _ = scenario_regions(params)
    part = partition(features, seed=seed)
    assert part.k == 3
    assert adjusted_rand_score(truth, part.labels) > 0.95
    assert part.region_sizes.sum() == 24 * 24


def test_partition_deterministic():
    _, _, features = synth_scenario(ScenarioParams(num_regions=4, seed=1))
    assert partition(features, seed=3) == partition(features, seed=3)


def test_partition_constant_features():
    with pytest.raises(DegenerateInputError):
        partition(FeatureField(4, np.ones((16, 3))))


def test_region_partition_json_round_trip():
    part = RegionPartition.from_labels([5, 5, 2, 7, 2, 5])
    assert part.k == 3 and part.labels.tolist() == [0, 0, 1, 2, 1, 0]
    assert RegionPartition.from_json(part.to_json()) == part
    assert part.region_sizes.tolist() == [3, 2, 1]


def test_region_partition_rejects_empty_region():
    with pytest.raises(ParameterError):
        RegionPartition(3, [0, 0, 2])


def test_kmeans_fit_reports_best_of_restarts():
    pts = np.random.default_rng(3).random((120, 2))
    single = kmeans_fit(pts, 6, seed=0, n_init=1)
    multi = kmeans_fit(pts, 6, seed=0, n_init=10)
    assert multi.inertia <= single.inertia
