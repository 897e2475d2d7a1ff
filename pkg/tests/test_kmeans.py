import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from floorcluster.errors import KTooLarge
from floorcluster.kmeans import KmeansConfig, kmeans, lloyd, objective

from oracles import brute_force_optimum, exact_sse, set_partitions, subset_inits


def same_partition(a, b):
    return len(set(zip(a, b))) == len(set(a)) == len(set(b))


def test_partition_enumerator_counts():
    # Stirling numbers of the second kind
    assert len(list(set_partitions(6, 2))) == 31
    assert len(list(set_partitions(8, 3))) == 966
    assert len(list(set_partitions(4, 4))) == 1


def test_k_equals_distinct_points_saturates():
    pts = np.array([[-50.0, -60.0], [-70.0, -80.0], [-50.0, -60.0], [-90.0, -40.0]])
    res = kmeans(pts, KmeansConfig(k=3, seed=1))
    assert res.objective == 0
    assert sorted(map(tuple, res.centroids)) == sorted({tuple(p) for p in pts})


def test_single_cluster_is_the_mean():
    pts = np.array([[1.0, 2.0], [3.0, 8.0], [-4.0, 5.0], [0.0, 1.0]])
    res = kmeans(pts, KmeansConfig(k=1))
    mean = [sum(p[d] for p in pts) / 4 for d in range(2)]
    assert res.centroids[0] == pytest.approx(mean)
    total = sum((p[d] - mean[d]) ** 2 for p in pts for d in range(2))
    assert res.objective == pytest.approx(total, rel=1e-12)


def test_planted_blobs_match_exhaustive_optimum():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [20.0, 20.0], [21.0, 20.0], [20.0, 22.0]])
    best_sse, best_labels = brute_force_optimum(pts.tolist(), 2)
    res = kmeans(pts, KmeansConfig(k=2, seed=4))
    assert same_partition(res.assignment.tolist(), [0, 0, 0, 1, 1, 1])
    assert same_partition(res.assignment.tolist(), best_labels)
    assert exact_sse(pts.tolist(), res.assignment.tolist()) == best_sse
    assert res.objective == pytest.approx(float(best_sse), rel=1e-12)


def test_k_too_large():
    with pytest.raises(KTooLarge):
        kmeans(np.zeros((3, 2)), KmeansConfig(k=4))


@pytest.mark.parametrize("kw", [dict(k=0), dict(k=1, max_iters=0), dict(k=1, rel_tol=-1), dict(k=1, init="x"), dict(k=1, n_restarts=0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        KmeansConfig(**kw)


def test_deterministic_for_seed(small_campaign):
    cfg = KmeansConfig(k=12, seed=99)
    a = kmeans(small_campaign.dense, cfg)
    b = kmeans(small_campaign.dense, cfg)
    assert a.centroids.tobytes() == b.centroids.tobytes()
    assert np.array_equal(a.assignment, b.assignment)
    assert a.history == b.history


def test_objective_recomputable_and_clusters_nonempty(small_campaign):
    x = small_campaign.dense
    res = kmeans(x, KmeansConfig(k=20, seed=3, init="random"))
    assert np.bincount(res.assignment, minlength=20).min() >= 1
    manual = sum(float(((x[i] - res.centroids[c]) ** 2).sum()) for i, c in enumerate(res.assignment))
    assert res.objective == pytest.approx(manual, rel=1e-9)
    assert objective(x, res.centroids, res.assignment) == res.objective


def test_empty_cluster_repair():
    pts = np.array([[0.0], [1.0], [10.0], [11.0]])
    res = lloyd(pts, np.array([[0.5], [10.5], [1000.0]]))
    assert np.bincount(res.assignment, minlength=3).min() == 1
    assert res.objective == pytest.approx(0.5)


def test_monotone_history(small_campaign):
    for seed in range(5):
        res = kmeans(small_campaign.dense, KmeansConfig(k=15, seed=seed, rel_tol=0.0, init="random"))
        h = res.history
        assert all(b <= a * (1 + 1e-12) for a, b in zip(h, h[1:]))


def test_stopping_rules():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(300, 4))
    capped = kmeans(pts, KmeansConfig(k=10, max_iters=2, rel_tol=0.0, seed=1))
    assert capped.iters_run == 2
    loose = kmeans(pts, KmeansConfig(k=10, rel_tol=0.5, seed=1))
    h = loose.history
    assert len(h) == 1 or (h[-2] - h[-1]) < 0.5 * h[-2]


def test_restarts_keep_best():
    rng = np.random.default_rng(8)
    pts = rng.normal(size=(60, 2))
    res = kmeans(pts, KmeansConfig(k=5, seed=2, n_restarts=6))
    assert len(res.histories) == 6
    assert res.objective == min(h[-1] for h in res.histories)


def best_over_subset_inits(points, k):
    x = np.asarray(points, dtype=float)
    best = None
    for idx in subset_inits(len(x), k):
        res = kmeans(x, KmeansConfig(k=k, rel_tol=0.0), init_centroids=x[list(idx)])
        if best is None or res.objective < best.objective:
            best = res
    return best


@settings(max_examples=40, deadline=None)
@given(
    st.integers(2, 8).flatmap(
        lambda n: st.tuples(
            st.lists(st.lists(st.integers(-20, 20), min_size=2, max_size=2), min_size=n, max_size=n, unique_by=tuple),
            st.integers(1, min(3, n)),
        )
    )
)
def test_small_instance_optimality(case):
    points, k = case
    best_sse, _ = brute_force_optimum(points, k)
    res = best_over_subset_inits(points, k)
    assert exact_sse(points, res.assignment.tolist()) == best_sse
