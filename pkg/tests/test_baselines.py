import numpy as np
import pytest

from tabncd.baselines import (
    ProbeConfig,
    baseline_classifier_probe,
    kmeans,
    kmeans_plusplus,
    kmeans_report,
    representation_probe,
    train_known_classifier,
)
from tabncd.ssl import make_encoder


def _two_blobs(seed=0, n=50):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, 2)) * 0.3
    b = rng.normal(size=(n, 2)) * 0.3 + [10.0, 0.0]
    return np.vstack([a, b]), np.repeat([0, 1], n)


@pytest.mark.parametrize("seed", range(10))
def test_two_blobs_split_perfectly(seed):
    x, y = _two_blobs(seed)
    res = kmeans(x, 2, seed=seed, n_init=3)
    assert len(set(zip(res.labels, y))) == 2
    within = sum(((x[y == c] - x[y == c].mean(axis=0)) ** 2).sum() for c in (0, 1))
    assert res.inertia == pytest.approx(within, rel=1e-10)


def test_inertia_path_is_non_increasing():
    x = np.random.default_rng(0).normal(size=(400, 4))
    res = kmeans(x, 7, seed=1, n_init=1)
    assert np.all(np.diff(res.inertia_path) <= 1e-9)
    assert res.inertia == pytest.approx(res.inertia_path[-1])


def test_matches_sklearn_inertia():
    sk = pytest.importorskip("sklearn.cluster")
    x = np.random.default_rng(3).normal(size=(600, 5))
    ours = kmeans(x, 5, seed=0, n_init=10).inertia
    theirs = sk.KMeans(5, n_init=10, random_state=0).fit(x).inertia_
    assert abs(ours - theirs) / theirs < 0.02


def test_plusplus_picks_distinct_data_points():
    x = np.vstack([np.zeros((20, 2)), np.ones((20, 2)) * 5, np.ones((20, 2)) * [0, 9]])
    centers = kmeans_plusplus(x, 3, np.random.default_rng(0))
    assert len({tuple(c) for c in centers}) == 3
    assert all(any(np.array_equal(c, r) for r in x) for c in centers)


def test_duplicate_points_and_bad_k():
    x = np.ones((5, 2))
    res = kmeans(x, 3, seed=0, n_init=2)
    assert res.inertia == 0.0
    with pytest.raises(ValueError):
        kmeans(x, 0)
    with pytest.raises(ValueError):
        kmeans(x, 6)


def test_seeded_runs_are_reproducible():
    x = np.random.default_rng(0).normal(size=(200, 3))
    a, b = kmeans(x, 4, seed=9), kmeans(x, 4, seed=9)
    assert np.array_equal(a.labels, b.labels) and a.inertia == b.inertia


def test_baselines_on_blobs(blob_dataset):
    assert kmeans_report(blob_dataset, seed=0, n_init=3).acc == 1.0
    cfg = ProbeConfig(epochs=20, batch_size=64, lr=1e-2)
    _, _, train_acc = train_known_classifier(blob_dataset, cfg)
    assert train_acc == 1.0
    rep = baseline_classifier_probe(blob_dataset, cfg, n_init=3)
    assert rep.meta["method"] == "classifier-probe" and 0.0 < rep.acc <= 1.0


def test_representation_probe(blob_dataset):
    assert representation_probe(blob_dataset, "raw", n_init=3).acc == 1.0
    enc = make_encoder(blob_dataset.n_features, np.random.default_rng(0))
    rep = representation_probe(blob_dataset, "ssl", enc, n_init=3)
    assert rep.meta["method"] == "repr-probe:ssl"
    with pytest.raises(FileNotFoundError):
        representation_probe(blob_dataset, "joint")
    with pytest.raises(ValueError):
        representation_probe(blob_dataset, "pca")
