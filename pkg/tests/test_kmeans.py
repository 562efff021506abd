import numpy as np
import pytest

from neurcam.config import KmeansConfig
from neurcam.errors import ConfigError
from neurcam.kmeans import inertia, kmeanspp_seed, mbk_fit, nearest_centroid
from neurcam.synth import make_blobs


def test_k_distinct_points_are_their_own_centroids():
    x = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    centers, val = mbk_fit(x, KmeansConfig(k=3, batch_size=3, n_init=2, max_epochs=50, seed=0))
    assert val == pytest.approx(0.0, abs=1e-12)
    matched = {tuple(np.round(c, 9)) for c in centers}
    assert matched == {tuple(p) for p in x}


def test_blob_centroids_near_true_means():
    x, labels = make_blobs(1500, 3, 2, separation=8.0, seed=2)
    centers, _ = mbk_fit(x, KmeansConfig(k=2, batch_size=256, n_init=3, max_epochs=400, seed=1))
    true_means = np.stack([x[labels == c].mean(axis=0) for c in range(2)])
    # match each found center to its closest true mean
    for c in centers:
        assert np.min(np.linalg.norm(true_means - c, axis=1)) < 0.2


def test_mbk_deterministic():
    x, _ = make_blobs(400, 4, 3, separation=6.0, seed=3)
    cfg = KmeansConfig(k=3, batch_size=128, n_init=2, max_epochs=100, seed=7)
    a, ia = mbk_fit(x, cfg)
    b, ib = mbk_fit(x, cfg)
    assert np.array_equal(a, b)
    assert ia == ib


def test_mbk_no_worse_than_its_seeds():
    # the fitter keeps the k-means++ seeds whenever they score better
    for seed in range(5):
        x, _ = make_blobs(300, 3, 3, separation=4.0, seed=seed)
        cfg = KmeansConfig(k=3, batch_size=64, n_init=1, max_epochs=60, seed=seed)
        rng = np.random.default_rng(np.random.default_rng(seed).integers(2**63))
        # replicate the internal seeding path: first init draws the pool first
        _, final_inertia = mbk_fit(x, cfg)
        master = np.random.default_rng(cfg.seed)
        rng = np.random.default_rng(master.integers(2**63))
        pool = rng.choice(x.shape[0], size=cfg.init_pool_size(x.shape[0]), replace=False)
        seeds = kmeanspp_seed(x[pool], cfg.k, rng)
        assert final_inertia <= inertia(x, seeds) + 1e-9


def test_mbk_requires_enough_points():
    with pytest.raises(ConfigError):
        mbk_fit(np.zeros((2, 3)), KmeansConfig(k=5))


def test_inertia_zero_on_centroids():
    z = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert inertia(z, z) == 0.0


def test_inertia_hand_sum():
    x = np.array([[1.0], [3.0]])
    z = np.array([[0.0], [float(3 - np.sqrt(3))]])
    # nearest distances squared: point 1 -> (3-sqrt(3)) center? compute directly
    val = inertia(x, z)
    _, d2 = nearest_centroid(x, z)
    assert val == pytest.approx(float(d2.sum()), abs=1e-12)


def test_inertia_normalized_variant():
    x = np.array([[0.0], [0.0]])
    z = np.array([[1.0], [-np.sqrt(3.0)]])
    # dists squared: min(1, 3) = 1 for both points -> total 2, normalized 1
    assert inertia(x, z) == pytest.approx(2.0)
    assert inertia(x, z, normalized=True) == pytest.approx(1.0)


def test_inertia_matches_bruteforce_nearest():
    rng = np.random.default_rng(4)
    x = rng.normal(0.0, 1.0, (40, 3))
    z = rng.normal(0.0, 1.0, (5, 3))
    brute = 0.0
    for p in x:
        brute += min(np.sum((p - c) ** 2) for c in z)
    assert inertia(x, z) == pytest.approx(brute, rel=1e-12)


def test_inertia_with_explicit_assignments():
    x = np.array([[0.0], [2.0]])
    z = np.array([[0.0], [1.0]])
    assert inertia(x, z, assignments=np.array([1, 1])) == pytest.approx(1.0 + 1.0)


def test_nearest_centroid_tie_breaks_low_index():
    x = np.array([[0.0]])
    z = np.array([[1.0], [-1.0]])
    labels, _ = nearest_centroid(x, z)
    assert labels[0] == 0
