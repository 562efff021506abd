import numpy as np
import pytest

from neurcam.config import KmeansConfig, TrainConfig
from neurcam.data import DualDataset, standardize
from neurcam.model import init_model
from neurcam.synth import make_blobs


def tiny_config(k=3, c=4, p=2, d=6, **kw):
    """Small network so finite-difference sweeps stay fast."""
    defaults = dict(
        k=k, c=c, p=p, d=d, b=8, hidden_dim=16, m=1.05, gamma=1.0,
        warmup_epochs=2, temper_epochs=2, total_epochs=8,
        kmeans=KmeansConfig(k=k, seed=0, max_epochs=50, batch_size=64),
    )
    defaults.update(kw)
    return TrainConfig(**defaults)


def random_model(seed=0, **cfg_kw):
    cfg = tiny_config(**cfg_kw)
    rng = np.random.default_rng(seed)
    centroids = rng.normal(0.0, 1.0, (cfg.k, cfg.d))
    return init_model(cfg, seed, centroids), cfg


@pytest.fixture
def blob_dataset():
    x, labels = make_blobs(400, 6, 3, separation=6.0, seed=5)
    xs, _ = standardize(x)
    return DualDataset(xs, xs, [f"f{i}" for i in range(6)], labels)


@pytest.fixture
def blob_dataset_2():
    x, labels = make_blobs(240, 4, 2, separation=7.0, seed=9)
    xs, _ = standardize(x)
    return DualDataset(xs, xs, [f"f{i}" for i in range(4)], labels)
