import os

import numpy as np
import pytest

from gpnn.config import ModelConfig
from gpnn.graphs import Graph, generate_splits

# Converted benchmark datasets (edges.txt/features.txt/splits.json per
# dataset directory). Tests that need them skip when the root is absent.
DATA_ROOT = os.environ.get(
    "GPNN_DATA_ROOT", os.path.join(os.path.dirname(__file__), "..", "data")
)


def dataset_dir(name):
    path = os.path.join(DATA_ROOT, name)
    for fname in ("edges.txt", "features.txt", "splits.json"):
        if not os.path.exists(os.path.join(path, fname)):
            pytest.skip(
                f"dataset {name!r} not available under {DATA_ROOT} "
                "(see README: obtaining the benchmark datasets)"
            )
    return path


def path_graph(n, labels=None, num_feats=3, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.zeros(n, dtype=int) if labels is None else np.asarray(labels)
    feats = rng.normal(size=(n, num_feats))
    return Graph(feats, [(i, i + 1) for i in range(n - 1)], labels)


def star_graph(leaves, seed=0):
    rng = np.random.default_rng(seed)
    feats = rng.normal(size=(leaves + 1, 2))
    return Graph(feats, [(0, i) for i in range(1, leaves + 1)],
                 np.zeros(leaves + 1, dtype=int))


def random_graph(n, n_edges, num_classes=3, num_feats=4, seed=0,
                 allow_isolated=True):
    rng = np.random.default_rng(seed)
    edges = set()
    attempts = 0
    while len(edges) < n_edges and attempts < 50 * n_edges:
        u, v = rng.integers(0, n, 2)
        attempts += 1
        if u != v:
            edges.add((min(int(u), int(v)), max(int(u), int(v))))
    if not allow_isolated:
        present = {x for e in edges for x in e}
        for v in range(n):
            if v not in present:
                u = (v + 1) % n
                edges.add((min(u, v), max(u, v)))
    feats = rng.normal(size=(n, num_feats))
    labels = rng.integers(0, num_classes, n)
    return Graph(feats, edges, labels)


def heterophilic_dataset(n=100, num_classes=5, degree=8, noise=0.4,
                         p_same=0.15, seed=0):
    """Synthetic heterophilic benchmark: features carry the class signal,
    edges connect mostly across classes (H(G) ~= p_same), so 1-hop
    aggregation mixes in wrong-class noise while ego-respecting models
    stay accurate."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % num_classes
    rng.shuffle(labels)
    feats = np.zeros((n, num_classes + 3))
    feats[np.arange(n), labels] = 1.0
    feats += rng.normal(scale=noise, size=feats.shape)
    edges = set()
    for v in range(n):
        for _ in range(degree // 2):
            if rng.random() < p_same:
                pool = np.flatnonzero(labels == labels[v])
                pool = pool[pool != v]
            else:
                pool = np.flatnonzero(labels != labels[v])
            u = int(rng.choice(pool))
            edges.add((min(v, u), max(v, u)))
    return Graph(feats, edges, labels)


@pytest.fixture
def toy_graph():
    """6 nodes, mixed labels, connected."""
    rng = np.random.default_rng(1)
    return Graph(
        rng.normal(size=(6, 4)),
        [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5), (1, 4)],
        [0, 1, 0, 1, 0, 1],
    )


@pytest.fixture
def small_cfg():
    return ModelConfig(hidden=8, dropout=0.0, num_selected_m=3, epochs=50,
                       patience=20, seed=0)


@pytest.fixture
def toy_splits():
    def make(g, seed=7):
        return generate_splits(g, (0.48, 0.32, 0.20), seed=seed)
    return make
