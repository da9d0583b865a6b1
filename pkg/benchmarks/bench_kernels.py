"""Compare the compiled kernel core against the numpy fallback.

Times the two backend kernels on synthetic graphs plus one full
train-epoch under each backend. Run from the repo root:

    python benchmarks/bench_kernels.py [--nodes 4000] [--avg-degree 40]
"""

import argparse
import sys
import time

import numpy as np

from gpnn import _accel
from gpnn import autodiff as ad
from gpnn.config import ModelConfig
from gpnn.graphs import Graph, generate_splits
from gpnn.harness import forward, prepare_inputs, init_params


def random_graph(n, avg_degree, seed=0):
    rng = np.random.default_rng(seed)
    target = n * avg_degree // 2
    edges = set()
    while len(edges) < target:
        u, v = rng.integers(0, n, 2)
        if u != v:
            edges.add((min(u, v), max(u, v)))
    feats = rng.normal(size=(n, 64))
    labels = rng.integers(0, 5, n)
    return Graph(feats, edges, labels)


def timeit(fn, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_bfs(g, k, L):
    adj = g.adjacency
    indptr = adj.indptr.astype(np.int64)
    idx = adj.indices.astype(np.int64)
    out = {}
    for name in _accel.available_backends():
        impl = _accel._BACKENDS[name]
        out[name] = timeit(lambda: impl.bfs_sequences(indptr, idx, k, L))
    return out


def bench_scatter(n_rows, n_idx, d, seed=0):
    rng = np.random.default_rng(seed)
    rows = rng.integers(0, n_rows, n_idx).astype(np.int64)
    vals = rng.normal(size=(n_idx, d))
    out = {}
    for name in _accel.available_backends():
        impl = _accel._BACKENDS[name]
        table = np.zeros((n_rows, d))
        out[name] = timeit(lambda: impl.scatter_add_rows(table, rows, vals))
    return out


def bench_epoch(g, cfg):
    """One forward+backward+eval pass, per backend (gather backward is the
    only backend-sensitive op in the training loop)."""
    splits = generate_splits(g, (0.48, 0.32, 0.2), seed=0)
    out = {}
    previous = _accel.backend_name()
    for name in _accel.available_backends():
        _accel.use_backend(name)
        norm, batch = prepare_inputs(g, cfg)
        rng = np.random.default_rng(cfg.seed)
        params = init_params(g, cfg, "gpnn", rng)
        x = ad.constant(g.features)

        def one_epoch():
            with ad.Tape() as tape:
                logits = forward("gpnn", x, norm, batch, params, cfg,
                                 training=True, rng=rng)
                loss = ad.cross_entropy(logits, g.labels, splits[0].train)
                tape.backward(loss, leaves=params.values())

        checks = ad.set_finite_checks(False)
        try:
            out[name] = timeit(one_epoch, repeat=2)
        finally:
            ad.set_finite_checks(checks)
    _accel.use_backend(previous)
    return out


def row(label, times):
    py = times.get("python", float("nan"))
    cy = times.get("cython")
    if cy is None:
        return f"{label:<28} python {py * 1e3:9.2f} ms   (compiled core not built)"
    return (f"{label:<28} python {py * 1e3:9.2f} ms   cython {cy * 1e3:9.2f} ms"
            f"   speedup {py / cy:6.1f}x")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--nodes", type=int, default=4000)
    ap.add_argument("--avg-degree", type=int, default=40)
    args = ap.parse_args(argv)

    if "cython" not in _accel.available_backends():
        print("note: compiled core not built; run "
              "`python setup.py build_ext --inplace` to compare backends\n")

    g = random_graph(args.nodes, args.avg_degree)
    print(f"graph: N={g.num_nodes} |E|={g.num_edges}\n")
    print(row("bfs_sequences k=2 L=16", bench_bfs(g, 2, 16)))
    print(row("bfs_sequences k=3 L=64", bench_bfs(g, 3, 64)))
    print(row("scatter_add_rows 64k x 64",
              bench_scatter(args.nodes, 64_000, 64)))
    cfg = ModelConfig(hidden=32, dropout=0.0, num_selected_m=4, epochs=1)
    print(row("train epoch (N=%d)" % g.num_nodes, bench_epoch(g, cfg)))
    return 0


if __name__ == "__main__":
    sys.exit(main())
