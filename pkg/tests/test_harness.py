import math

import numpy as np
import pytest

from gpnn import harness
from gpnn.config import ModelConfig
from gpnn.errors import ValidationError
from gpnn.graphs import Graph, SplitSet, generate_splits

from conftest import heterophilic_dataset


def separable_graph(n=12, seed=0):
    """Two classes, cleanly separable by the first feature."""
    rng = np.random.default_rng(seed)
    labels = np.array([0, 1] * (n // 2))
    feats = np.zeros((n, 3))
    feats[:, 0] = labels * 2.0 - 1.0
    feats[:, 1:] = rng.normal(scale=0.1, size=(n, 2))
    edges = [(i, (i + 1) % n) for i in range(n)]
    return Graph(feats, edges, labels)


def quick_cfg(**kw):
    base = dict(hidden=8, dropout=0.0, num_selected_m=2, epochs=120,
                patience=40, seed=1)
    base.update(kw)
    return ModelConfig(**base)


class TestEarlyStopper:
    def test_patience_counter_arithmetic(self):
        # val loss 1.0, 0.9, then 100 epochs stuck at 0.9 -> stop at 102
        stopper = harness.EarlyStopper(patience=100)
        stopped_at = None
        losses = [1.0, 0.9] + [0.9] * 150
        for epoch, loss in enumerate(losses, start=1):
            _, stop = stopper.update(epoch, loss, val_acc=0.5)
            if stop:
                stopped_at = epoch
                break
        assert stopped_at == 102
        assert stopper.best_epoch == 2

    def test_accuracy_improvement_resets_patience(self):
        stopper = harness.EarlyStopper(patience=2)
        stopper.update(1, 1.0, 0.5)
        stopper.update(2, 1.0, 0.5)       # bad 1
        _, stop = stopper.update(3, 1.0, 0.6)  # acc improves -> reset
        assert not stop
        stopper.update(4, 1.0, 0.6)
        _, stop = stopper.update(5, 1.0, 0.6)
        assert stop

    def test_selection_tie_break_prefers_higher_acc_then_earlier(self):
        stopper = harness.EarlyStopper(patience=10)
        stopper.update(1, 0.5, 0.6)
        new_sel, _ = stopper.update(2, 0.5, 0.7)   # same loss, better acc
        assert new_sel and stopper.best_epoch == 2
        new_sel, _ = stopper.update(3, 0.5, 0.7)   # full tie -> keep earlier
        assert not new_sel and stopper.best_epoch == 2


class TestTrainOneSplit:
    def test_separable_toy_reaches_perfect_accuracy(self):
        g = separable_graph()
        splits = generate_splits(g, (0.5, 0.25, 0.25), seed=7)
        cfg = quick_cfg(epochs=200)
        for model in ("gpnn", "mlp", "gcn"):
            result, _ = harness.train_one_split(g, splits[0], cfg, model)
            assert result.test_accuracy == 1.0, model
            assert len(result.train_curve) <= 200

    def test_deterministic_given_config(self):
        g = separable_graph(seed=3)
        splits = generate_splits(g, (0.5, 0.25, 0.25), seed=7)
        cfg = quick_cfg(dropout=0.5, epochs=40, seed=9)
        a, pa = harness.train_one_split(g, splits[0], cfg, "gpnn")
        b, pb = harness.train_one_split(g, splits[0], cfg, "gpnn")
        assert a.test_accuracy == b.test_accuracy
        assert a.best_epoch == b.best_epoch
        for ra, rb in zip(a.train_curve, b.train_curve):
            assert ra.loss == rb.loss and ra.val_loss == rb.val_loss
        for k in pa:
            assert pa[k].data.tobytes() == pb[k].data.tobytes()

    def test_best_epoch_is_val_loss_minimizer(self):
        g = separable_graph(seed=4)
        splits = generate_splits(g, (0.5, 0.25, 0.25), seed=7)
        result, _ = harness.train_one_split(g, splits[0], quick_cfg(), "gpnn")
        losses = [r.val_loss for r in result.train_curve]
        assert result.best_epoch <= len(losses)
        assert losses[result.best_epoch - 1] == min(losses)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergent_run_aborts_with_diagnostic(self):
        g = separable_graph(seed=5)
        splits = generate_splits(g, (0.5, 0.25, 0.25), seed=7)
        cfg = quick_cfg(learning_rate=1e150, epochs=30, weight_decay=0.0)
        result, params = harness.train_one_split(g, splits[0], cfg, "gpnn")
        assert result.aborted
        assert result.abort_reason
        assert params is None
        assert math.isnan(result.test_accuracy)

    def test_no_test_label_leakage(self):
        g = separable_graph(seed=6)
        splits = generate_splits(g, (0.5, 0.25, 0.25), seed=7)
        cfg = quick_cfg(epochs=60)
        result, params = harness.train_one_split(g, splits[0], cfg, "gpnn")

        permuted = g.labels.copy()
        permuted[splits[0].test] = (permuted[splits[0].test] + 1) % g.num_classes
        g2 = Graph(g.features, [tuple(e) for e in g.edges], permuted)
        result2, params2 = harness.train_one_split(g2, splits[0], cfg, "gpnn")

        for ra, rb in zip(result.train_curve, result2.train_curve):
            assert ra.loss == rb.loss
            assert ra.val_loss == rb.val_loss
        for k in params:
            assert params[k].data.tobytes() == params2[k].data.tobytes()

    @pytest.mark.parametrize("variant", [
        {"cell_type": "lstm_cell"},
        {"selection_mode": "soft"},
        {"pool": "mean"},
        {"sequence_order": "shuffle"},
        {"cell_type": "lstm_cell", "selection_mode": "soft", "pool": "mean"},
    ])
    def test_variant_training_paths(self, variant):
        g = separable_graph(seed=1)
        splits = generate_splits(g, (0.5, 0.25, 0.25), seed=7)
        cfg = quick_cfg(epochs=120, dropout=0.5, **variant)
        result, _ = harness.train_one_split(g, splits[0], cfg, "gpnn")
        assert not result.aborted
        assert result.test_accuracy == 1.0

    def test_epoch_log_file(self, tmp_path):
        g = separable_graph(seed=8)
        splits = generate_splits(g, (0.5, 0.25, 0.25), seed=7)
        cfg = quick_cfg(epochs=5, patience=5)
        log_path = tmp_path / "run.log"
        result, _ = harness.train_one_split(g, splits[0], cfg, "gpnn",
                                            log_path=str(log_path))
        lines = log_path.read_text().strip().split("\n")
        assert len(lines) == len(result.train_curve)
        import json
        first = json.loads(lines[0])
        assert set(first) == {"epoch", "loss", "val_loss", "val_acc"}


class TestProtocol:
    def test_identical_splits_give_zero_stdev(self):
        g = separable_graph(seed=9)
        base = generate_splits(g, (0.5, 0.25, 0.25), seed=7)[0]
        clones = [SplitSet(base.train, base.val, base.test, i) for i in range(10)]
        report = harness.run_protocol(g, clones, quick_cfg(epochs=40), "mlp",
                                      dataset="toy")
        assert report.stdev_accuracy == 0.0
        assert not report.incomplete

    def test_mean_and_stdev_recomputable(self):
        g = separable_graph(n=16, seed=10)
        splits = generate_splits(g, (0.5, 0.25, 0.25), seed=3)
        report = harness.run_protocol(g, splits, quick_cfg(epochs=30), "mlp",
                                      dataset="toy")
        accs = [r.test_accuracy for r in report.per_split]
        assert report.mean_accuracy == pytest.approx(np.mean(accs))
        assert report.stdev_accuracy == pytest.approx(np.std(accs, ddof=1))
        assert len(report.per_split) == 10

    def test_wrong_split_count_rejected(self):
        g = separable_graph(seed=11)
        splits = generate_splits(g, (0.5, 0.25, 0.25), seed=3)[:7]
        with pytest.raises(ValidationError):
            harness.run_protocol(g, splits, quick_cfg(), "mlp")

    def test_parallel_workers_match_sequential(self):
        g = separable_graph(n=16, seed=25)
        splits = generate_splits(g, (0.5, 0.25, 0.25), seed=3)
        cfg = quick_cfg(epochs=10, patience=10, dropout=0.5)
        seq = harness.run_protocol(g, splits, cfg, "mlp", dataset="toy")
        par = harness.run_protocol(g, splits, cfg, "mlp", dataset="toy",
                                   workers=2)
        assert seq.mean_accuracy == par.mean_accuracy
        assert seq.stdev_accuracy == par.stdev_accuracy
        for a, b in zip(seq.per_split, par.per_split):
            assert [r.loss for r in a.train_curve] == [r.loss for r in b.train_curve]


class TestGridSearch:
    def test_full_documented_grid_has_288_cells(self):
        cfgs = harness.expand_grid(ModelConfig())
        assert len(cfgs) == 3 * 2 * 3 * 4 * 4
        assert len({repr(c) for c in cfgs}) == 288  # all distinct

    def test_singleton_grid_matches_protocol(self):
        g = separable_graph(seed=12)
        splits = generate_splits(g, (0.5, 0.25, 0.25), seed=3)
        cfg = quick_cfg(epochs=30)
        grid = {"hidden": [8]}
        best_cfg, report = harness.grid_search(g, splits, cfg, "mlp", grid=grid,
                                               dataset="toy")
        assert best_cfg.hidden == 8
        direct = harness.run_protocol(g, splits, best_cfg, "mlp", dataset="toy")
        assert report.mean_accuracy == direct.mean_accuracy

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergent_config_is_skipped(self):
        g = separable_graph(seed=13)
        splits = generate_splits(g, (0.5, 0.25, 0.25), seed=3)
        cfg = quick_cfg(epochs=25, weight_decay=0.0)
        # 1e300 overflows the second layer's matmul to inf on epoch 1
        grid = {"learning_rate": [1e300, 0.01]}
        best_cfg, report = harness.grid_search(g, splits, cfg, "mlp", grid=grid,
                                               dataset="toy")
        assert best_cfg.learning_rate == 0.01
        assert not report.incomplete

    def test_budget_subsample_is_deterministic(self):
        g = separable_graph(seed=14)
        splits = generate_splits(g, (0.5, 0.25, 0.25), seed=3)
        cfg = quick_cfg(epochs=20)
        grid = {"hidden": [4, 8], "learning_rate": [0.01, 0.005]}
        a = harness.grid_search(g, splits, cfg, "mlp", grid=grid,
                                max_configs=2, subsample_seed=5, dataset="toy")
        b = harness.grid_search(g, splits, cfg, "mlp", grid=grid,
                                max_configs=2, subsample_seed=5, dataset="toy")
        assert a[0] == b[0]
        assert a[1].mean_accuracy == b[1].mean_accuracy


class TestRankedHomophily:
    def test_perfectly_homophilic_graph(self):
        rng = np.random.default_rng(15)
        # all same label: any selection agrees with the center
        g = Graph(rng.normal(size=(10, 4)),
                  [(i, j) for i in range(10) for j in range(i + 1, 10)
                   if (i + j) % 3 == 0],
                  np.zeros(10, dtype=int))
        cfg = quick_cfg()
        rng2 = np.random.default_rng(0)
        from gpnn.model import init_gpnn_params
        params = init_gpnn_params(g.num_features, g.num_classes, cfg, rng2)
        result = harness.ranked_homophily_analysis(g, params, cfg)
        gpnn_ratio, rand_ratio = result
        assert gpnn_ratio == 1.0
        assert rand_ratio == 1.0

    def test_isolated_nodes_are_skipped_and_counted(self):
        rng = np.random.default_rng(16)
        g = Graph(rng.normal(size=(5, 3)), [(0, 1), (1, 2)],
                  np.zeros(5, dtype=int))  # nodes 3, 4 isolated
        cfg = quick_cfg()
        from gpnn.model import init_gpnn_params
        params = init_gpnn_params(g.num_features, g.num_classes, cfg,
                                  np.random.default_rng(1))
        result = harness.ranked_homophily_analysis(g, params, cfg)
        assert result.skipped_gpnn == 2
        assert result.skipped_random == 2


class TestOversmoothingSweep:
    def test_single_reference_point_has_zero_decay(self):
        g = separable_graph(seed=17)
        splits = generate_splits(g, (0.5, 0.25, 0.25), seed=3)
        rows = harness.oversmoothing_sweep(g, splits, quick_cfg(epochs=25),
                                           [2], models=("gcn",), dataset="toy")
        assert len(rows) == 1
        assert rows[0].layers == 2
        assert rows[0].rel_decay == 0.0

    def test_sweep_rows_cover_models_and_depths(self):
        g = separable_graph(seed=18)
        splits = generate_splits(g, (0.5, 0.25, 0.25), seed=3)
        rows = harness.oversmoothing_sweep(g, splits, quick_cfg(epochs=15),
                                           [2, 3], models=("gcn", "gpnn"),
                                           dataset="toy")
        assert {(r.model, r.layers) for r in rows} == {
            ("gcn", 2), ("gcn", 3), ("gpnn", 2), ("gpnn", 3)}
        csv = harness.sweep_to_csv(rows)
        assert csv.startswith("model,layers,mean_acc,rel_decay\n")

    def test_bad_layer_counts_rejected(self):
        g = separable_graph(seed=19)
        splits = generate_splits(g, (0.5, 0.25, 0.25), seed=3)
        with pytest.raises(ValidationError):
            harness.oversmoothing_sweep(g, splits, quick_cfg(), [])


class TestHeterophilicAdvantage:
    """Mechanism checks on synthetic heterophilic data: ego-respecting
    models (MLP, the pointer model) must beat plain 1-hop mixing (GCN), and
    stacking must hurt the pointer model less than the GCN."""

    def test_pointer_model_beats_gcn(self):
        g = heterophilic_dataset(n=60, seed=20)
        splits = generate_splits(g, (0.5, 0.25, 0.25), seed=4)
        cfg = quick_cfg(epochs=150, patience=60, hidden=16)
        gpnn_accs, gcn_accs = [], []
        for split in splits[:3]:
            r1, _ = harness.train_one_split(g, split, cfg, "gpnn")
            r2, _ = harness.train_one_split(g, split, cfg, "gcn")
            gpnn_accs.append(r1.test_accuracy)
            gcn_accs.append(r2.test_accuracy)
        assert np.mean(gpnn_accs) > np.mean(gcn_accs)

    def test_depth_decay_smaller_for_pointer_model(self):
        g = heterophilic_dataset(n=100, seed=0)
        splits = generate_splits(g, (0.48, 0.32, 0.20), seed=4)
        cfg = quick_cfg(epochs=150, patience=50, hidden=16, num_selected_m=2)

        def mean_acc(kind, layers):
            accs = [harness.train_one_split(g, s, cfg.replace(layers=layers),
                                            kind)[0].test_accuracy
                    for s in splits[:3]]
            return float(np.mean(accs))

        decay = {}
        for kind in ("gcn", "gpnn"):
            shallow = mean_acc(kind, 2)
            deep = mean_acc(kind, 5)
            decay[kind] = (shallow - deep) / shallow
        assert decay["gpnn"] < decay["gcn"]
        assert decay["gcn"] > 0.0
