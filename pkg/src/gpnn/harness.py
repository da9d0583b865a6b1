"""Training loop, 10-split evaluation protocol, grid search, and the two
analyses (ranked-neighbor homophily, over-smoothing depth sweep).

All randomness (parameter init, dropout, sequence shuffling, the random
1-hop baseline) derives from the config seed, so equal configs give
bit-identical runs. Splits and grid cells are independent; the protocol
runs them sequentially and aggregates at the end.
"""

import itertools
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import model as M
from .config import SEARCH_GRID, ModelConfig
from .errors import DivergenceError, NumericError, ValidationError
from .graphs import normalize_adjacency
from .sampling import sample_sequences

log = logging.getLogger(__name__)


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    val_loss: float
    val_acc: float


@dataclass
class RunResult:
    split_id: int
    best_epoch: int
    train_curve: list
    test_accuracy: float
    config: ModelConfig
    wall_time_s: float
    val_accuracy_at_best: float = float("nan")
    aborted: bool = False
    abort_reason: str = ""


@dataclass
class AggregateReport:
    dataset: str
    model: str
    mean_accuracy: float
    stdev_accuracy: float
    per_split: list
    incomplete: bool = False


@dataclass
class SweepRow:
    model: str
    layers: int
    mean_acc: float
    rel_decay: float


@dataclass
class RankedHomophily:
    gpnn_ratio: float
    random_1hop_ratio: float
    skipped_gpnn: int = 0
    skipped_random: int = 0

    def __iter__(self):
        return iter((self.gpnn_ratio, self.random_1hop_ratio))


class EarlyStopper:
    """Patience counter over val loss AND val accuracy: it resets when
    either improves. The selected checkpoint minimizes val loss, breaking
    ties by higher val accuracy, then by earlier epoch."""

    def __init__(self, patience):
        self.patience = patience
        self.best_loss = math.inf
        self.best_acc = -math.inf
        self.sel_loss = math.inf
        self.sel_acc = -math.inf
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, epoch, val_loss, val_acc):
        """Returns (is_new_selection, should_stop)."""
        improved = val_loss < self.best_loss or val_acc > self.best_acc
        self.best_loss = min(self.best_loss, val_loss)
        self.best_acc = max(self.best_acc, val_acc)
        self.bad_epochs = 0 if improved else self.bad_epochs + 1
        new_selection = val_loss < self.sel_loss or (
            val_loss == self.sel_loss and val_acc > self.sel_acc
        )
        if new_selection:
            self.sel_loss = val_loss
            self.sel_acc = val_acc
            self.best_epoch = epoch
        return new_selection, self.bad_epochs >= self.patience


def _effective_layers(cfg, model_kind):
    # the GCN/MLP baselines default to the standard 2 layers
    if model_kind == "gcn":
        return cfg.layers if cfg.layers > 1 else 2
    return cfg.layers


def init_params(g, cfg, model_kind, rng):
    if model_kind == "gpnn":
        if cfg.layers > 1:
            return M.init_stacked_gpnn_params(g.num_features, g.num_classes, cfg,
                                              rng, cfg.layers)
        return M.init_gpnn_params(g.num_features, g.num_classes, cfg, rng)
    if model_kind == "mlp":
        return M.init_mlp_params(g.num_features, g.num_classes, cfg, rng)
    if model_kind == "gcn":
        return M.init_gcn_params(g.num_features, g.num_classes, cfg, rng,
                                 layers=_effective_layers(cfg, "gcn"))
    raise ValidationError(f"unknown model kind {model_kind!r}")


def forward(model_kind, x, norm, batch, params, cfg, training=False, rng=None):
    if model_kind == "gpnn":
        if isinstance(params, list):
            return M.stack_gpnn_layers(x, norm.matrix, batch, params, cfg,
                                       training, rng)
        return M.gpnn_forward(x, norm.matrix, batch, params, cfg, training, rng)
    if model_kind == "mlp":
        return M.baseline_mlp_forward(x, params, cfg, training, rng)
    if model_kind == "gcn":
        return M.baseline_gcn_forward(x, norm.matrix, params, cfg, training, rng,
                                      layers=_effective_layers(cfg, "gcn"))
    raise ValidationError(f"unknown model kind {model_kind!r}")


def _flat_params(params):
    return M.flatten_stacked_params(params) if isinstance(params, list) else params


def _clone(params):
    if isinstance(params, list):
        return [ad.clone_params(p) for p in params]
    return ad.clone_params(params)


def prepare_inputs(g, cfg):
    """Normalized adjacency plus the fixed node sequences for a run."""
    norm = normalize_adjacency(g)
    batch = sample_sequences(g, cfg.depth_k, cfg.max_len_L,
                             order=cfg.sequence_order, seed=cfg.seed)
    return norm, batch


def train_one_split(g, split, cfg, model_kind="gpnn", norm=None, batch=None,
                    log_path=None, compute_test=True):
    """Train on one split with early stopping; returns a RunResult with the
    test accuracy of the restored best checkpoint.

    The loss is computed strictly over the train indices; validation drives
    early stopping; test labels are never read during training.
    """
    cfg.validate()
    started = time.perf_counter()
    if norm is None or batch is None:
        norm, batch = prepare_inputs(g, cfg)
    rng = np.random.default_rng(cfg.seed)
    params = init_params(g, cfg, model_kind, rng)
    flat = _flat_params(params)
    state = ad.AdamState(flat)
    x = ad.constant(g.features)
    stopper = EarlyStopper(cfg.patience)
    curve = []
    best_params = _clone(params)
    log_fh = open(log_path, "a", encoding="utf-8") if log_path else None

    checks_were_on = ad.set_finite_checks(True)
    try:
        for epoch in range(1, cfg.epochs + 1):
            try:
                with ad.Tape() as tape:
                    logits = forward(model_kind, x, norm, batch, params, cfg,
                                     training=True, rng=rng)
                    loss = ad.cross_entropy(logits, g.labels, split.train)
                    tape.backward(loss, leaves=flat.values())
                train_loss = loss.item()
                if not math.isfinite(train_loss):
                    raise DivergenceError("non-finite training loss")
                grads = {name: p.grad for name, p in flat.items()}
                ad.adam_step(flat, grads, state, cfg.learning_rate,
                             weight_decay=cfg.weight_decay)
                eval_logits = forward(model_kind, x, norm, batch, params, cfg,
                                      training=False)
                val_loss = ad.cross_entropy(eval_logits, g.labels,
                                            split.val).item()
            except NumericError as exc:
                return _aborted_result(split, cfg, curve, started,
                                       f"epoch {epoch}: {exc}")
            if not math.isfinite(val_loss):
                return _aborted_result(split, cfg, curve, started,
                                       f"epoch {epoch}: non-finite validation loss")
            val_acc = M.accuracy(eval_logits, g.labels, split.val)
            curve.append(EpochRecord(epoch, train_loss, val_loss, val_acc))
            if log_fh:
                log_fh.write(json.dumps({
                    "epoch": epoch, "loss": train_loss,
                    "val_loss": val_loss, "val_acc": val_acc,
                }) + "\n")

            new_selection, should_stop = stopper.update(epoch, val_loss, val_acc)
            if new_selection:
                best_params = _clone(params)
            if should_stop:
                break
            if epoch == 1:
                # first epoch ran with per-kernel finite checks; afterwards
                # the per-epoch loss check catches divergence more cheaply
                ad.set_finite_checks(False)
    finally:
        ad.set_finite_checks(checks_were_on)
        if log_fh:
            log_fh.close()

    test_acc = float("nan")
    if compute_test:
        final_logits = forward(model_kind, x, norm, batch, best_params, cfg,
                               training=False)
        test_acc = M.accuracy(final_logits, g.labels, split.test)
    sel = next(r for r in curve if r.epoch == stopper.best_epoch)
    return RunResult(
        split_id=split.split_id,
        best_epoch=stopper.best_epoch,
        train_curve=curve,
        test_accuracy=test_acc,
        config=cfg,
        wall_time_s=time.perf_counter() - started,
        val_accuracy_at_best=sel.val_acc,
    ), best_params


def _aborted_result(split, cfg, curve, started, reason):
    log.warning("run aborted (split %d): %s", split.split_id, reason)
    return RunResult(
        split_id=split.split_id,
        best_epoch=0,
        train_curve=curve,
        test_accuracy=float("nan"),
        config=cfg,
        wall_time_s=time.perf_counter() - started,
        aborted=True,
        abort_reason=reason,
    ), None


def _run_splits(g, splits, cfg, model_kind, norm, batch, compute_test,
                log_dir, workers):
    """Per-split runs, optionally fanned out over worker processes. Runs
    are fully independent (each owns its params/tape), so the parallel
    results are identical to the sequential ones."""

    def log_path(split):
        return None if log_dir is None else f"{log_dir}/run_split{split.split_id}.log"

    if workers > 1 and len(splits) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(train_one_split, g, split, cfg, model_kind,
                            norm=norm, batch=batch, log_path=log_path(split),
                            compute_test=compute_test)
                for split in splits
            ]
            return [f.result()[0] for f in futures]
    return [
        train_one_split(g, split, cfg, model_kind, norm=norm, batch=batch,
                        log_path=log_path(split), compute_test=compute_test)[0]
        for split in splits
    ]


def run_protocol(g, splits, cfg, model_kind="gpnn", dataset="dataset",
                 compute_test=True, log_dir=None, workers=1):
    """Ten independent runs, one per split; mean and sample stdev of the
    test accuracies."""
    if len(splits) != 10:
        raise ValidationError(f"protocol needs exactly 10 splits, got {len(splits)}")
    norm, batch = prepare_inputs(g, cfg)
    results = _run_splits(g, splits, cfg, model_kind, norm, batch,
                          compute_test, log_dir, workers)
    return aggregate(results, dataset, model_kind)


def aggregate(results, dataset, model_kind):
    completed = [r.test_accuracy for r in results if not r.aborted]
    mean = float(np.mean(completed)) if completed else float("nan")
    stdev = float(np.std(completed, ddof=1)) if len(completed) > 1 else 0.0
    return AggregateReport(
        dataset=dataset,
        model=model_kind,
        mean_accuracy=mean,
        stdev_accuracy=stdev,
        per_split=results,
        incomplete=any(r.aborted for r in results),
    )


def expand_grid(base_cfg, grid=None):
    """All configs in the (documented) search space, in deterministic order."""
    grid = dict(SEARCH_GRID) if grid is None else grid
    keys = sorted(grid)
    configs = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        configs.append(base_cfg.replace(**dict(zip(keys, combo))))
    return configs


def grid_search(g, splits, base_cfg, model_kind="gpnn", grid=None,
                max_configs=None, subsample_seed=0, dataset="dataset",
                workers=1):
    """Pick the config maximizing mean validation accuracy across splits.

    Test accuracy is evaluated only for the winner. `max_configs` caps the
    budget with a seeded random subsample of the grid.
    """
    configs = expand_grid(base_cfg, grid)
    if max_configs is not None and max_configs < len(configs):
        rng = np.random.default_rng(subsample_seed)
        picked = rng.choice(len(configs), size=max_configs, replace=False)
        configs = [configs[i] for i in sorted(picked)]
    best_cfg, best_score = None, -math.inf
    for cfg in configs:
        norm, batch = prepare_inputs(g, cfg)
        results = _run_splits(g, splits, cfg, model_kind, norm, batch,
                              compute_test=False, log_dir=None, workers=workers)
        if any(r.aborted for r in results):
            log.warning("grid: config diverged, skipping (%s)", cfg)
            continue
        score = float(np.mean([r.val_accuracy_at_best for r in results]))
        log.info("grid: val_acc=%.4f for %s", score, cfg)
        if score > best_score:
            best_cfg, best_score = cfg, score
    if best_cfg is None:
        raise DivergenceError("grid search: every configuration diverged")
    report = run_protocol(g, splits, best_cfg, model_kind, dataset=dataset,
                          workers=workers)
    return best_cfg, report


def ranked_homophily_analysis(g, params, cfg, n_select=5, norm=None, batch=None,
                              seed=None):
    """Mean label agreement of the top-n pointer-selected neighbors vs the
    same count of uniform-random 1-hop neighbors.

    The pointer runs n_select+1 steps so the central node can be skipped if
    it selects itself; nodes with no remaining candidates (or no neighbors,
    for the baseline) are skipped and counted.
    """
    if norm is None or batch is None:
        norm, batch = prepare_inputs(g, cfg)
    x = ad.constant(g.features)
    xhat = M.gcn_embed(x, norm.matrix, params["gcn_weight"])
    enc, enc_cells = M.run_encoder(xhat, batch, params, cfg)
    pointer = M.decoder_select(enc, enc_cells, xhat, batch, params, cfg,
                               m=n_select + 1)

    labels = g.labels
    gpnn_total, gpnn_scored, gpnn_skipped = 0.0, 0, 0
    for v in range(g.num_nodes):
        positions = pointer.selected_indices[v]
        ids = [int(batch.indices[v, p]) for p in positions if p >= 0]
        ids = [u for u in ids if u != v][:n_select]
        if not ids:
            gpnn_skipped += 1
            continue
        gpnn_total += float(np.mean(labels[ids] == labels[v]))
        gpnn_scored += 1

    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    rand_total, rand_scored, rand_skipped = 0.0, 0, 0
    for v in range(g.num_nodes):
        nbrs = g.neighbors(v)
        if nbrs.size == 0:
            rand_skipped += 1
            continue
        picked = rng.choice(nbrs, size=n_select, replace=nbrs.size < n_select)
        rand_total += float(np.mean(labels[picked] == labels[v]))
        rand_scored += 1

    if gpnn_skipped or rand_skipped:
        log.info("ranked homophily: skipped %d pointer rows, %d baseline rows",
                 gpnn_skipped, rand_skipped)
    return RankedHomophily(
        gpnn_ratio=gpnn_total / max(gpnn_scored, 1),
        random_1hop_ratio=rand_total / max(rand_scored, 1),
        skipped_gpnn=gpnn_skipped,
        skipped_random=rand_skipped,
    )


def oversmoothing_sweep(g, splits, cfg, layer_counts, models=("gcn", "gpnn"),
                        dataset="dataset", workers=1):
    """Accuracy vs depth for the GCN baseline and the stacked pointer model,
    with relative decay against the 2-layer reference point."""
    if not layer_counts or any(l < 1 for l in layer_counts):
        raise ValidationError("layer_counts must be non-empty, all >= 1")
    reference = 2 if 2 in layer_counts else min(layer_counts)
    rows = []
    for model_kind in models:
        accs = {}
        for layers in layer_counts:
            report = run_protocol(g, splits, cfg.replace(layers=layers),
                                  model_kind, dataset=dataset, workers=workers)
            accs[layers] = float("nan") if report.incomplete else report.mean_accuracy
        ref_acc = accs[reference]
        for layers in layer_counts:
            decay = float("nan")
            if math.isfinite(accs[layers]) and math.isfinite(ref_acc) and ref_acc > 0:
                decay = (ref_acc - accs[layers]) / ref_acc
            rows.append(SweepRow(model_kind, layers, accs[layers], decay))
    return rows


def report_to_csv(report):
    lines = ["dataset,model,mean,stdev,n_splits"]
    lines.append(f"{report.dataset},{report.model},{report.mean_accuracy!r},"
                 f"{report.stdev_accuracy!r},{len(report.per_split)}")
    return "\n".join(lines) + "\n"


def sweep_to_csv(rows):
    lines = ["model,layers,mean_acc,rel_decay"]
    for r in rows:
        lines.append(f"{r.model},{r.layers},{r.mean_acc!r},{r.rel_decay!r}")
    return "\n".join(lines) + "\n"


def report_to_dict(report):
    return {
        "dataset": report.dataset,
        "model": report.model,
        "mean_accuracy": report.mean_accuracy,
        "stdev_accuracy": report.stdev_accuracy,
        "incomplete": report.incomplete,
        "per_split": [
            {
                "split_id": r.split_id,
                "best_epoch": r.best_epoch,
                "test_accuracy": r.test_accuracy,
                "val_accuracy_at_best": r.val_accuracy_at_best,
                "aborted": r.aborted,
                "abort_reason": r.abort_reason,
                "epochs_run": len(r.train_curve),
            }
            for r in report.per_split
        ],
    }
