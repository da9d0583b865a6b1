"""Command-line entry point.

Subcommands: stats, homophily, sample, train, protocol, grid,
rank-analysis, oversmooth, convert. A dataset directory holds the canonical
files ``edges.txt``, ``features.txt`` and ``splits.json``; ``convert``
produces that layout from the de-facto raw benchmark distribution.

Every run writes a ``manifest.json`` with the fully resolved config, seed
and sha256 of each artifact; re-running with the recorded config reproduces
the artifacts bit-exactly (volatile timings live in ``timing.json``, which
is deliberately not part of the manifest).

Exit codes: 0 ok, 2 bad config, 3 data error, 4 numeric divergence.
"""

import argparse
import glob as globlib
import hashlib
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from ._accel import backend_name
from .autodiff import constant, load_params, save_params
from .config import ModelConfig, apply_overrides, load_config, save_config
from .errors import ConfigError, DataError, GpnnError, NumericError
from .graphs import (
    generate_splits,
    homophily_ratio,
    load_dataset,
    load_splits,
    save_dataset,
    save_splits,
)
from .sampling import format_batch, sample_sequences
from . import harness
from . import model as M


def _add_common(parser):
    parser.add_argument("--dataset-dir", default=os.environ.get("GPNN_DATA_ROOT"),
                        help="directory with edges.txt/features.txt/splits.json "
                             "(default: $GPNN_DATA_ROOT)")
    parser.add_argument("--config", dest="config_path", default=None,
                        help="flat key=value config file")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="config override; repeatable")
    parser.add_argument("--output-dir", default="gpnn_out")
    parser.add_argument("--seed", type=int, default=None,
                        help="shorthand for --set seed=N")
    parser.add_argument("--splits-path", default=None,
                        help="splits file (default: <dataset-dir>/splits.json)")
    parser.add_argument("--generate-splits", default=None, metavar="TR,VA,TE",
                        help="generate 10 seeded splits with these fractions "
                             "when no splits file exists")
    parser.add_argument("--verbose", action="store_true",
                        help="log progress (grid scores, warnings) to stderr")


def build_parser():
    parser = argparse.ArgumentParser(prog="gpnn", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("stats", help="dataset statistics incl. homophily ratio")
    _add_common(p)

    p = sub.add_parser("homophily", help="homophily ratio only")
    _add_common(p)

    p = sub.add_parser("sample", help="dump multi-hop node sequences")
    _add_common(p)
    p.add_argument("--k", type=int, default=None, help="sampling depth")
    p.add_argument("--L", type=int, default=None, help="max sequence length")

    p = sub.add_parser("train", help="train one split")
    _add_common(p)
    p.add_argument("--model", choices=("gpnn", "mlp", "gcn"), default="gpnn")
    p.add_argument("--split-id", type=int, default=0)

    p = sub.add_parser("protocol", help="10-split evaluation protocol")
    _add_common(p)
    p.add_argument("--model", choices=("gpnn", "mlp", "gcn"), default="gpnn")
    p.add_argument("--workers", type=int, default=1,
                   help="worker processes for the independent per-split runs")

    p = sub.add_parser("grid", help="grid search on validation accuracy")
    _add_common(p)
    p.add_argument("--model", choices=("gpnn", "mlp", "gcn"), default="gpnn")
    p.add_argument("--max-configs", type=int, default=None)
    p.add_argument("--subsample-seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("rank-analysis",
                       help="homophily of pointer-selected vs random neighbors")
    _add_common(p)
    p.add_argument("--checkpoint", default=None,
                   help="trained parameter checkpoint; trains one split if absent")
    p.add_argument("--split-id", type=int, default=0)
    p.add_argument("--n-select", type=int, default=5)

    p = sub.add_parser("oversmooth", help="accuracy-vs-depth sweep")
    _add_common(p)
    p.add_argument("--layer-counts", default="2,4,8",
                   help="comma-separated layer counts")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("convert",
                       help="convert a raw benchmark distribution to the "
                            "canonical dataset layout")
    _add_common(p)
    p.add_argument("--raw-dir", required=True)
    p.add_argument("--node-file", default="out1_node_feature_label.txt")
    p.add_argument("--edge-file", default="out1_graph_edges.txt")
    p.add_argument("--splits-glob", default="*.npz")
    return parser


def resolve_config(args):
    cfg = ModelConfig()
    if args.config_path:
        cfg = load_config(args.config_path, base=cfg)
    cfg = apply_overrides(cfg, args.overrides)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if getattr(args, "k", None) is not None:
        cfg = cfg.replace(depth_k=args.k)
    if getattr(args, "L", None) is not None:
        cfg = cfg.replace(max_len_L=args.L)
    return cfg.validate()


def dataset_paths(dataset_dir):
    if not dataset_dir:
        raise ConfigError("no dataset directory (use --dataset-dir or GPNN_DATA_ROOT)")
    edges = os.path.join(dataset_dir, "edges.txt")
    features = os.path.join(dataset_dir, "features.txt")
    splits = os.path.join(dataset_dir, "splits.json")
    for path in (edges, features):
        if not os.path.exists(path):
            raise DataError(f"missing dataset file {path}")
    return edges, features, splits


def load_graph(args):
    edges, features, splits = dataset_paths(args.dataset_dir)
    g = load_dataset(edges, features, idmap_path=None)
    if args.splits_path:
        splits = args.splits_path
    return g, splits


def get_splits(args, g, splits_path, cfg):
    if os.path.exists(splits_path):
        return load_splits(splits_path, g)
    if args.generate_splits:
        try:
            fractions = tuple(float(x) for x in args.generate_splits.split(","))
        except ValueError:
            raise ConfigError(
                f"bad --generate-splits {args.generate_splits!r}") from None
        splits = generate_splits(g, fractions, cfg.seed)
        os.makedirs(args.output_dir, exist_ok=True)
        save_splits(splits, os.path.join(args.output_dir, "splits.json"))
        return splits
    raise DataError(
        f"missing splits file {splits_path}; pass --generate-splits or "
        "convert the published ones"
    )


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


class OutputDir:
    """Artifact sink: tracks written files and finalizes the manifest."""

    def __init__(self, root):
        self.root = root
        self.artifacts = []
        os.makedirs(root, exist_ok=True)

    def path(self, name):
        return os.path.join(self.root, name)

    def write_text(self, name, text):
        path = self.path(name)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        self.artifacts.append(name)
        return path

    def write_json(self, name, obj):
        return self.write_text(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def track(self, name):
        self.artifacts.append(name)
        return self.path(name)

    def finalize(self, args, cfg):
        manifest = {
            "version": __version__,
            "backend": backend_name(),
            "subcommand": args.subcommand,
            "dataset_dir": args.dataset_dir,
            "seed": cfg.seed if cfg else None,
            "config": cfg.to_dict() if cfg else None,
            "artifacts": {name: _sha256(self.path(name))
                          for name in sorted(set(self.artifacts))},
        }
        path = self.path("manifest.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        for name in sorted(set(self.artifacts)) + ["manifest.json"]:
            print(self.path(name))


def cmd_stats(args, cfg):
    g, _ = load_graph(args)
    ratio = homophily_ratio(g)
    out = OutputDir(args.output_dir)
    doc = {"num_nodes": g.num_nodes, "num_edges": g.num_edges,
           "num_features": g.num_features, "num_classes": g.num_classes,
           "homophily_ratio": ratio}
    out.write_json("stats.json", doc)
    print(f"N={g.num_nodes} |E|={g.num_edges} F={g.num_features} "
          f"C={g.num_classes} H={ratio:.4f}")
    return out, cfg


def cmd_homophily(args, cfg):
    g, _ = load_graph(args)
    ratio = homophily_ratio(g)
    out = OutputDir(args.output_dir)
    out.write_json("homophily.json", {"homophily_ratio": ratio})
    print(f"H={ratio:.4f}")
    return out, cfg


def cmd_sample(args, cfg):
    g, _ = load_graph(args)
    batch = sample_sequences(g, cfg.depth_k, cfg.max_len_L,
                             order=cfg.sequence_order, seed=cfg.seed)
    out = OutputDir(args.output_dir)
    out.write_text("sequences.txt", format_batch(batch))
    return out, cfg


def _write_config(out, cfg):
    save_config(cfg, out.path("resolved_config.txt"))
    out.artifacts.append("resolved_config.txt")


def cmd_train(args, cfg):
    g, splits_path = load_graph(args)
    splits = get_splits(args, g, splits_path, cfg)
    if not 0 <= args.split_id < len(splits):
        raise ConfigError(f"split-id {args.split_id} out of range")
    out = OutputDir(args.output_dir)
    log_path = out.track(f"run_split{args.split_id}.log")
    if os.path.exists(log_path):
        os.remove(log_path)
    result, best_params = harness.train_one_split(
        g, splits[args.split_id], cfg, model_kind=args.model, log_path=log_path)
    if result.aborted:
        raise NumericError(f"training diverged: {result.abort_reason}")
    flat = harness._flat_params(best_params)
    save_params(flat, out.path("checkpoint.json"))
    out.artifacts.append("checkpoint.json")
    norm, batch = harness.prepare_inputs(g, cfg)
    logits = harness.forward(args.model, constant(g.features), norm, batch,
                             best_params, cfg)
    preds = M.predict(logits)
    out.write_text("predictions.tsv",
                   "".join(f"{v}\t{int(preds[v])}\n" for v in range(g.num_nodes)))
    out.write_json("result.json", {
        "split_id": result.split_id,
        "best_epoch": result.best_epoch,
        "test_accuracy": result.test_accuracy,
        "val_accuracy_at_best": result.val_accuracy_at_best,
        "epochs_run": len(result.train_curve),
        "model": args.model,
        "num_parameters": M.count_parameters(best_params),
    })
    with open(out.path("timing.json"), "w", encoding="utf-8") as fh:
        json.dump({"wall_time_s": result.wall_time_s}, fh)
    _write_config(out, cfg)
    print(f"test_accuracy={result.test_accuracy:.4f} best_epoch={result.best_epoch}")
    return out, cfg


def cmd_protocol(args, cfg):
    g, splits_path = load_graph(args)
    splits = get_splits(args, g, splits_path, cfg)
    dataset = os.path.basename(os.path.normpath(args.dataset_dir))
    out = OutputDir(args.output_dir)
    for split in splits:
        name = f"run_split{split.split_id}.log"
        if os.path.exists(out.path(name)):
            os.remove(out.path(name))
        out.track(name)
    report = harness.run_protocol(g, splits, cfg, model_kind=args.model,
                                  dataset=dataset, log_dir=out.root,
                                  workers=args.workers)
    out.write_json("report.json", harness.report_to_dict(report))
    out.write_text("report.csv", harness.report_to_csv(report))
    _write_config(out, cfg)
    print(f"{dataset} {args.model}: "
          f"{report.mean_accuracy:.4f} +/- {report.stdev_accuracy:.4f}"
          + (" (INCOMPLETE)" if report.incomplete else ""))
    if report.incomplete:
        raise NumericError("one or more protocol runs diverged")
    return out, cfg


def cmd_grid(args, cfg):
    g, splits_path = load_graph(args)
    splits = get_splits(args, g, splits_path, cfg)
    dataset = os.path.basename(os.path.normpath(args.dataset_dir))
    out = OutputDir(args.output_dir)
    best_cfg, report = harness.grid_search(
        g, splits, cfg, model_kind=args.model, max_configs=args.max_configs,
        subsample_seed=args.subsample_seed, dataset=dataset,
        workers=args.workers)
    save_config(best_cfg, out.path("best_config.txt"))
    out.artifacts.append("best_config.txt")
    out.write_json("report.json", harness.report_to_dict(report))
    out.write_text("report.csv", harness.report_to_csv(report))
    _write_config(out, cfg)
    print(f"best: {report.mean_accuracy:.4f} +/- {report.stdev_accuracy:.4f}")
    return out, best_cfg


def cmd_rank_analysis(args, cfg):
    g, splits_path = load_graph(args)
    out = OutputDir(args.output_dir)
    if args.checkpoint:
        params = load_params(args.checkpoint)
        if any(key.startswith("layer") for key in params):
            params = M.unflatten_stacked_params(params)
    else:
        splits = get_splits(args, g, splits_path, cfg)
        result, params = harness.train_one_split(
            g, splits[args.split_id], cfg, model_kind="gpnn")
        if result.aborted:
            raise NumericError(f"training diverged: {result.abort_reason}")
    if isinstance(params, list):
        params = params[0]  # stacked model: analyze the first pointer layer
    analysis = harness.ranked_homophily_analysis(g, params, cfg,
                                                 n_select=args.n_select)
    out.write_json("rank_analysis.json", {
        "gpnn_ratio": analysis.gpnn_ratio,
        "random_1hop_ratio": analysis.random_1hop_ratio,
        "skipped_gpnn": analysis.skipped_gpnn,
        "skipped_random": analysis.skipped_random,
        "n_select": args.n_select,
    })
    _write_config(out, cfg)
    print(f"pointer={analysis.gpnn_ratio:.4f} random={analysis.random_1hop_ratio:.4f}")
    return out, cfg


def cmd_oversmooth(args, cfg):
    g, splits_path = load_graph(args)
    splits = get_splits(args, g, splits_path, cfg)
    dataset = os.path.basename(os.path.normpath(args.dataset_dir))
    try:
        layer_counts = [int(x) for x in args.layer_counts.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"bad --layer-counts {args.layer_counts!r}") from None
    out = OutputDir(args.output_dir)
    rows = harness.oversmoothing_sweep(g, splits, cfg, layer_counts,
                                       dataset=dataset, workers=args.workers)
    out.write_text("sweep.csv", harness.sweep_to_csv(rows))
    _write_config(out, cfg)
    for r in rows:
        print(f"{r.model} layers={r.layers} acc={r.mean_acc:.4f} "
              f"decay={r.rel_decay:.4f}")
    return out, cfg


def _read_raw_nodes(path):
    ids, feats, labels = [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split("\t")
            if line_no == 1 and not parts[0].isdigit():
                continue  # header
            if len(parts) != 3:
                raise DataError(f"{path}:{line_no}: expected 3 tab fields")
            ids.append(int(parts[0]))
            feats.append([float(x) for x in parts[1].split(",")])
            labels.append(int(parts[2]))
    return ids, feats, labels


def cmd_convert(args, cfg):
    node_path = os.path.join(args.raw_dir, args.node_file)
    edge_path = os.path.join(args.raw_dir, args.edge_file)
    for path in (node_path, edge_path):
        if not os.path.exists(path):
            raise DataError(f"missing raw file {path}")
    out = OutputDir(args.output_dir)

    ids, feats, labels = _read_raw_nodes(node_path)
    with open(out.path("features.txt"), "w", encoding="utf-8") as fh:
        for i, vec, label in zip(ids, feats, labels):
            fh.write(f"{i}\t{','.join(repr(x) for x in vec)}\t{label}\n")
    out.artifacts.append("features.txt")

    with open(edge_path, "r", encoding="utf-8") as src, \
            open(out.path("edges.txt"), "w", encoding="utf-8") as dst:
        for line_no, line in enumerate(src, start=1):
            parts = line.split()
            if line_no == 1 and (len(parts) != 2 or not parts[0].isdigit()):
                continue  # header
            if len(parts) != 2:
                raise DataError(f"{edge_path}:{line_no}: expected 2 ids")
            dst.write(f"{parts[0]} {parts[1]}\n")
    out.artifacts.append("edges.txt")

    # round-trip through the loader: dedup + dense remap + validation
    g = load_dataset(out.path("edges.txt"), out.path("features.txt"),
                     idmap_path=out.path("idmap.txt"))
    out.artifacts.append("idmap.txt")
    save_dataset(g, out.path("edges.txt"), out.path("features.txt"))

    split_files = sorted(globlib.glob(os.path.join(args.raw_dir, args.splits_glob)))
    if split_files:
        if len(split_files) != 10:
            raise DataError(f"expected 10 split files, found {len(split_files)}")
        # masks are positional over file order, which the dense remap preserves
        splits_doc = []
        for path in split_files:
            arrays = np.load(path)
            required = {"train_mask", "val_mask", "test_mask"}
            if not required <= set(arrays):
                raise DataError(f"{path}: missing {required - set(arrays)}")
            splits_doc.append({
                "train": np.flatnonzero(arrays["train_mask"]).tolist(),
                "val": np.flatnonzero(arrays["val_mask"]).tolist(),
                "test": np.flatnonzero(arrays["test_mask"]).tolist(),
            })
        with open(out.path("splits.json"), "w", encoding="utf-8") as fh:
            json.dump(splits_doc, fh)
            fh.write("\n")
        out.artifacts.append("splits.json")
        load_splits(out.path("splits.json"), g)

    print(f"converted: N={g.num_nodes} |E|={g.num_edges} F={g.num_features} "
          f"C={g.num_classes}")
    return out, cfg


_COMMANDS = {
    "stats": cmd_stats,
    "homophily": cmd_homophily,
    "sample": cmd_sample,
    "train": cmd_train,
    "protocol": cmd_protocol,
    "grid": cmd_grid,
    "rank-analysis": cmd_rank_analysis,
    "oversmooth": cmd_oversmooth,
    "convert": cmd_convert,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        out, final_cfg = _COMMANDS[args.subcommand](args, cfg)
        out.finalize(args, final_cfg)
    except ConfigError as exc:
        print(f"error:config: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error:data: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"error:numeric: {exc}", file=sys.stderr)
        return 4
    except GpnnError as exc:
        print(f"error:internal: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
