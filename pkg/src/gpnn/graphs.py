"""Graph data model, dataset IO, split management, adjacency normalization
and homophily analytics.

File formats
------------
edges file     one edge per line, two whitespace-separated non-negative
               integers; lines starting with '#' are ignored
features file  per line: ``<node_id> <TAB> <comma-separated floats> <TAB> <label>``
splits file    JSON array of exactly 10 objects with integer-array fields
               "train", "val", "test"
idmap sidecar  lines ``<original_id> <dense_id>`` (written by the loader when
               input ids are remapped)
"""

import json
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import (
    DuplicateIdError,
    ParseError,
    ReferentialIntegrityError,
    ValidationError,
)

log = logging.getLogger(__name__)

NUM_SPLITS = 10


class Graph:
    """Immutable undirected graph with dense node features and labels.

    Edges are stored deduplicated with u < v and no self-loops; self-loops
    enter only through adjacency normalization.
    """

    def __init__(self, features, edges, labels, num_classes=None):
        features = np.ascontiguousarray(features, dtype=np.float64)
        if features.ndim != 2:
            raise ValidationError(f"features must be 2-D, got shape {features.shape}")
        labels = np.asarray(labels, dtype=np.int64)
        n = features.shape[0]
        if labels.shape != (n,):
            raise ValidationError(
                f"labels must have shape ({n},), got {labels.shape}"
            )
        if n > 0 and labels.min() < 0:
            raise ValidationError("labels must be non-negative")
        if num_classes is None:
            num_classes = int(labels.max()) + 1 if n else 0
        if n > 0 and labels.max() >= num_classes:
            raise ValidationError(
                f"label {labels.max()} out of range for {num_classes} classes"
            )

        canonical = {(min(int(u), int(v)), max(int(u), int(v))) for u, v in edges}
        edge_arr = np.asarray(sorted(canonical), dtype=np.int64).reshape(-1, 2)
        if edge_arr.size:
            if edge_arr.min() < 0 or edge_arr.max() >= n:
                raise ValidationError("edge endpoint out of range")
            if np.any(edge_arr[:, 0] == edge_arr[:, 1]):
                raise ValidationError("self-loops are not stored in the edge set")

        self.features = features
        self.labels = labels
        self.edges = edge_arr
        self.num_nodes = n
        self.num_features = features.shape[1]
        self.num_classes = num_classes
        self.features.flags.writeable = False
        self.labels.flags.writeable = False
        self.edges.flags.writeable = False

    @property
    def num_edges(self):
        return self.edges.shape[0]

    @cached_property
    def adjacency(self):
        """Binary adjacency as CSR (no self-loops), symmetric."""
        n = self.num_nodes
        if self.num_edges == 0:
            return sp.csr_matrix((n, n), dtype=np.float64)
        u, v = self.edges[:, 0], self.edges[:, 1]
        rows = np.concatenate([u, v])
        cols = np.concatenate([v, u])
        data = np.ones(rows.shape[0], dtype=np.float64)
        return sp.csr_matrix((data, (rows, cols)), shape=(n, n))

    @cached_property
    def degrees(self):
        """Degree per node, self-loops excluded."""
        deg = np.zeros(self.num_nodes, dtype=np.int64)
        if self.num_edges:
            np.add.at(deg, self.edges[:, 0], 1)
            np.add.at(deg, self.edges[:, 1], 1)
        return deg

    def neighbors(self, v):
        """Neighbor ids of v in ascending order."""
        adj = self.adjacency
        return adj.indices[adj.indptr[v]:adj.indptr[v + 1]].astype(np.int64)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.num_nodes == other.num_nodes
            and self.num_classes == other.num_classes
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.edges, other.edges)
        )

    def __repr__(self):
        return (
            f"Graph(N={self.num_nodes}, E={self.num_edges}, "
            f"F={self.num_features}, C={self.num_classes})"
        )


@dataclass(frozen=True)
class SplitSet:
    """One train/val/test partition; indices are dense node ids."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    split_id: int

    def validate(self, num_nodes):
        parts = {"train": self.train, "val": self.val, "test": self.test}
        for name, idx in parts.items():
            if idx.size == 0:
                raise ValidationError(
                    f"split {self.split_id}: empty {name} list (all three parts required)"
                )
            if idx.min() < 0 or idx.max() >= num_nodes:
                raise ReferentialIntegrityError(
                    f"split {self.split_id}: {name} index out of range [0, {num_nodes})"
                )
            if np.unique(idx).size != idx.size:
                raise ValidationError(f"split {self.split_id}: duplicate index in {name}")
        combined = np.concatenate([self.train, self.val, self.test])
        if np.unique(combined).size != combined.size:
            raise ValidationError(f"split {self.split_id}: train/val/test overlap")
        return self


class NormalizedAdjacency:
    """Symmetrically normalized adjacency with self-loops.

    Entries (u, v, w) carry w = 1/sqrt(dhat_u * dhat_v) where dhat counts
    degrees after adding a self-loop to every node.
    """

    def __init__(self, rows, cols, weights, num_nodes):
        self.rows = np.asarray(rows, dtype=np.int64)
        self.cols = np.asarray(cols, dtype=np.int64)
        self.weights = np.asarray(weights, dtype=np.float64)
        self.num_nodes = num_nodes

    def entries(self):
        """(u, v, weight) triples, including the diagonal."""
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.weights.tolist()))

    @cached_property
    def matrix(self):
        """CSR view for propagation."""
        return sp.csr_matrix(
            (self.weights, (self.rows, self.cols)),
            shape=(self.num_nodes, self.num_nodes),
        )

    def to_dense(self):
        return self.matrix.toarray()


def normalize_adjacency(g):
    """D^{-1/2} (A + I) D^{-1/2} with degrees taken after adding self-loops."""
    dhat = g.degrees + 1
    inv_sqrt = 1.0 / np.sqrt(dhat.astype(np.float64))
    diag_rows = np.arange(g.num_nodes, dtype=np.int64)
    if g.num_edges:
        u, v = g.edges[:, 0], g.edges[:, 1]
        rows = np.concatenate([u, v, diag_rows])
        cols = np.concatenate([v, u, diag_rows])
    else:
        rows = diag_rows
        cols = diag_rows
    weights = inv_sqrt[rows] * inv_sqrt[cols]
    order = np.lexsort((cols, rows))
    return NormalizedAdjacency(rows[order], cols[order], weights[order], g.num_nodes)


def homophily_ratio(g):
    """Mean over nodes of the fraction of 1-hop neighbors sharing the node's
    label. Neighborhoods exclude self-loops; isolated nodes contribute 0 and
    are logged."""
    adj = g.adjacency
    total = 0.0
    isolated = 0
    for v in range(g.num_nodes):
        nbrs = adj.indices[adj.indptr[v]:adj.indptr[v + 1]]
        if nbrs.size == 0:
            isolated += 1
            continue
        total += float(np.mean(g.labels[nbrs] == g.labels[v]))
    if isolated:
        log.warning(
            "homophily_ratio: %d isolated node(s) contribute 0 to the average",
            isolated,
        )
    return total / g.num_nodes if g.num_nodes else 0.0


def _parse_features_file(path):
    ids, feats, labels = [], [], []
    seen = set()
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(
                    path, line_no, f"expected 3 tab-separated fields, got {len(parts)}"
                )
            raw_id, raw_feats, raw_label = parts
            try:
                node_id = int(raw_id)
            except ValueError:
                raise ParseError(path, line_no, f"bad node id {raw_id!r}") from None
            if node_id in seen:
                raise DuplicateIdError(f"{path}:{line_no}: duplicate node id {node_id}")
            seen.add(node_id)
            try:
                vec = [float(x) for x in raw_feats.split(",")]
            except ValueError:
                raise ParseError(path, line_no, "bad feature value") from None
            if width is None:
                width = len(vec)
            elif len(vec) != width:
                raise ParseError(
                    path, line_no, f"expected {width} features, got {len(vec)}"
                )
            try:
                label = int(raw_label)
            except ValueError:
                raise ParseError(path, line_no, f"bad label {raw_label!r}") from None
            if label < 0:
                raise ParseError(path, line_no, f"negative label {label}")
            ids.append(node_id)
            feats.append(vec)
            labels.append(label)
    if not ids:
        raise ParseError(path, 1, "features file is empty")
    return ids, np.asarray(feats, dtype=np.float64), np.asarray(labels, dtype=np.int64)


def _parse_edges_file(path, id_map):
    edges = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split()
            if len(parts) != 2:
                raise ParseError(
                    path, line_no, f"expected 2 node ids, got {len(parts)}"
                )
            try:
                a, b = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError(path, line_no, "bad node id") from None
            if a < 0 or b < 0:
                raise ParseError(path, line_no, "negative node id")
            for x in (a, b):
                if x not in id_map:
                    raise ReferentialIntegrityError(
                        f"{path}:{line_no}: edge endpoint {x} has no features row"
                    )
            u, v = id_map[a], id_map[b]
            if u == v:
                log.warning("%s:%d: dropping self-loop on node %d", path, line_no, a)
                continue
            edges.add((min(u, v), max(u, v)))
    return edges


def load_dataset(edges_path, features_path, idmap_path="auto"):
    """Load a graph from the canonical edges/features files.

    Node ids may be sparse; they are remapped densely to [0, N) preserving
    file order, and the mapping is written to `idmap_path` (default:
    ``<features_path>.idmap``; pass None to skip).
    """
    ids, features, labels = _parse_features_file(features_path)
    id_map = {orig: dense for dense, orig in enumerate(ids)}
    edges = _parse_edges_file(edges_path, id_map)
    if idmap_path == "auto":
        idmap_path = f"{features_path}.idmap"
    if idmap_path is not None:
        try:
            with open(idmap_path, "w", encoding="utf-8") as fh:
                for dense, orig in enumerate(ids):
                    fh.write(f"{orig} {dense}\n")
        except OSError as exc:
            log.warning("could not write id-map sidecar %s: %s", idmap_path, exc)
    return Graph(features, edges, labels)


def save_dataset(g, edges_path, features_path):
    """Write a graph back out in the canonical formats (dense ids).

    Feature values use shortest round-trip float formatting, so a
    load/save/load cycle is bit-exact.
    """
    with open(features_path, "w", encoding="utf-8") as fh:
        for v in range(g.num_nodes):
            feats = ",".join(repr(float(x)) for x in g.features[v])
            fh.write(f"{v}\t{feats}\t{int(g.labels[v])}\n")
    with open(edges_path, "w", encoding="utf-8") as fh:
        fh.write("# one undirected edge per line\n")
        for u, v in g.edges:
            fh.write(f"{u} {v}\n")


def load_splits(path, g):
    """Read the 10-split JSON file and validate it against `g`."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(path, exc.lineno, f"bad JSON: {exc.msg}") from None
    if not isinstance(doc, list) or len(doc) != NUM_SPLITS:
        raise ValidationError(
            f"{path}: expected a top-level array of {NUM_SPLITS} splits, "
            f"got {len(doc) if isinstance(doc, list) else type(doc).__name__}"
        )
    splits = []
    for i, obj in enumerate(doc):
        missing = {"train", "val", "test"} - set(obj)
        if missing:
            raise ValidationError(f"{path}: split {i} missing fields {sorted(missing)}")
        split = SplitSet(
            train=np.asarray(obj["train"], dtype=np.int64),
            val=np.asarray(obj["val"], dtype=np.int64),
            test=np.asarray(obj["test"], dtype=np.int64),
            split_id=i,
        )
        splits.append(split.validate(g.num_nodes))
    return splits


def save_splits(splits, path):
    doc = [
        {
            "train": s.train.tolist(),
            "val": s.val.tolist(),
            "test": s.test.tolist(),
        }
        for s in splits
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def generate_splits(g, fractions, seed):
    """Ten deterministic pseudo-random splits with the given
    (train, val, test) fractions. No per-class stratification."""
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ValidationError(f"fractions must be 3 positive reals, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValidationError(f"fractions must sum to 1, got sum={sum(fractions)}")
    n = g.num_nodes
    if n * min(fractions) < 1:
        raise ValidationError(
            f"smallest fraction {min(fractions)} yields an empty part for N={n}"
        )
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise ValidationError("rounded split sizes leave an empty part")
    rng = np.random.default_rng(seed)
    splits = []
    for i in range(NUM_SPLITS):
        perm = rng.permutation(n)
        splits.append(
            SplitSet(
                train=np.sort(perm[:n_train]),
                val=np.sort(perm[n_train:n_train + n_val]),
                test=np.sort(perm[n_train + n_val:]),
                split_id=i,
            ).validate(n)
        )
    return splits
