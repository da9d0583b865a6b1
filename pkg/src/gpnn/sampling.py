"""Multi-hop node sequence sampling.

Every node gets an ordered sequence: itself, then its BFS layers 1..k with
each layer's members in ascending node-id order (or seeded-shuffle order for
ablations), truncated at a maximum length L. Sequences are computed once per
run; consumers must never read features through masked positions.
"""

from dataclasses import dataclass

import numpy as np

from . import _accel
from .errors import ValidationError

PAD_ID = 0


@dataclass(frozen=True)
class NodeSequenceBatch:
    """Padded per-node sequences plus mask: indices[v][0] == v, padded
    positions hold the sentinel id 0 with mask False."""

    indices: np.ndarray       # (N, L) int64
    mask: np.ndarray          # (N, L) bool
    lengths: np.ndarray       # (N,) int64
    depth_k: int
    max_len_L: int


def sample_sequences(g, k, L, order="ascending", seed=None):
    """BFS node sequences for every node of `g`.

    order="ascending" resolves intra-layer ties by node id (deterministic);
    order="shuffle" permutes each layer with a generator seeded by `seed`.
    """
    if k < 0:
        raise ValidationError(f"sampling depth k must be >= 0, got {k}")
    if L < 1:
        raise ValidationError(f"max sequence length L must be >= 1, got {L}")
    if order not in ("ascending", "shuffle"):
        raise ValidationError(f"unknown sequence order {order!r}")

    adj = g.adjacency
    indptr = adj.indptr.astype(np.int64)
    nbr = adj.indices.astype(np.int64)
    if order == "ascending":
        seq, lengths = _accel.bfs_sequences(indptr, nbr, k, L)
    else:
        rng = np.random.default_rng(seed)
        seq, lengths = _shuffled_bfs(indptr, nbr, g.num_nodes, k, L, rng)
    mask = np.arange(L)[None, :] < lengths[:, None]
    seq = seq.copy()
    seq[~mask] = PAD_ID
    return NodeSequenceBatch(
        indices=seq, mask=mask, lengths=lengths, depth_k=k, max_len_L=L
    )


def _shuffled_bfs(indptr, nbr, n, k, max_len, rng):
    seq = np.zeros((n, max_len), dtype=np.int64)
    lengths = np.zeros(n, dtype=np.int64)
    for v in range(n):
        row = [v]
        visited = {v}
        frontier = [v]
        depth = 0
        while frontier and depth < k and len(row) < max_len:
            nxt = set()
            for u in frontier:
                for w in nbr[indptr[u]:indptr[u + 1]]:
                    w = int(w)
                    if w not in visited:
                        nxt.add(w)
            visited |= nxt
            frontier = sorted(nxt)
            rng.shuffle(frontier)
            for w in frontier:
                if len(row) >= max_len:
                    break
                row.append(w)
            depth += 1
        seq[v, :len(row)] = row
        lengths[v] = len(row)
    return seq, lengths


def hop_of(g, v, u, k):
    """Shortest-path distance from v to u if it is <= k, else None."""
    if v == u:
        return 0
    adj = g.adjacency
    indptr, nbr = adj.indptr, adj.indices
    dist = {v: 0}
    frontier = [v]
    depth = 0
    while frontier and depth < k:
        depth += 1
        nxt = []
        for a in frontier:
            for b in nbr[indptr[a]:indptr[a + 1]]:
                b = int(b)
                if b not in dist:
                    dist[b] = depth
                    if b == u:
                        return depth
                    nxt.append(b)
        frontier = nxt
    return None


def format_batch(batch):
    """Structured-text dump: one line per node,
    ``<v>: <id,id,...> | <mask bits>``."""
    lines = []
    for v in range(batch.indices.shape[0]):
        ids = ",".join(str(int(x)) for x in batch.indices[v])
        bits = "".join("1" if b else "0" for b in batch.mask[v])
        lines.append(f"{v}: {ids} | {bits}")
    return "\n".join(lines) + "\n"
