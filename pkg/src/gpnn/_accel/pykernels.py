"""Numpy fallback implementations of the hot kernels.

The compiled core in ``ckernels.pyx`` mirrors these signatures exactly;
whichever is active is chosen once at import time (see ``__init__``).
"""

import numpy as np


def bfs_sequences(indptr, indices, k, max_len):
    """Per-node multi-hop BFS sequences ordered by hop distance.

    indptr/indices: CSR adjacency of an undirected graph without self-loops.
    Returns (seq, lengths): seq is (N, max_len) int64 with row v starting at
    v followed by BFS layers 1..k, each layer in ascending node-id order,
    truncated at max_len and zero-padded; lengths gives the unpadded count.
    """
    n = indptr.shape[0] - 1
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
                for w in indices[indptr[u]:indptr[u + 1]]:
                    w = int(w)
                    if w not in visited:
                        nxt.add(w)
            visited |= nxt
            frontier = sorted(nxt)
            for w in frontier:
                if len(row) >= max_len:
                    break
                row.append(w)
            depth += 1
        seq[v, :len(row)] = row
        lengths[v] = len(row)
    return seq, lengths


def scatter_add_rows(table, rows, vals):
    """table[rows[i], :] += vals[i, :] with repeated rows accumulating."""
    np.add.at(table, rows, vals)
    return table
