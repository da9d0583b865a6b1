# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels (see pykernels for the contracts)."""

import numpy as np

cimport numpy as cnp
from libc.stdlib cimport qsort

cnp.import_array()


cdef int _cmp_int64(const void* a, const void* b) noexcept nogil:
    cdef long long x = (<const long long*> a)[0]
    cdef long long y = (<const long long*> b)[0]
    if x < y:
        return -1
    if x > y:
        return 1
    return 0


def bfs_sequences(cnp.int64_t[:] indptr, cnp.int64_t[:] indices, int k, int max_len):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    seq_arr = np.zeros((n, max_len), dtype=np.int64)
    len_arr = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[:, :] seq = seq_arr
    cdef cnp.int64_t[:] lengths = len_arr
    visited_arr = np.full(n, -1, dtype=np.int64)
    frontier_arr = np.empty(max(n, 1), dtype=np.int64)
    nxt_arr = np.empty(max(n, 1), dtype=np.int64)
    cdef cnp.int64_t[:] visited = visited_arr
    cdef cnp.int64_t[:] frontier = frontier_arr
    cdef cnp.int64_t[:] nxt = nxt_arr
    cdef Py_ssize_t v, i, e, fi, ni, row_len, depth
    cdef cnp.int64_t u, w

    with nogil:
        for v in range(n):
            visited[v] = v
            seq[v, 0] = v
            row_len = 1
            frontier[0] = v
            fi = 1
            depth = 0
            while fi > 0 and depth < k and row_len < max_len:
                ni = 0
                for i in range(fi):
                    u = frontier[i]
                    for e in range(indptr[u], indptr[u + 1]):
                        w = indices[e]
                        if visited[w] != v:
                            visited[w] = v
                            nxt[ni] = w
                            ni += 1
                if ni > 1:
                    qsort(&nxt[0], ni, sizeof(cnp.int64_t), _cmp_int64)
                for i in range(ni):
                    if row_len >= max_len:
                        break
                    seq[v, row_len] = nxt[i]
                    row_len += 1
                for i in range(ni):
                    frontier[i] = nxt[i]
                fi = ni
                depth += 1
            lengths[v] = row_len

    return seq_arr, len_arr


def scatter_add_rows(cnp.float64_t[:, :] table, cnp.int64_t[:] rows,
                     cnp.float64_t[:, :] vals):
    cdef Py_ssize_t i, j
    cdef Py_ssize_t n = rows.shape[0]
    cdef Py_ssize_t d = table.shape[1]
    cdef cnp.int64_t r
    with nogil:
        for i in range(n):
            r = rows[i]
            for j in range(d):
                table[r, j] += vals[i, j]
    return np.asarray(table)
