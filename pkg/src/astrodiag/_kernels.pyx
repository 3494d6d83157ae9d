# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; see _kernels_py.py for the reference semantics."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def settle_order(const cnp.int64_t[:] indptr, const cnp.int64_t[:] indices,
                 Py_ssize_t start, Py_ssize_t max_hops):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef cnp.uint8_t[:] seen = np.zeros(n, dtype=np.uint8)
    cdef cnp.uint8_t[:] mark = np.zeros(n, dtype=np.uint8)
    cdef cnp.int64_t[:] order = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t lo = 0, hi = 1, count = 1, hop, a, k, u, v, w
    seen[start] = 1
    order[0] = start
    for hop in range(max_hops):
        # mark candidates, then sweep indices ascending to emit them sorted
        for a in range(lo, hi):
            u = order[a]
            for k in range(indptr[u], indptr[u + 1]):
                v = indices[k]
                if not seen[v]:
                    mark[v] = 1
        lo = hi
        for w in range(n):
            if mark[w]:
                mark[w] = 0
                seen[w] = 1
                order[count] = w
                count += 1
        hi = count
        if hi == lo:
            break
    return [int(order[a]) for a in range(count)]


def propagate(const cnp.int64_t[:] indptr, const cnp.int64_t[:] indices,
              const double[:] sims, Py_ssize_t start, double mu, Py_ssize_t max_hops):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(n, dtype=np.float64)
    cdef double[:] values = out
    cdef cnp.uint8_t[:] settled = np.zeros(n, dtype=np.uint8)
    cdef Py_ssize_t a, i, j, k
    cdef double total
    order = settle_order(indptr, indices, start, max_hops)
    values[start] = 1.0
    settled[start] = 1
    for a in range(1, len(order)):
        i = order[a]
        total = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            if settled[j]:
                total += mu * values[j] / <double>(indptr[j + 1] - indptr[j]) + sims[k]
        values[i] = total
        settled[i] = 1
    return out


def simple_paths(const cnp.int64_t[:] indptr, const cnp.int64_t[:] indices,
                 Py_ssize_t source, Py_ssize_t target, Py_ssize_t max_hops):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef cnp.uint8_t[:] on_path = np.zeros(n, dtype=np.uint8)
    cdef cnp.int64_t[:] stack = np.empty(max_hops + 1, dtype=np.int64)
    cdef cnp.int64_t[:] cursor = np.empty(max_hops + 1, dtype=np.int64)
    cdef Py_ssize_t depth = 0, u, v, k
    out = []
    if source == target:
        return out
    stack[0] = source
    cursor[0] = indptr[source]
    on_path[source] = 1
    while depth >= 0:
        u = stack[depth]
        k = cursor[depth]
        if depth >= max_hops or k >= indptr[u + 1]:
            on_path[u] = 0
            depth -= 1
            continue
        cursor[depth] = k + 1
        v = indices[k]
        if on_path[v]:
            continue
        if v == target:
            out.append(tuple([int(stack[a]) for a in range(depth + 1)]) + (int(v),))
            continue
        depth += 1
        stack[depth] = v
        cursor[depth] = indptr[v]
        on_path[v] = 1
    return out


def path_reliabilities(paths, const double[:] values):
    cdef double total
    scores = []
    for p in paths:
        total = 0.0
        for node in p:
            total += values[<Py_ssize_t>node]
        scores.append(total / (len(p) - 1))
    return scores
