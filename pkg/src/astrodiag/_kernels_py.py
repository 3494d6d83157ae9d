"""Pure-Python kernels. Semantics must stay identical to ``_kernels.pyx``.

Graphs arrive in CSR form: ``indptr`` (n+1 offsets) and ``indices`` (neighbor
indices, ascending within each row). Node index order equals sorted node-id
order, so index comparisons are lexicographic id comparisons.
"""

from __future__ import annotations

import numpy as np


def settle_order(indptr, indices, start: int, max_hops: int) -> list[int]:
    """Nodes within ``max_hops`` of ``start`` sorted by (hop distance, index)."""
    n = len(indptr) - 1
    seen = [False] * n
    seen[start] = True
    order = [start]
    frontier = [start]
    for _ in range(max_hops):
        nxt = set()
        for u in frontier:
            for k in range(indptr[u], indptr[u + 1]):
                v = int(indices[k])
                if not seen[v]:
                    nxt.add(v)
        if not nxt:
            break
        frontier = sorted(nxt)
        for v in frontier:
            seen[v] = True
        order.extend(frontier)
    return order


def propagate(indptr, indices, sims, start: int, mu: float, max_hops: int) -> np.ndarray:
    """Single-sweep resource propagation; ``sims[k]`` pairs with ``indices[k]``."""
    n = len(indptr) - 1
    values = np.zeros(n, dtype=np.float64)
    values[start] = 1.0
    settled = [False] * n
    settled[start] = True
    for i in settle_order(indptr, indices, start, max_hops)[1:]:
        total = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            j = int(indices[k])
            if settled[j]:
                total += mu * values[j] / (indptr[j + 1] - indptr[j]) + sims[k]
        values[i] = total
        settled[i] = True
    return values


def simple_paths(indptr, indices, source: int, target: int, max_hops: int) -> list[tuple[int, ...]]:
    """All simple paths source->target with at most ``max_hops`` edges, DFS order."""
    if source == target:
        return []
    out: list[tuple[int, ...]] = []
    path = [source]
    on_path = {source}

    def walk(u: int) -> None:
        if len(path) - 1 >= max_hops:
            return
        for k in range(indptr[u], indptr[u + 1]):
            v = int(indices[k])
            if v in on_path:
                continue
            if v == target:
                out.append(tuple(path) + (v,))
                continue
            path.append(v)
            on_path.add(v)
            walk(v)
            path.pop()
            on_path.discard(v)

    walk(source)
    return out


def path_reliabilities(paths, values) -> list[float]:
    scores = []
    for p in paths:
        total = 0.0
        for node in p:
            total += values[node]
        scores.append(total / (len(p) - 1))
    return scores
