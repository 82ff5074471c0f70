"""Fill-reducing minimum-degree ordering, cached per sparsity pattern."""

from __future__ import annotations

import threading
from collections import OrderedDict

import numpy as np

from .symmetric import SymSparseMatrix

_CACHE: "OrderedDict[tuple, np.ndarray]" = OrderedDict()
_LOCK = threading.Lock()
_CACHE_SIZE = 256


def minimum_degree(n: int, indptr: np.ndarray, indices: np.ndarray) -> np.ndarray:
    """Greedy minimum-degree elimination order of a symmetric pattern.

    Works on the explicit elimination graph with ties broken by the lowest
    index, so the result is fully deterministic.  The orders met here (block
    KKT systems and reduced systems) are small enough that the quotient-graph
    machinery of AMD buys nothing.
    """
    adj = [set() for _ in range(n)]
    for j in range(n):
        for i in indices[indptr[j] : indptr[j + 1]]:
            i = int(i)
            if i != j:
                adj[i].add(j)
                adj[j].add(i)
    alive = np.ones(n, dtype=bool)
    degree = np.array([len(a) for a in adj], dtype=np.int64)
    order = np.empty(n, dtype=np.int64)
    big = np.iinfo(np.int64).max
    for k in range(n):
        v = int(np.argmin(np.where(alive, degree, big)))
        order[k] = v
        alive[v] = False
        nbrs = adj[v]
        for u in nbrs:
            adj[u].discard(v)
            adj[u] |= nbrs
            adj[u].discard(u)
            degree[u] = len(adj[u])
        adj[v] = set()
    return order


def fill_reducing_order(K: SymSparseMatrix) -> np.ndarray:
    key = K.pattern_key()
    with _LOCK:
        hit = _CACHE.get(key)
        if hit is not None:
            _CACHE.move_to_end(key)
            return hit
    perm = minimum_degree(K.n, K.indptr, K.indices)
    perm.setflags(write=False)
    with _LOCK:
        _CACHE[key] = perm
        while len(_CACHE) > _CACHE_SIZE:
            _CACHE.popitem(last=False)
    return perm
