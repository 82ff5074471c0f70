"""Column-wise Schur complement ``S = K0 - L^T K^{-1} L`` (Alg. 1, minus sign)."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .ldl import Factorization, solve_multi
from .symmetric import DenseSymMatrix, DimensionError, SymSparseMatrix

BATCH_WIDTH = 64
DROP_TOL = 1e-12


class PatternViolation(AssertionError):
    pass


def schur_product(fact: Factorization, L, batch: int = BATCH_WIDTH, refine: bool = False) -> np.ndarray:
    """Dense ``L^T K^{-1} L`` computed over the structurally nonzero columns of ``L``."""
    L = sp.csc_matrix(L)
    if L.shape[0] != fact.n:
        raise DimensionError(f"L has {L.shape[0]} rows, K has order {fact.n}")
    m = L.shape[1]
    out = np.zeros((m, m))
    cols = np.nonzero(np.diff(L.indptr))[0]
    if cols.size == 0:
        return out
    width = max(1, min(batch, cols.size))
    Lr = L.tocsr()
    Lt = L[:, cols].T.tocsr()
    for s in range(0, cols.size, width):
        c = cols[s : s + width]
        Z = solve_multi(fact, Lr[:, c].toarray(), refine=refine)
        out[np.ix_(cols, c)] = Lt @ Z
    return 0.5 * (out + out.T)


def schur_complement(fact: Factorization, L, K0, pattern=None, batch: int = BATCH_WIDTH, refine: bool = False):
    """``S = K0 - L^T K^{-1} L``.

    ``K0`` may be a ``SymSparseMatrix``, a ``DenseSymMatrix`` or an array.
    Without ``pattern`` the result is a ``DenseSymMatrix``.  ``pattern`` is a
    boolean ``m x m`` mask (or anything with ``toarray``); entries outside it
    must be below ``DROP_TOL`` and are dropped, and a ``SymSparseMatrix`` is
    returned.
    """
    K0d = K0.toarray() if hasattr(K0, "toarray") else np.atleast_2d(np.asarray(K0, dtype=float))
    P = schur_product(fact, L, batch, refine)
    if K0d.shape != P.shape:
        raise DimensionError(f"K0 is {K0d.shape}, expected {P.shape}")
    S = K0d - P
    if pattern is None:
        return DenseSymMatrix(S)
    mask = np.asarray(pattern.toarray() if hasattr(pattern, "toarray") else pattern, dtype=bool)
    mask = mask | mask.T
    dropped = np.abs(S[~mask]).max(initial=0.0)
    if dropped > DROP_TOL:
        raise PatternViolation(f"entry of magnitude {dropped:.3g} outside the predicted pattern")
    return pattern_matrix(S, mask)


def pattern_matrix(S: np.ndarray, mask: np.ndarray) -> SymSparseMatrix:
    """Lower triangle of ``S`` on ``mask``, explicit zeros kept so the pattern is stable."""
    r, c = np.nonzero(np.tril(mask))
    order = np.lexsort((r, c))
    r, c = r[order], c[order]
    indptr = np.zeros(S.shape[0] + 1, dtype=np.int64)
    np.add.at(indptr, c + 1, 1)
    return SymSparseMatrix(S.shape[0], np.cumsum(indptr), r, S[r, c])
