"""Symmetric matrix containers: lower-triangle CSC and dense."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


class DimensionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SymSparseMatrix:
    """Symmetric matrix of order ``n`` holding only its lower triangle in CSC layout."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        for name, dt in (("indptr", np.int64), ("indices", np.int64), ("data", float)):
            arr = np.asarray(getattr(self, name), dtype=dt)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.indptr.size != self.n + 1:
            raise DimensionError("indptr must have n + 1 entries")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("non-finite entry in symmetric matrix")

    @classmethod
    def from_scipy(cls, m, lower_only: bool = False) -> "SymSparseMatrix":
        """Build from a full symmetric matrix (its lower triangle is kept)."""
        m = sp.csc_matrix(m)
        if m.shape[0] != m.shape[1]:
            raise DimensionError(f"matrix is {m.shape[0]}x{m.shape[1]}, expected square")
        low = sp.tril(m, format="csc")
        low.sum_duplicates()
        low.sort_indices()
        return cls(m.shape[0], low.indptr, low.indices, low.data)

    @classmethod
    def from_dense(cls, a) -> "SymSparseMatrix":
        a = np.atleast_2d(np.asarray(a, dtype=float))
        return cls.from_scipy(sp.csc_matrix(a))

    @property
    def nnz(self) -> int:
        return int(self.data.size)

    def lower(self) -> sp.csc_matrix:
        return sp.csc_matrix((self.data, self.indices, self.indptr), shape=(self.n, self.n))

    def to_scipy(self) -> sp.csc_matrix:
        low = self.lower()
        return (low + sp.tril(low, k=-1, format="csc").T).tocsc()

    def toarray(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def matvec(self, x) -> np.ndarray:
        return self.to_scipy() @ np.asarray(x, dtype=float)

    def pattern_key(self) -> tuple:
        return (self.n, self.indptr.tobytes(), self.indices.tobytes())


@dataclass(frozen=True, eq=False)
class DenseSymMatrix:
    """Dense symmetric matrix; ``a`` is the full (symmetrized) array."""

    a: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float)) if np.size(self.a) else np.zeros((0, 0))
        if a.shape[0] != a.shape[1]:
            raise DimensionError(f"matrix is {a.shape[0]}x{a.shape[1]}, expected square")
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite entry in dense symmetric matrix")
        low = np.tril(a)
        a = low + np.tril(low, -1).T
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @property
    def n(self) -> int:
        return int(self.a.shape[0])

    def toarray(self) -> np.ndarray:
        return self.a.copy()
