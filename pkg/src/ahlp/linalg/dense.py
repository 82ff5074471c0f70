"""Dense symmetric indefinite factorization (LAPACK ``sytrf``)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack

from .ldl import SingularMatrixError
from .symmetric import DenseSymMatrix, DimensionError


@dataclass(frozen=True, eq=False)
class DenseFactorization:
    n: int
    lu: np.ndarray
    ipiv: np.ndarray
    rcond: float


def dense_factor(M, rcond_min: float = np.finfo(float).eps) -> DenseFactorization:
    a = M.a if isinstance(M, DenseSymMatrix) else DenseSymMatrix(M).a
    n = a.shape[0]
    if n == 0:
        return DenseFactorization(0, np.zeros((0, 0)), np.zeros(0, np.int32), 1.0)
    lu, ipiv, info = lapack.dsytrf(a, lower=1)
    if info > 0:
        raise SingularMatrixError(info - 1, f"dense matrix is singular at pivot {info - 1}")
    if info < 0:
        raise ValueError(f"dsytrf argument {-info} invalid")
    anorm = np.abs(a).sum(axis=0).max()
    rcond, info = lapack.dsycon(lu, ipiv, anorm, lower=1)
    if info != 0 or not rcond > rcond_min:
        raise SingularMatrixError(-1, f"dense matrix is numerically singular (rcond={rcond:.3g})")
    return DenseFactorization(n, lu, ipiv, float(rcond))


def dense_solve(f: DenseFactorization, b) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.shape[0] != f.n:
        raise DimensionError(f"right-hand side has {b.shape[0]} rows, expected {f.n}")
    if f.n == 0:
        return np.zeros(b.shape)
    x, info = lapack.dsytrs(f.lu, f.ipiv, b, lower=1)
    if info != 0:
        raise ValueError(f"dsytrs failed with info={info}")
    return x
