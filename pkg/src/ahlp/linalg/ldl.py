"""Sparse symmetric indefinite LDL^T with 1x1 / 2x2 threshold pivoting.

The numeric phase runs right-looking elimination on a dense work buffer of
the fill-reduced matrix but only touches the rows that are structurally
nonzero in each pivot column.  Factors are stored as sparse columns (for the
forward sweep) and sparse rows (for the backward sweep).  Every solve update
is an elementwise ``y[rows] -= l * y[j]`` so a column's result does not
depend on which other columns are solved with it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .ordering import fill_reducing_order
from .symmetric import DimensionError, SymSparseMatrix

PIVOT_THRESHOLD = 0.01
REG_DEFAULT = 1e-10
REG_MAX = 1e-6
_TINY = 1e-15
_PIVOT_FLOOR = np.finfo(float).tiny


class SingularMatrixError(ArithmeticError):
    def __init__(self, pivot: int, message: str = ""):
        super().__init__(message or f"matrix is singular at pivot {pivot}")
        self.pivot = pivot


@dataclass(frozen=True)
class Inertia:
    positive: int
    negative: int
    zero: int

    def __iter__(self):
        return iter((self.positive, self.negative, self.zero))


@dataclass(frozen=True, eq=False)
class Factorization:
    """``P (K + R) P^T = L D L^T`` where ``(P K P^T)[a, b] = K[perm[a], perm[b]]``.

    ``blocks`` lists the pivot starts; ``bsize[k]`` is 1 or 2.  ``dinv`` holds
    the inverse of each pivot block as ``(a, b, c)`` for ``[[a, b], [b, c]]``.
    """

    n: int
    perm: np.ndarray
    L_csc: sp.csc_matrix
    L_csr: sp.csr_matrix
    blocks: np.ndarray
    bsize: np.ndarray
    dinv: np.ndarray
    inertia: Inertia
    reg_primal: float
    reg_dual: float
    matrix: SymSparseMatrix
    full: sp.csr_matrix = None

    def __post_init__(self):
        if self.full is None:
            object.__setattr__(self, "full", self.matrix.to_scipy().tocsr())
        Lc, Lr, F = self.L_csc, self.L_csr, self.full
        # contiguous int64/float64 arrays for the compiled sweeps
        object.__setattr__(self, "_lc", (_i64(Lc.indptr), _i64(Lc.indices), _f64(Lc.data)))
        object.__setattr__(self, "_lr", (_i64(Lr.indptr), _i64(Lr.indices), _f64(Lr.data)))
        object.__setattr__(self, "_full", (_i64(F.indptr), _i64(F.indices), _f64(F.data)))
        object.__setattr__(self, "_d", (_i64(self.blocks), _i64(self.bsize), _f64(self.dinv).reshape(-1, 3)))

    @property
    def num_2x2(self) -> int:
        return int(np.count_nonzero(self.bsize == 2))

    def solve(self, b, refine: bool = False) -> np.ndarray:
        return solve_multi(self, b, refine=refine)


def _regularization(n: int, is_constraint, eps_p: float, eps_d: float) -> np.ndarray:
    if is_constraint is None:
        return np.zeros(n)
    is_c = np.asarray(is_constraint, dtype=bool)
    if is_c.size != n:
        raise DimensionError(f"row typing has length {is_c.size}, expected {n}")
    return np.where(is_c, eps_d, -eps_p)


def factor_indefinite(
    K: SymSparseMatrix,
    reg: tuple[float, float] = (REG_DEFAULT, REG_DEFAULT),
    is_constraint=None,
    threshold: float = PIVOT_THRESHOLD,
) -> Factorization:
    """Factor ``K + R`` with ``R = -eps_p`` on variable rows and ``+eps_d`` on constraint rows.

    ``is_constraint`` marks the constraint rows; without it no regularization
    is applied.  On pivot failure both magnitudes are doubled until they
    exceed ``REG_MAX``; with ``reg == (0, 0)`` the first failure raises.
    """
    if K.n < 1:
        raise DimensionError("factor_indefinite needs order >= 1")
    eps_p, eps_d = (float(r) for r in reg)
    perm0 = fill_reducing_order(K)
    full = K.to_scipy()
    while True:
        R = _regularization(K.n, is_constraint, eps_p, eps_d)
        try:
            return _numeric(K, full, perm0, R, eps_p, eps_d, threshold)
        except SingularMatrixError:
            if is_constraint is None or (eps_p == 0 and eps_d == 0):
                raise
            eps_p, eps_d = 2 * max(eps_p, _TINY), 2 * max(eps_d, _TINY)
            if max(eps_p, eps_d) > REG_MAX:
                raise


def _swap(W, Lb, i, j, k):
    """Symmetric swap of positions ``i`` and ``j`` (both >= k) in the work buffers."""
    if i == j:
        return
    W[[i, j], :] = W[[j, i], :]
    W[:, [i, j]] = W[:, [j, i]]
    Lb[[i, j], :k] = Lb[[j, i], :k]


def _numeric(K, full, perm0, R, eps_p, eps_d, u) -> Factorization:
    n = K.n
    perm = np.array(perm0, dtype=np.int64)
    W = full[perm][:, perm].toarray()
    W[np.diag_indices(n)] += R[perm]
    tol = _PIVOT_FLOOR
    Lb = np.zeros((n, n))
    starts, sizes, dinv = [], [], []
    pos = neg = 0
    k = 0
    while k < n:
        col = np.abs(W[k + 1 :, k])
        lam = col.max(initial=0.0)
        akk = abs(W[k, k])
        size = 1
        if lam > 0 and akk < u * lam:
            r = k + 1 + int(np.argmax(col))
            other = np.abs(W[k:, r])
            other[r - k] = 0.0
            sigma = other.max(initial=0.0)
            if akk * sigma >= u * lam * lam:
                pass
            elif abs(W[r, r]) >= u * sigma:
                _swap(W, Lb, k, r, k)
                perm[[k, r]] = perm[[r, k]]
            else:
                _swap(W, Lb, k + 1, r, k)
                perm[[k + 1, r]] = perm[[r, k + 1]]
                size = 2
        if size == 1:
            d = W[k, k]
            if abs(d) <= tol or not np.isfinite(d):
                raise SingularMatrixError(int(perm[k]), f"zero pivot at row {int(perm[k])} (|d|={abs(d):.3g})")
            idx = k + 1 + np.nonzero(W[k + 1 :, k])[0]
            if idx.size:
                c = W[idx, k]
                l = c / d
                W[np.ix_(idx, idx)] -= np.multiply.outer(l, c)
                Lb[idx, k] = l
            starts.append(k)
            sizes.append(1)
            dinv.append((1.0 / d, 0.0, 0.0))
            pos += d > 0
            neg += d < 0
        else:
            a, b, c = W[k, k], W[k + 1, k], W[k + 1, k + 1]
            det = a * c - b * b
            if abs(det) <= tol or not np.isfinite(det):
                raise SingularMatrixError(int(perm[k]), f"singular 2x2 pivot at row {int(perm[k])}")
            ia, ib, ic = c / det, -b / det, a / det
            rows = W[k + 2 :, k : k + 2]
            idx = k + 2 + np.nonzero((rows[:, 0] != 0) | (rows[:, 1] != 0))[0]
            if idx.size:
                c0, c1 = W[idx, k], W[idx, k + 1]
                l0 = c0 * ia + c1 * ib
                l1 = c0 * ib + c1 * ic
                W[np.ix_(idx, idx)] -= np.multiply.outer(l0, c0) + np.multiply.outer(l1, c1)
                Lb[idx, k] = l0
                Lb[idx, k + 1] = l1
            starts.append(k)
            sizes.append(2)
            dinv.append((ia, ib, ic))
            if det < 0:
                pos += 1
                neg += 1
            elif a + c > 0:
                pos += 2
            else:
                neg += 2
        k += size
    L = sp.csc_matrix(Lb)
    L.eliminate_zeros()
    L.sort_indices()
    Lr = L.tocsr()
    Lr.sort_indices()
    perm.setflags(write=False)
    return Factorization(
        n=n,
        perm=perm,
        L_csc=L,
        L_csr=Lr,
        blocks=np.array(starts, dtype=np.int64),
        bsize=np.array(sizes, dtype=np.int64),
        dinv=np.array(dinv, dtype=float).reshape(-1, 3),
        inertia=Inertia(int(pos), int(neg), 0),
        reg_primal=eps_p if np.any(R < 0) else 0.0,
        reg_dual=eps_d if np.any(R > 0) else 0.0,
        matrix=K,
    )


def _i64(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.int64)


def _f64(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def _sweep(fact: Factorization, Y: np.ndarray) -> np.ndarray:
    return _kernels.ldl_sweep(fact.n, *fact._lc, *fact._lr, *fact._d, Y)


def solve_multi(fact: Factorization, B, refine: bool = False) -> np.ndarray:
    """Solve ``(K + R) X = B`` for a vector or a column set ``B`` (shape ``(n,)`` or ``(n, k)``).

    With ``refine`` one step of iterative refinement against ``K`` itself is
    applied.
    """
    B = np.asarray(B, dtype=float)
    vec = B.ndim == 1
    if B.shape[0] != fact.n:
        raise DimensionError(f"right-hand side has {B.shape[0]} rows, expected {fact.n}")
    B2 = np.ascontiguousarray(B.reshape(fact.n, -1))
    Y = np.ascontiguousarray(B2[fact.perm])
    Y = _sweep(fact, Y)
    X = np.empty_like(Y)
    X[fact.perm] = Y
    if refine:
        res = _kernels.residual(fact.n, *fact._full, B2, X, np.empty_like(X))
        D = _sweep(fact, np.ascontiguousarray(res[fact.perm]))
        X[fact.perm] += D
    return X[:, 0] if vec else X


def inertia(fact: Factorization) -> Inertia:
    return fact.inertia
