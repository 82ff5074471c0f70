"""Data model for arrowhead (doubly-bordered block-diagonal) linear programs.

Block 0 owns the linking variables ``x_0``; blocks ``1..N`` are the diagonal
blocks.  For ``i >= 1`` the equality rows of block ``i`` read
``A_i x_0 + B_i x_i = b_i`` and the inequality rows ``d_i <= C_i x_0 + D_i x_i
<= f_i``.  Block 0 has only ``A_0 x_0 = b_0`` and ``d_0 <= C_0 x_0 <= f_0``.
Linking rows couple every block: ``sum_i F_i x_i = b_L`` and
``d_L <= sum_i G_i x_i <= f_L``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True, eq=False)
class SparseBlock:
    """Coordinate-format sparse matrix with canonical (row, col) ordering."""

    rows: int
    cols: int
    row: np.ndarray
    col: np.ndarray
    val: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.row, dtype=np.int64).reshape(-1)
        c = np.asarray(self.col, dtype=np.int64).reshape(-1)
        v = np.asarray(self.val, dtype=float).reshape(-1)
        if not (r.size == c.size == v.size):
            raise ValueError("row, col and val must have equal length")
        order = np.lexsort((c, r))
        for name, arr in (("row", r[order]), ("col", c[order]), ("val", v[order])):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "rows", int(self.rows))
        object.__setattr__(self, "cols", int(self.cols))

    @classmethod
    def empty(cls, rows: int, cols: int) -> "SparseBlock":
        return cls(rows, cols, np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))

    @classmethod
    def from_dense(cls, a) -> "SparseBlock":
        a = np.atleast_2d(np.asarray(a, dtype=float))
        r, c = np.nonzero(a)
        return cls(a.shape[0], a.shape[1], r, c, a[r, c])

    @classmethod
    def from_scipy(cls, m) -> "SparseBlock":
        m = sp.coo_matrix(m)
        m.sum_duplicates()
        keep = m.data != 0
        return cls(m.shape[0], m.shape[1], m.row[keep], m.col[keep], m.data[keep])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def nnz(self) -> int:
        return int(self.val.size)

    def tocsr(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.val, (self.row, self.col)), shape=self.shape)

    def toarray(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.row, self.col] = self.val
        return out

    def __eq__(self, other):
        if not isinstance(other, SparseBlock):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.row, other.row)
            and np.array_equal(self.col, other.col)
            and np.array_equal(self.val, other.val)
        )

    __hash__ = None


def _vec(v, n=None, fill=0.0) -> np.ndarray:
    if v is None:
        out = np.full(n, fill, dtype=float)
    else:
        out = np.array(v, dtype=float).reshape(-1)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Block:
    """One block of an arrowhead LP.

    For block 0, ``A``/``C`` act on ``x_0`` and ``B``/``D`` are ``None``.
    ``F``/``G`` hold this block's columns of the linking rows.
    """

    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    b: np.ndarray
    d: np.ndarray
    f: np.ndarray
    A: SparseBlock
    C: SparseBlock
    F: SparseBlock
    G: SparseBlock
    B: SparseBlock | None = None
    D: SparseBlock | None = None

    def __post_init__(self):
        for name in ("c", "lb", "ub", "b", "d", "f"):
            object.__setattr__(self, name, _vec(getattr(self, name)))

    @property
    def n(self) -> int:
        return int(self.c.size)

    @property
    def m_eq(self) -> int:
        return int(self.b.size)

    @property
    def m_ineq(self) -> int:
        return int(self.d.size)

    def __eq__(self, other):
        if not isinstance(other, Block):
            return NotImplemented
        vecs = ("c", "lb", "ub", "b", "d", "f")
        mats = ("A", "B", "C", "D", "F", "G")
        return all(np.array_equal(getattr(self, v), getattr(other, v)) for v in vecs) and all(
            getattr(self, m) == getattr(other, m) for m in mats
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Linking:
    """Right-hand sides of the linking rows."""

    b: np.ndarray
    d: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        for name in ("b", "d", "f"):
            object.__setattr__(self, name, _vec(getattr(self, name)))

    @property
    def m_eq(self) -> int:
        return int(self.b.size)

    @property
    def m_ineq(self) -> int:
        return int(self.d.size)

    def __eq__(self, other):
        if not isinstance(other, Linking):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in ("b", "d", "f"))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ArrowheadProblem:
    """An arrowhead LP: ``blocks[0]`` is the linking block, ``blocks[1:]`` the diagonal blocks."""

    blocks: tuple[Block, ...]
    link: Linking
    name: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))

    @property
    def N(self) -> int:
        return len(self.blocks) - 1

    @property
    def n(self) -> list[int]:
        return [blk.n for blk in self.blocks]

    @property
    def num_vars(self) -> int:
        return sum(self.n)

    @property
    def is_standard(self) -> bool:
        return self.link.m_ineq == 0 and all(blk.m_ineq == 0 for blk in self.blocks)

    def var_offsets(self) -> np.ndarray:
        """Start of each block's variables in the stacked ``x = (x_0, x_1, ..., x_N)``."""
        return np.concatenate([[0], np.cumsum(self.n)]).astype(np.int64)

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(np.concatenate([blk.c for blk in self.blocks]) @ x)

    @cached_property
    def c(self) -> np.ndarray:
        return np.concatenate([blk.c for blk in self.blocks])

    @cached_property
    def lb(self) -> np.ndarray:
        return np.concatenate([blk.lb for blk in self.blocks])

    @cached_property
    def ub(self) -> np.ndarray:
        return np.concatenate([blk.ub for blk in self.blocks])

    def eq_matrix(self) -> tuple[sp.csr_matrix, np.ndarray]:
        """Stacked equality rows ``(y_0, y_1, ..., y_N, y_L)`` over stacked ``x``."""
        return _stack_rows(self, "A", "B", "F", [blk.b for blk in self.blocks] + [self.link.b])

    def ineq_matrix(self) -> tuple[sp.csr_matrix, np.ndarray, np.ndarray]:
        """Stacked inequality rows with their ranges ``d <= M x <= f``."""
        mat, d = _stack_rows(self, "C", "D", "G", [blk.d for blk in self.blocks] + [self.link.d])
        f = np.concatenate([blk.f for blk in self.blocks] + [self.link.f])
        return mat, d, f

    def __eq__(self, other):
        if not isinstance(other, ArrowheadProblem):
            return NotImplemented
        return self.blocks == other.blocks and self.link == other.link

    __hash__ = None


def _stack_rows(p: ArrowheadProblem, border: str, diag: str, link: str, rhs):
    n = p.n
    rows = []
    for i, blk in enumerate(p.blocks):
        parts = [getattr(blk, border).tocsr()]
        m = getattr(blk, border).rows
        for j in range(1, p.N + 1):
            if j == i:
                parts.append(getattr(blk, diag).tocsr())
            else:
                parts.append(sp.csr_matrix((m, n[j])))
        rows.append(parts)
    rows.append([getattr(blk, link).tocsr() for blk in p.blocks])
    mat = sp.bmat(rows, format="csr")
    if mat.shape[1] != sum(n):
        mat = sp.csr_matrix(mat, shape=(mat.shape[0], sum(n)))
    return mat, np.concatenate(rhs)


@dataclass(frozen=True)
class Violation:
    block: int | str
    field: str
    message: str

    def __str__(self):
        return f"block {self.block}: {self.field}: {self.message}"


def _check_sparse(out, blk_id, name, m: SparseBlock | None, rows, cols):
    if m is None:
        out.append(Violation(blk_id, name, "missing matrix"))
        return
    if m.rows != rows or m.cols != cols:
        out.append(Violation(blk_id, name, f"declared {m.rows}x{m.cols}, expected {rows}x{cols}"))
    if m.nnz:
        if m.row.min() < 0 or m.row.max() >= m.rows:
            out.append(Violation(blk_id, name, f"row index out of range 0..{m.rows - 1}"))
        if m.col.min() < 0 or m.col.max() >= m.cols:
            bad = int(m.col[(m.col < 0) | (m.col >= m.cols)][0])
            out.append(Violation(blk_id, name, f"entry at col {bad} outside 0..{m.cols - 1}"))
        if not np.all(np.isfinite(m.val)):
            out.append(Violation(blk_id, name, "non-finite coefficient"))
        if np.any(m.val == 0):
            out.append(Violation(blk_id, name, "explicit zero coefficient"))
        key = m.row * max(m.cols, 1) + m.col
        if np.unique(key).size != key.size:
            out.append(Violation(blk_id, name, "duplicate (row, col) entry"))


def _check_range(out, blk_id, lo_name, lo, hi_name, hi):
    bad = np.nonzero(lo > hi)[0]
    if bad.size:
        out.append(Violation(blk_id, f"{lo_name}/{hi_name}", f"{lo_name} > {hi_name} at index {int(bad[0])}"))


def validate(problem: ArrowheadProblem) -> list[Violation]:
    """Collect every violated invariant; an empty list means well-formed."""
    out: list[Violation] = []
    if problem.N < 1:
        out.append(Violation("problem", "N", f"need at least one diagonal block, got {problem.N}"))
        return out
    n0 = problem.blocks[0].n
    m_le, m_li = problem.link.m_eq, problem.link.m_ineq
    if problem.link.f.size != m_li:
        out.append(Violation("link", "f", "range length mismatch"))
    else:
        _check_range(out, "link", "d", problem.link.d, "f", problem.link.f)
    for i, blk in enumerate(problem.blocks):
        n = blk.n
        for name in ("lb", "ub"):
            if getattr(blk, name).size != n:
                out.append(Violation(i, name, f"length {getattr(blk, name).size}, expected {n}"))
        if blk.lb.size == n and blk.ub.size == n:
            _check_range(out, i, "lb", blk.lb, "ub", blk.ub)
            if np.any(np.isnan(blk.lb)) or np.any(np.isnan(blk.ub)):
                out.append(Violation(i, "lb/ub", "NaN bound"))
        if not np.all(np.isfinite(blk.c)):
            out.append(Violation(i, "c", "non-finite objective coefficient"))
        if not np.all(np.isfinite(blk.b)):
            out.append(Violation(i, "b", "non-finite right-hand side"))
        if blk.f.size != blk.m_ineq:
            out.append(Violation(i, "f", "range length mismatch"))
        else:
            _check_range(out, i, "d", blk.d, "f", blk.f)
        _check_sparse(out, i, "A", blk.A, blk.m_eq, n0)
        _check_sparse(out, i, "C", blk.C, blk.m_ineq, n0)
        _check_sparse(out, i, "F", blk.F, m_le, n)
        _check_sparse(out, i, "G", blk.G, m_li, n)
        if i == 0:
            if blk.B is not None or blk.D is not None:
                out.append(Violation(0, "B/D", "block 0 has no diagonal matrices"))
        else:
            _check_sparse(out, i, "B", blk.B, blk.m_eq, n)
            _check_sparse(out, i, "D", blk.D, blk.m_ineq, n)
    return out
