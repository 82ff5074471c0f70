"""Permuted block form of the augmented system.

The augmented matrix in natural order ``(x_0..x_N, y_0..y_N, y_L)`` is
``[[diag(sigma), A^T], [A, 0]]``.  After the symmetric permutation it becomes
``[[K_1, ..., L_1], ..., [L_1^T, ..., K_0]]`` with

* ``K_i = [[Sigma_i, B_i^T], [B_i, 0]]`` over ``z_i = (x_i, y_i)``,
* the corner ``z_0 = (y_L permuted, x_0, y_0)``: linking rows grouped by
  2-link pair with the global rows last, then ``x_0`` and ``y_0``,
* ``L_i`` couples ``z_i`` to the corner: ``F_i^T`` on the linking-row
  columns (rows ``x_i``) and ``A_i`` on the ``x_0`` columns (rows ``y_i``).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from ..linalg import SymSparseMatrix
from ..problem.links import LinkClassification, classify_links


@dataclass(frozen=True, eq=False)
class KktLayout:
    """Index bookkeeping between the natural order and the block form."""

    N: int
    n: tuple[int, ...]
    m: tuple[int, ...]
    m_link: int
    cls: LinkClassification

    @cached_property
    def x_off(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.n)]).astype(np.int64)

    @cached_property
    def y_off(self) -> np.ndarray:
        return self.x_off[-1] + np.concatenate([[0], np.cumsum(self.m)]).astype(np.int64)

    @property
    def order(self) -> int:
        return int(self.y_off[-1] + self.m_link)

    @property
    def n0(self) -> int:
        return self.n[0]

    @property
    def m0(self) -> int:
        return self.m[0]

    @property
    def corner_size(self) -> int:
        return self.m_link + self.n0 + self.m0

    @cached_property
    def corner_idx(self) -> np.ndarray:
        """Natural indices of the corner unknowns in corner order."""
        links = self.y_off[-1] + self.cls.perm
        x0 = np.arange(self.x_off[0], self.x_off[1])
        y0 = np.arange(self.y_off[0], self.y_off[1])
        return np.concatenate([links, x0, y0]).astype(np.int64)

    def block_idx(self, i: int) -> np.ndarray:
        """Natural indices of ``z_i = (x_i, y_i)`` for ``i >= 1``."""
        return np.concatenate(
            [np.arange(self.x_off[i], self.x_off[i + 1]), np.arange(self.y_off[i], self.y_off[i + 1])]
        ).astype(np.int64)

    @cached_property
    def corner_is_constraint(self) -> np.ndarray:
        return np.concatenate([np.ones(self.m_link, bool), np.zeros(self.n0, bool), np.ones(self.m0, bool)])

    def block_is_constraint(self, i: int) -> np.ndarray:
        return np.concatenate([np.zeros(self.n[i], bool), np.ones(self.m[i], bool)])

    @cached_property
    def link_pos(self) -> np.ndarray:
        """Corner position of every linking row (inverse of ``cls.perm``)."""
        pos = np.empty(self.m_link, dtype=np.int64)
        pos[self.cls.perm] = np.arange(self.m_link)
        return pos

    @property
    def x0_pos(self) -> np.ndarray:
        return np.arange(self.m_link, self.m_link + self.n0)

    @property
    def y0_pos(self) -> np.ndarray:
        return np.arange(self.m_link + self.n0, self.corner_size)

    def split(self, v: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        """Natural vector (or column set) to ``([z_1..z_N], z_0)``; index 0 of the list is unused."""
        v = np.asarray(v, dtype=float)
        blocks = [np.zeros(0)] + [v[self.block_idx(i)] for i in range(1, self.N + 1)]
        return blocks, v[self.corner_idx]

    def join(self, blocks, corner) -> np.ndarray:
        shape = (self.order,) + np.shape(corner)[1:]
        out = np.zeros(shape)
        for i in range(1, self.N + 1):
            out[self.block_idx(i)] = blocks[i]
        out[self.corner_idx] = corner
        return out


def layout_for(problem, cls: LinkClassification | None = None) -> KktLayout:
    p = getattr(problem, "problem", problem)
    cls = cls if cls is not None else classify_links(p)
    return KktLayout(p.N, tuple(p.n), tuple(b.m_eq for b in p.blocks), p.link.m_eq, cls)


@dataclass(frozen=True, eq=False)
class BlockKkt:
    """The permuted augmented system for one ``sigma``.

    ``K[i]`` and ``L[i]`` are defined for ``i = 1..N`` (index 0 unused);
    ``K0`` is the dense corner matrix in corner order.
    """

    layout: KktLayout
    K: list
    L: list
    K0: np.ndarray

    @property
    def N(self) -> int:
        return self.layout.N

    def to_dense(self) -> np.ndarray:
        """Reassemble the augmented matrix in natural order (values copied, no arithmetic)."""
        lay = self.layout
        M = np.zeros((lay.order, lay.order))
        ci = lay.corner_idx
        M[np.ix_(ci, ci)] = self.K0
        for i in range(1, lay.N + 1):
            bi = lay.block_idx(i)
            M[np.ix_(bi, bi)] = self.K[i].toarray()
            Li = self.L[i].toarray()
            M[np.ix_(bi, ci)] = Li
            M[np.ix_(ci, bi)] = Li.T
        return M

    def to_permuted_dense(self) -> np.ndarray:
        """The block arrowhead form ``[[K_1, .., L_1], .., [L_1^T, .., K_0]]``."""
        lay = self.layout
        perm = np.concatenate([lay.block_idx(i) for i in range(1, lay.N + 1)] + [lay.corner_idx])
        return self.to_dense()[np.ix_(perm, perm)]


def assemble_block_kkt(problem, sigma, layout: KktLayout | None = None) -> BlockKkt:
    """Build ``K_i``, ``L_i`` and ``K_0`` from a standard-form problem and the diagonal ``sigma``."""
    p = getattr(problem, "problem", problem)
    lay = layout if layout is not None else layout_for(p)
    sigma = np.asarray(sigma, dtype=float)
    if sigma.size != lay.x_off[-1]:
        raise ValueError(f"sigma has length {sigma.size}, expected {lay.x_off[-1]}")
    if p.N != lay.N or tuple(p.n) != lay.n:
        raise ValueError("layout does not match the problem dimensions")
    link_pos = lay.link_pos
    K = [None]
    L = [None]
    for i in range(1, lay.N + 1):
        blk = p.blocks[i]
        s = sigma[lay.x_off[i] : lay.x_off[i + 1]]
        Bi = blk.B.tocsr()
        Ki = sp.bmat([[sp.diags(s), Bi.T], [Bi, None]], format="csc")
        Ki = sp.csc_matrix(Ki, shape=(lay.n[i] + lay.m[i],) * 2)
        K.append(SymSparseMatrix.from_scipy(Ki))
        Fi = blk.F
        Ai = blk.A
        rows = np.concatenate([Fi.col, lay.n[i] + Ai.row])
        cols = np.concatenate([link_pos[Fi.row], lay.m_link + Ai.col])
        vals = np.concatenate([Fi.val, Ai.val])
        L.append(sp.csr_matrix((vals, (rows, cols)), shape=(lay.n[i] + lay.m[i], lay.corner_size)))
    b0 = p.blocks[0]
    K0 = np.zeros((lay.corner_size, lay.corner_size))
    s0 = sigma[: lay.n0]
    K0[lay.x0_pos, lay.x0_pos] = s0
    F0 = b0.F
    K0[link_pos[F0.row], lay.m_link + F0.col] = F0.val
    K0[lay.m_link + F0.col, link_pos[F0.row]] = F0.val
    A0 = b0.A
    K0[lay.m_link + lay.n0 + A0.row, lay.m_link + A0.col] = A0.val
    K0[lay.m_link + A0.col, lay.m_link + lay.n0 + A0.row] = A0.val
    return BlockKkt(lay, K, L, K0)
