"""Coarsening: combine runs of consecutive diagonal blocks into one."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .links import row_supports
from .model import ArrowheadProblem, Block, Linking, SparseBlock


def block_groups(N: int, factor: int) -> list[list[int]]:
    """Consecutive groups of ``factor`` blocks; the last group takes what is left."""
    if factor < 1:
        raise ValueError(f"merge factor must be >= 1, got {factor}")
    return [list(range(s, min(s + factor, N + 1))) for s in range(1, N + 1, factor)]


def _absorbed(supports, groups) -> tuple[np.ndarray, list[np.ndarray]]:
    """Group index of each linking row that becomes internal (-1 if it stays a link).

    A row moves only when it touches at least two old blocks, all inside one
    group, so single-block links stay put and ``factor == 1`` is the identity.
    """
    where = {j: g for g, grp in enumerate(groups) for j in grp}
    dest = np.full(len(supports), -1, dtype=np.int64)
    for r, s in enumerate(supports):
        if len(s) >= 2 and len({where[j] for j in s}) == 1:
            dest[r] = where[next(iter(s))]
    return dest, [np.nonzero(dest == g)[0] for g in range(len(groups))]


def _rows(m: SparseBlock, idx: np.ndarray) -> sp.csr_matrix:
    return m.tocsr()[idx]


def merge_blocks(problem: ArrowheadProblem, factor: int) -> ArrowheadProblem:
    """Merge every ``factor`` consecutive diagonal blocks into one.

    Variables keep their order within ``(x_0, x_1, ..., x_N)``.  Equality
    links internal to a group become ordinary equality rows of the merged
    block (appended after the old blocks' rows); inequality links become
    range rows in the same way.
    """
    groups = block_groups(problem.N, factor)
    B0 = problem.blocks[0]
    f_dest, f_in = _absorbed(row_supports(problem, "F"), groups)
    g_dest, g_in = _absorbed(row_supports(problem, "G"), groups)
    f_keep = np.nonzero(f_dest < 0)[0]
    g_keep = np.nonzero(g_dest < 0)[0]

    new_blocks = [
        Block(
            c=B0.c, lb=B0.lb, ub=B0.ub, b=B0.b, d=B0.d, f=B0.f, A=B0.A, C=B0.C,
            F=SparseBlock.from_scipy(_rows(B0.F, f_keep)),
            G=SparseBlock.from_scipy(_rows(B0.G, g_keep)),
        )
    ]
    link = problem.link
    for g, grp in enumerate(groups):
        olds = [problem.blocks[j] for j in grp]
        fi, gi = f_in[g], g_in[g]
        A = sp.vstack([b.A.tocsr() for b in olds] + [_rows(B0.F, fi)], format="csr")
        C = sp.vstack([b.C.tocsr() for b in olds] + [_rows(B0.G, gi)], format="csr")
        B = sp.vstack(
            [sp.block_diag([b.B.tocsr() for b in olds], format="csr"),
             sp.hstack([_rows(b.F, fi) for b in olds], format="csr")],
            format="csr",
        )
        D = sp.vstack(
            [sp.block_diag([b.D.tocsr() for b in olds], format="csr"),
             sp.hstack([_rows(b.G, gi) for b in olds], format="csr")],
            format="csr",
        )
        n = sum(b.n for b in olds)
        # block_diag drops the column count of 0-row blocks; force the shape
        B = sp.csr_matrix(B, shape=(B.shape[0], n))
        D = sp.csr_matrix(D, shape=(D.shape[0], n))
        new_blocks.append(
            Block(
                c=np.concatenate([b.c for b in olds]),
                lb=np.concatenate([b.lb for b in olds]),
                ub=np.concatenate([b.ub for b in olds]),
                b=np.concatenate([b.b for b in olds] + [link.b[fi]]),
                d=np.concatenate([b.d for b in olds] + [link.d[gi]]),
                f=np.concatenate([b.f for b in olds] + [link.f[gi]]),
                A=SparseBlock.from_scipy(A),
                B=SparseBlock.from_scipy(B),
                C=SparseBlock.from_scipy(C),
                D=SparseBlock.from_scipy(D),
                F=SparseBlock.from_scipy(sp.hstack([_rows(b.F, f_keep) for b in olds], format="csr")),
                G=SparseBlock.from_scipy(sp.hstack([_rows(b.G, g_keep) for b in olds], format="csr")),
            )
        )
    new_link = Linking(b=link.b[f_keep], d=link.d[g_keep], f=link.f[g_keep])
    name = f"{problem.name}-merged{factor}" if problem.name else ""
    return ArrowheadProblem(tuple(new_blocks), new_link, name=name)
