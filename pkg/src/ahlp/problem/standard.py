"""Conversion of range rows to equalities with bounded slack variables."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .links import GLOBAL, label_for_support, row_supports
from .model import ArrowheadProblem, Block, Linking, SparseBlock


class IllPosedError(ValueError):
    pass


@dataclass(frozen=True)
class StandardArrowhead:
    """A problem with equality rows only, plus the map back to the original.

    ``orig_n[i]`` original variables of block ``i`` come first in the
    standard block; ``slacks[i]`` names the row each appended slack belongs
    to as ``(kind, block, row)`` with kind in ``{'C', 'G'}``.
    """

    problem: ArrowheadProblem
    original: ArrowheadProblem
    orig_n: tuple[int, ...]
    slacks: tuple[tuple[tuple[str, int, int], ...], ...]

    @property
    def N(self) -> int:
        return self.problem.N

    def to_original(self, x: np.ndarray) -> np.ndarray:
        off = self.problem.var_offsets()
        return np.concatenate([x[off[i] : off[i] + k] for i, k in enumerate(self.orig_n)])

    def from_original(self, x: np.ndarray) -> np.ndarray:
        """Lift an original point by setting each slack to its row activity."""
        x = np.asarray(x, dtype=float)
        orig = self.original
        ooff = orig.var_offsets()
        xs = [x[ooff[i] : ooff[i + 1]] for i in range(orig.N + 1)]
        out = []
        for i, blk in enumerate(orig.blocks):
            parts = [xs[i]]
            for kind, j, r in self.slacks[i]:
                if kind == "C":
                    b = orig.blocks[j]
                    act = b.C.tocsr()[r] @ xs[0]
                    if j > 0:
                        act = act + b.D.tocsr()[r] @ xs[j]
                else:
                    act = sum(orig.blocks[k].G.tocsr()[r] @ xs[k] for k in range(orig.N + 1))
                parts.append(np.atleast_1d(np.asarray(act, dtype=float).reshape(-1)))
            out.append(np.concatenate(parts))
        return np.concatenate(out)


def _check_rows(d, f, where):
    free = np.nonzero(np.isneginf(d) & np.isposinf(f))[0]
    if free.size:
        raise IllPosedError(f"{where}: inequality row {int(free[0])} is free (d=-inf, f=+inf)")


def _sb(m) -> SparseBlock:
    return SparseBlock.from_scipy(m)


def to_standard_form(problem: ArrowheadProblem) -> StandardArrowhead:
    """Replace every range row ``d <= M x <= f`` by ``M x - s = 0`` with ``d <= s <= f``.

    Slacks of block rows join their block (``x_0`` for block 0).  Slacks of
    linking range rows join the first block the row touches when the row is
    a 2-link and ``x_0`` otherwise, so classification is unchanged.
    """
    N = problem.N
    blocks = problem.blocks
    link = problem.link
    for i, blk in enumerate(blocks):
        _check_rows(blk.d, blk.f, f"block {i}")
    _check_rows(link.d, link.f, "linking")

    g_support = row_supports(problem, "G")
    g_home = []
    for s in g_support:
        home = 0 if label_for_support(s, N) == GLOBAL else min(s)
        g_home.append(home)
    g_home = np.array(g_home, dtype=np.int64)

    slacks: list[list[tuple[str, int, int]]] = [[] for _ in range(N + 1)]
    for r in range(blocks[0].m_ineq):
        slacks[0].append(("C", 0, r))
    for r in np.nonzero(g_home == 0)[0]:
        slacks[0].append(("G", 0, int(r)))
    for i in range(1, N + 1):
        for r in range(blocks[i].m_ineq):
            slacks[i].append(("C", i, r))
        for r in np.nonzero(g_home == i)[0]:
            slacks[i].append(("G", i, int(r)))

    if all(not s for s in slacks):
        return StandardArrowhead(problem, problem, tuple(problem.n), tuple(() for _ in slacks))

    n0 = blocks[0].n
    n0_new = n0 + len(slacks[0])
    m_le, m_li = link.m_eq, link.m_ineq

    def widen0(m: SparseBlock) -> sp.csr_matrix:
        return sp.hstack([m.tocsr(), sp.csr_matrix((m.rows, n0_new - n0))], format="csr")

    def slack_cols(rows: int, block: int, kind: str) -> sp.csr_matrix:
        """Matrix ``rows x len(slacks[block])`` with -1 at (row, slack col) of the given kind."""
        k = len(slacks[block])
        r, c = [], []
        for col, (kd, _, row) in enumerate(slacks[block]):
            if kd == kind:
                r.append(row)
                c.append(col)
        return sp.csr_matrix((-np.ones(len(r)), (r, c)), shape=(rows, k))

    new_blocks = []
    for i, blk in enumerate(blocks):
        ns = len(slacks[i])
        s_lb = np.array([_slack_bound(problem, s, lo=True) for s in slacks[i]])
        s_ub = np.array([_slack_bound(problem, s, lo=False) for s in slacks[i]])
        if i == 0:
            A = sp.vstack(
                [
                    widen0(blk.A),
                    sp.hstack([blk.C.tocsr(), slack_cols(blk.m_ineq, 0, "C")]),
                ],
                format="csr",
            )
            c = np.concatenate([blk.c, np.zeros(ns)])
            lb = np.concatenate([blk.lb, s_lb])
            ub = np.concatenate([blk.ub, s_ub])
            b = np.concatenate([blk.b, np.zeros(blk.m_ineq)])
            F = sp.vstack(
                [widen0(blk.F), sp.hstack([blk.G.tocsr(), slack_cols(m_li, 0, "G")])],
                format="csr",
            )
            new_blocks.append(
                Block(
                    c=c, lb=lb, ub=ub, b=b, d=[], f=[],
                    A=_sb(A), C=SparseBlock.empty(0, n0_new),
                    F=_sb(F), G=SparseBlock.empty(0, n0_new),
                )
            )
            continue
        A = sp.vstack([widen0(blk.A), widen0(blk.C)], format="csr")
        B = sp.vstack(
            [
                sp.hstack([blk.B.tocsr(), sp.csr_matrix((blk.m_eq, ns))]),
                sp.hstack([blk.D.tocsr(), slack_cols(blk.m_ineq, i, "C")]),
            ],
            format="csr",
        )
        F = sp.vstack(
            [
                sp.hstack([blk.F.tocsr(), sp.csr_matrix((m_le, ns))]),
                sp.hstack([blk.G.tocsr(), slack_cols(m_li, i, "G")]),
            ],
            format="csr",
        )
        n_new = blk.n + ns
        new_blocks.append(
            Block(
                c=np.concatenate([blk.c, np.zeros(ns)]),
                lb=np.concatenate([blk.lb, s_lb]),
                ub=np.concatenate([blk.ub, s_ub]),
                b=np.concatenate([blk.b, np.zeros(blk.m_ineq)]),
                d=[], f=[],
                A=_sb(A), B=_sb(B),
                C=SparseBlock.empty(0, n0_new), D=SparseBlock.empty(0, n_new),
                F=_sb(F), G=SparseBlock.empty(0, n_new),
            )
        )
    new_link = Linking(b=np.concatenate([link.b, np.zeros(m_li)]), d=[], f=[])
    std = ArrowheadProblem(tuple(new_blocks), new_link, name=problem.name)
    return StandardArrowhead(std, problem, tuple(problem.n), tuple(tuple(s) for s in slacks))


def _slack_bound(problem: ArrowheadProblem, slack, lo: bool) -> float:
    kind, block, row = slack
    if kind == "C":
        blk = problem.blocks[block]
        return float(blk.d[row] if lo else blk.f[row])
    return float(problem.link.d[row] if lo else problem.link.f[row])
