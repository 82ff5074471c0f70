"""Synthetic arrowhead LPs with a planted primal-dual optimal pair.

Every equality row gets its own pivot column and rows are built in a fixed
order (block-0 rows, diagonal-block rows, 2-links, global links) where a row
may only touch pivot columns of earlier rows.  The pivot submatrix is then
triangular with a nonzero diagonal, so the equality system has full row rank
and every ``K_i`` is nonsingular.  Range rows get slacks in standard form and
need no pivot.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import ArrowheadProblem, Block, Linking, SparseBlock


class GeneratorError(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorParams:
    N: int
    block_rows: int = 4
    block_cols: int = 8
    n0: int = 0
    local_links: int | Sequence[int] = 1
    global_links: int = 0
    density: float = 0.3
    seed: int = 0
    ineq_rows: int | None = None
    m0: int = 0
    link_ineq: float = 0.0
    upper_fraction: float = 0.3
    free_fraction: float = 0.0

    def links(self) -> list[int]:
        if isinstance(self.local_links, (int, np.integer)):
            return [int(self.local_links)] * max(self.N - 1, 0)
        out = [int(v) for v in self.local_links]
        if len(out) != max(self.N - 1, 0):
            raise GeneratorError(f"need {self.N - 1} local link counts, got {len(out)}")
        return out

    @property
    def block_ineq(self) -> int:
        return self.block_rows // 4 if self.ineq_rows is None else int(self.ineq_rows)

    def check(self) -> None:
        if self.N < 1:
            raise GeneratorError("N must be at least 1")
        counts = [self.block_rows, self.block_cols, self.n0, self.global_links, self.m0, self.block_ineq]
        if min(counts) < 0 or min(self.links(), default=0) < 0:
            raise GeneratorError("all counts must be nonnegative")
        if not 0.0 < self.density <= 1.0:
            raise GeneratorError("density must lie in (0, 1]")
        if self.block_ineq > self.block_rows:
            raise GeneratorError("ineq_rows exceeds block_rows")
        if self.global_links and self.N <= 2 and self.n0 < self.m0 + self.global_links:
            # every such row pivots on its own column of x_0, after the block-0 rows
            raise GeneratorError("global links with N <= 2 need n0 >= m0 + global_links")
        for frac in (self.link_ineq, self.upper_fraction, self.free_fraction):
            if not 0.0 <= frac <= 1.0:
                raise GeneratorError("fractions must lie in [0, 1]")


@dataclass(frozen=True)
class GeneratedInstance:
    problem: ArrowheadProblem
    x_star: np.ndarray
    y_star: np.ndarray
    objective: float
    params: GeneratorParams = field(repr=False)


class _Columns:
    """Pivot bookkeeping for one variable block."""

    def __init__(self, n: int):
        self.n = n
        self.owner = np.full(n, -1, dtype=np.int64)  # row order index owning the pivot
        self.next_free = 0

    def take(self, order: int) -> int | None:
        if self.next_free >= self.n:
            return None
        col = self.next_free
        self.owner[col] = order
        self.next_free += 1
        return col

    def eligible(self, order: int) -> np.ndarray:
        """Columns a row with the given order index may touch (non-pivots and earlier pivots)."""
        return np.nonzero((self.owner < 0) | (self.owner < order))[0]


def _pick(rng, cols: np.ndarray, density: float, at_least: int = 0) -> np.ndarray:
    if cols.size == 0:
        return cols
    mask = rng.random(cols.size) < density
    if mask.sum() < at_least:
        mask[rng.choice(cols.size, size=min(at_least, cols.size), replace=False)] = True
    return cols[mask]


def _coef(rng, k: int) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=k)


def _pivot(rng) -> float:
    return float(rng.choice([-1.0, 1.0]) * rng.uniform(1.0, 2.0))


def generate(params: GeneratorParams) -> ArrowheadProblem:
    return generate_instance(params).problem


def generate_instance(params: GeneratorParams) -> GeneratedInstance:
    params.check()
    rng = np.random.default_rng(params.seed)
    N = params.N
    links = params.links()
    n = [params.n0] + [params.block_cols] * N
    cols = [_Columns(k) for k in n]
    m_ineq_blk = params.block_ineq
    m_eq_blk = params.block_rows - m_ineq_blk

    # row order: block 0, diagonal blocks, local links, global links
    order = 0
    entries: dict[str, list] = {}

    def need(block: int, what: str) -> int:
        col = cols[block].take(order)
        if col is None:
            raise GeneratorError(f"not enough columns in block {block} for {what}")
        return col

    # equality rows of block 0: A_0
    a0_rows = []
    for r in range(params.m0):
        piv = need(0, "block-0 rows")
        row = {0: [(piv, _pivot(rng))]}
        others = _pick(rng, cols[0].eligible(order), params.density)
        row[0] += [(int(c), v) for c, v in zip(others[others != piv], _coef(rng, others.size))]
        a0_rows.append(row)
        order += 1

    # equality rows of diagonal blocks: A_i x_0 + B_i x_i
    blk_rows: list[list[dict]] = [[] for _ in range(N + 1)]
    for i in range(1, N + 1):
        for r in range(m_eq_blk):
            piv = need(i, "block rows")
            row = {i: [(piv, _pivot(rng))]}
            el = cols[i].eligible(order)
            others = _pick(rng, el[el != piv], params.density)
            row[i] += [(int(c), v) for c, v in zip(others, _coef(rng, others.size))]
            x0 = _pick(rng, cols[0].eligible(order), 0.5 * params.density)
            row[0] = [(int(c), v) for c, v in zip(x0, _coef(rng, x0.size))]
            blk_rows[i].append(row)
            order += 1

    # linking rows: decide equality vs range up front
    n_local = sum(links)
    is_ineq = rng.random(n_local + params.global_links) < params.link_ineq
    link_rows: list[tuple[dict, bool]] = []
    k = 0
    for i in range(1, N):
        for _ in range(links[i - 1]):
            row: dict[int, list] = {}
            if not is_ineq[k]:
                home = i if cols[i].next_free < cols[i].n else i + 1
                piv = need(home, f"2-links between blocks {i} and {i + 1}")
                row[home] = [(piv, _pivot(rng))]
            for j in (i, i + 1):
                el = cols[j].eligible(order)
                taken = {c for c, _ in row.get(j, [])}
                el = np.array([c for c in el if c not in taken], dtype=np.int64)
                at_least = 0 if row.get(j) else 1
                if el.size == 0 and at_least:
                    raise GeneratorError(f"no columns left in block {j} for a 2-link")
                pick = _pick(rng, el, params.density, at_least=at_least)
                row.setdefault(j, []).extend((int(c), v) for c, v in zip(pick, _coef(rng, pick.size)))
            x0 = _pick(rng, cols[0].eligible(order), 0.5 * params.density)
            row[0] = [(int(c), v) for c, v in zip(x0, _coef(rng, x0.size))]
            link_rows.append((row, bool(is_ineq[k])))
            order += 1
            k += 1

    span = [1, N] if N >= 3 else []
    for g in range(params.global_links):
        row = {}
        if not is_ineq[k]:
            homes = [j for j in range(1, N + 1) if cols[j].next_free < cols[j].n] if N >= 3 else []
            home = homes[g % len(homes)] if homes else 0
            piv = need(home, "global links")
            row[home] = [(piv, _pivot(rng))]
        members = set(span)
        if N >= 3:
            members |= {j for j in range(2, N) if rng.random() < 0.5}
        for j in sorted(members):
            el = cols[j].eligible(order)
            taken = {c for c, _ in row.get(j, [])}
            el = np.array([c for c in el if c not in taken], dtype=np.int64)
            at_least = 0 if row.get(j) else 1
            if el.size == 0 and at_least:
                raise GeneratorError(f"no columns left in block {j} for a global link")
            pick = _pick(rng, el, params.density, at_least=at_least)
            row.setdefault(j, []).extend((int(c), v) for c, v in zip(pick, _coef(rng, pick.size)))
        el0 = cols[0].eligible(order)
        taken = {c for c, _ in row.get(0, [])}
        el0 = np.array([c for c in el0 if c not in taken], dtype=np.int64)
        at_least = 1 if (N < 3 and not row.get(0)) else 0
        if el0.size == 0 and at_least:
            raise GeneratorError("no linking variables left for a global link")
        x0 = _pick(rng, el0, 0.5 * params.density, at_least=at_least)
        row.setdefault(0, []).extend((int(c), v) for c, v in zip(x0, _coef(rng, x0.size)))
        link_rows.append((row, bool(is_ineq[k])))
        order += 1
        k += 1

    # range rows of diagonal blocks: C_i x_0 + D_i x_i
    ineq_rows: list[list[dict]] = [[] for _ in range(N + 1)]
    for i in range(1, N + 1):
        for _ in range(m_ineq_blk):
            pick = _pick(rng, np.arange(n[i]), params.density, at_least=1)
            x0 = _pick(rng, np.arange(n[0]), 0.5 * params.density)
            ineq_rows[i].append(
                {
                    i: [(int(c), v) for c, v in zip(pick, _coef(rng, pick.size))],
                    0: [(int(c), v) for c, v in zip(x0, _coef(rng, x0.size))],
                }
            )

    # planted primal point and bound multipliers
    pivot_cols = [c.owner >= 0 for c in cols]
    lbs, ubs, xs, gammas = [], [], [], []
    for j in range(N + 1):
        nj = n[j]
        lb = np.zeros(nj)
        ub = np.where(rng.random(nj) < params.upper_fraction, rng.uniform(5.0, 10.0, nj), np.inf)
        free = (rng.random(nj) < params.free_fraction) & ~pivot_cols[j]
        lb[free] = -np.inf
        ub[free] = np.inf
        x = rng.uniform(0.5, 3.0, nj)
        gamma = np.zeros(nj)
        status = rng.random(nj)
        at_bound = ~pivot_cols[j] & ~free & (status < 0.5)
        at_upper = at_bound & np.isfinite(ub) & (status < 0.2)
        at_lower = at_bound & ~at_upper
        x[at_lower] = lb[at_lower]
        x[at_upper] = ub[at_upper]
        gamma[at_lower] = rng.uniform(0.5, 2.0, at_lower.sum())
        gamma[at_upper] = -rng.uniform(0.5, 2.0, at_upper.sum())
        lbs.append(lb)
        ubs.append(ub)
        xs.append(x)
        gammas.append(gamma)

    def act(row: dict) -> float:
        return float(sum(v * xs[j][c] for j, items in row.items() for c, v in items))

    def ranges(acts: np.ndarray):
        lo = acts - rng.uniform(0.5, 2.0, acts.size)
        hi = acts + rng.uniform(0.5, 2.0, acts.size)
        lo[rng.random(acts.size) < 0.3] = -np.inf
        return lo, hi

    eq_links = [r for r, q in link_rows if not q]
    in_links = [r for r, q in link_rows if q]

    def sparse(rows: list[dict], block: int, ncols: int) -> SparseBlock:
        ri, ci, vi = [], [], []
        for r, row in enumerate(rows):
            for c, v in row.get(block, []):
                ri.append(r)
                ci.append(c)
                vi.append(v)
        return SparseBlock(len(rows), ncols, ri, ci, vi)

    y_blk = [rng.normal(size=params.m0)] + [rng.normal(size=m_eq_blk) for _ in range(N)]
    y_link = rng.normal(size=len(eq_links))

    blocks = []
    for j in range(N + 1):
        own = a0_rows if j == 0 else blk_rows[j]
        ineq = [] if j == 0 else ineq_rows[j]
        b = np.array([act(r) for r in own])
        acts = np.array([act(r) for r in ineq])
        d, f = ranges(acts)
        blocks.append(
            dict(
                lb=lbs[j], ub=ubs[j], b=b, d=d, f=f,
                A=sparse(own, 0, n[0]), C=sparse(ineq, 0, n[0]),
                B=None if j == 0 else sparse(own, j, n[j]),
                D=None if j == 0 else sparse(ineq, j, n[j]),
                F=sparse(eq_links, j, n[j]), G=sparse(in_links, j, n[j]),
            )
        )
    link_b = np.array([act(r) for r in eq_links])
    link_acts = np.array([act(r) for r in in_links])
    link_d, link_f = ranges(link_acts)

    # c := A^T y* + gamma* over the equality rows (range rows are inactive)
    cs = [gammas[j].copy() for j in range(N + 1)]
    for j in range(N + 1):
        spec = blocks[j]
        cs[0] += spec["A"].tocsr().T @ y_blk[j]
        if j > 0:
            cs[j] += spec["B"].tocsr().T @ y_blk[j]
        cs[j] += spec["F"].tocsr().T @ y_link

    built = tuple(Block(c=cs[j], **blocks[j]) for j in range(N + 1))
    problem = ArrowheadProblem(built, Linking(b=link_b, d=link_d, f=link_f), name=f"gen-N{N}-s{params.seed}")
    x_star = np.concatenate(xs)
    y_star = np.concatenate(y_blk + [y_link])
    return GeneratedInstance(problem, x_star, y_star, problem.objective(x_star), params)
