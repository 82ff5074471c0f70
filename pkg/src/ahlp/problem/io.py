"""Reader and canonical writer for the line-oriented AHLP v1 text format.

Example (one diagonal block, no linking variables)::

    AHLP 1 N=1
    BLOCK 0 NVAR=0 MEQ=0 MINEQ=0
    BLOCK 1 NVAR=2 MEQ=1 MINEQ=0
    OBJ
    0 1
    1 2
    LB
    0 0
    1 0
    RHS_EQ
    0 1
    MAT B 1 NNZ=2
    0 0 1
    0 1 1
    LINK MEQ=0 MINEQ=0
"""

from __future__ import annotations

import io
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import ArrowheadProblem, Block, Linking, SparseBlock


class ParseError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


_VECTORS = ("OBJ", "LB", "UB", "RHS_EQ", "RANGE_INEQ")
_DEFAULT = {"OBJ": 0.0, "LB": -math.inf, "UB": math.inf, "RHS_EQ": 0.0}


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def dumps(problem: ArrowheadProblem) -> str:
    out = io.StringIO()
    w = out.write
    w(f"AHLP 1 N={problem.N}\n")

    def vec(name, values, default):
        w(f"{name}\n")
        for k, v in enumerate(values):
            if v != default or (v == 0 and math.copysign(1.0, v) < 0):
                w(f"{k} {_fmt(v)}\n")

    def ranges(d, f):
        w("RANGE_INEQ\n")
        for k, (lo, hi) in enumerate(zip(d, f)):
            if lo != 0 or hi != 0:
                w(f"{k} {_fmt(lo)} {_fmt(hi)}\n")

    for i, blk in enumerate(problem.blocks):
        w(f"BLOCK {i} NVAR={blk.n} MEQ={blk.m_eq} MINEQ={blk.m_ineq}\n")
        vec("OBJ", blk.c, 0.0)
        vec("LB", blk.lb, -math.inf)
        vec("UB", blk.ub, math.inf)
        vec("RHS_EQ", blk.b, 0.0)
        ranges(blk.d, blk.f)
        names = ("A", "C", "F", "G") if i == 0 else ("A", "B", "C", "D", "F", "G")
        for name in names:
            m: SparseBlock = getattr(blk, name)
            w(f"MAT {name} {i} NNZ={m.nnz}\n")
            for r, c, v in zip(m.row, m.col, m.val):
                w(f"{r} {c} {_fmt(v)}\n")
    w(f"LINK MEQ={problem.link.m_eq} MINEQ={problem.link.m_ineq}\n")
    vec("RHS_EQ", problem.link.b, 0.0)
    ranges(problem.link.d, problem.link.f)
    return out.getvalue()


def write_file(problem: ArrowheadProblem, path) -> None:
    Path(path).write_text(dumps(problem), encoding="utf-8")


@dataclass
class _BlockDraft:
    line: int
    n: int
    m_eq: int
    m_ineq: int
    vecs: dict = field(default_factory=dict)
    mats: dict = field(default_factory=dict)


_HEADER = re.compile(r"^AHLP\s+1\s+N=(\d+)$")
_BLOCK = re.compile(r"^BLOCK\s+(\S+)\s+NVAR=(\d+)\s+MEQ=(\d+)\s+MINEQ=(\d+)$")
_LINK = re.compile(r"^LINK\s+MEQ=(\d+)\s+MINEQ=(\d+)$")
_MAT = re.compile(r"^MAT\s+([A-Z])\s+(\S+)\s+NNZ=(\d+)$")


def _num(tok: str, line: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise ParseError(line, f"non-numeric token {tok!r}") from None


def _idx(tok: str, line: int, limit: int | None = None, what: str = "index") -> int:
    if not re.fullmatch(r"\d+", tok):
        raise ParseError(line, f"bad {what} {tok!r}")
    k = int(tok)
    if limit is not None and k >= limit:
        raise ParseError(line, f"{what} {k} out of range 0..{limit - 1}")
    return k


def loads(text: str) -> ArrowheadProblem:
    lines = [(k + 1, raw.split("#", 1)[0].strip()) for k, raw in enumerate(text.splitlines())]
    lines = [(k, s) for k, s in lines if s]
    if not lines:
        raise ParseError(1, "empty file")
    ln, first = lines[0]
    hm = _HEADER.match(first)
    if not hm:
        raise ParseError(ln, f"malformed header {first!r}, expected 'AHLP 1 N=<N>'")
    N = int(hm.group(1))

    drafts: list[_BlockDraft] = []
    link: _BlockDraft | None = None
    cur: _BlockDraft | None = None
    section: str | None = None
    mat: tuple[str, int] | None = None
    mat_left = 0

    for ln, s in lines[1:]:
        if mat_left:
            toks = s.split()
            if len(toks) != 3:
                raise ParseError(ln, f"expected '<row> <col> <value>', got {s!r}")
            entries = cur.mats[mat[0]][1]
            entries.append((ln, _idx(toks[0], ln, what="row"), _idx(toks[1], ln, what="col"), _num(toks[2], ln)))
            mat_left -= 1
            continue
        if bm := _BLOCK.match(s):
            i = _idx(bm.group(1), ln, what="block index")
            if i > N:
                raise ParseError(ln, f"BLOCK {i} exceeds declared N={N}")
            if link is not None:
                raise ParseError(ln, "BLOCK after LINK section")
            if i != len(drafts):
                raise ParseError(ln, f"expected BLOCK {len(drafts)}, got BLOCK {i}")
            cur = _BlockDraft(ln, *(int(g) for g in bm.groups()[1:]))
            drafts.append(cur)
            section = None
            continue
        if lm := _LINK.match(s):
            if link is not None:
                raise ParseError(ln, "duplicate LINK section")
            link = cur = _BlockDraft(ln, 0, int(lm.group(1)), int(lm.group(2)))
            section = None
            continue
        if mm := _MAT.match(s):
            name, i, nnz = mm.group(1), _idx(mm.group(2), ln, what="block index"), int(mm.group(3))
            if cur is None or cur is link:
                raise ParseError(ln, "MAT outside a BLOCK section")
            if i != len(drafts) - 1:
                raise ParseError(ln, f"MAT {name} {i} inside BLOCK {len(drafts) - 1}")
            allowed = "ACFG" if i == 0 else "ABCDFG"
            if name not in allowed:
                raise ParseError(ln, f"matrix {name!r} not allowed in block {i}")
            if name in cur.mats:
                raise ParseError(ln, f"duplicate MAT {name} {i}")
            cur.mats[name] = (ln, [])
            mat, mat_left, section = (name, i), nnz, None
            continue
        if s in _VECTORS:
            if cur is None:
                raise ParseError(ln, f"section {s} before any BLOCK")
            if cur is link and s not in ("RHS_EQ", "RANGE_INEQ"):
                raise ParseError(ln, f"section {s} not allowed in LINK")
            if s in cur.vecs:
                raise ParseError(ln, f"duplicate section {s}")
            cur.vecs[s] = {}
            section = s
            continue
        if section is None:
            raise ParseError(ln, f"unexpected line {s!r}")
        toks = s.split()
        limit = {"OBJ": cur.n, "LB": cur.n, "UB": cur.n, "RHS_EQ": cur.m_eq, "RANGE_INEQ": cur.m_ineq}[section]
        want = 3 if section == "RANGE_INEQ" else 2
        if len(toks) != want:
            raise ParseError(ln, f"expected {want} tokens in {section}, got {len(toks)}")
        k = _idx(toks[0], ln, limit)
        if k in cur.vecs[section]:
            raise ParseError(ln, f"duplicate index {k} in {section}")
        cur.vecs[section][k] = tuple(_num(t, ln) for t in toks[1:])

    end = lines[-1][0]
    if mat_left:
        raise ParseError(end, f"MAT {mat[0]} {mat[1]} ended with {mat_left} entries missing")
    if len(drafts) != N + 1:
        raise ParseError(end, f"declared N={N} but found {len(drafts)} BLOCK sections")
    if link is None:
        raise ParseError(end, "missing LINK section")

    n0 = drafts[0].n

    def vector(d: _BlockDraft, name: str, size: int, default: float, pos: int = 0) -> np.ndarray:
        out = np.full(size, default)
        for k, vals in d.vecs.get(name, {}).items():
            out[k] = vals[pos]
        return out

    def matrix(d: _BlockDraft, name: str, rows: int, cols: int) -> SparseBlock:
        _, entries = d.mats.get(name, (d.line, []))
        seen = set()
        for ln, r, c, v in entries:
            if r >= rows or c >= cols:
                raise ParseError(ln, f"entry ({r}, {c}) outside {name} of shape {rows}x{cols}")
            if (r, c) in seen:
                raise ParseError(ln, f"duplicate entry ({r}, {c}) in {name}")
            seen.add((r, c))
        entries = [e for e in entries if e[3] != 0]
        if not entries:
            return SparseBlock.empty(rows, cols)
        _, r, c, v = zip(*entries)
        return SparseBlock(rows, cols, r, c, v)

    blocks = []
    for i, d in enumerate(drafts):
        kw = dict(
            c=vector(d, "OBJ", d.n, 0.0),
            lb=vector(d, "LB", d.n, -math.inf),
            ub=vector(d, "UB", d.n, math.inf),
            b=vector(d, "RHS_EQ", d.m_eq, 0.0),
            d=vector(d, "RANGE_INEQ", d.m_ineq, 0.0, 0),
            f=vector(d, "RANGE_INEQ", d.m_ineq, 0.0, 1),
            A=matrix(d, "A", d.m_eq, n0),
            C=matrix(d, "C", d.m_ineq, n0),
            F=matrix(d, "F", link.m_eq, d.n),
            G=matrix(d, "G", link.m_ineq, d.n),
        )
        if i > 0:
            kw["B"] = matrix(d, "B", d.m_eq, d.n)
            kw["D"] = matrix(d, "D", d.m_ineq, d.n)
        blocks.append(Block(**kw))
    lk = Linking(
        b=vector(link, "RHS_EQ", link.m_eq, 0.0),
        d=vector(link, "RANGE_INEQ", link.m_ineq, 0.0, 0),
        f=vector(link, "RANGE_INEQ", link.m_ineq, 0.0, 1),
    )
    return ArrowheadProblem(tuple(blocks), lk)


def read_file(path) -> ArrowheadProblem:
    p = Path(path)
    prob = loads(p.read_text(encoding="utf-8"))
    return ArrowheadProblem(prob.blocks, prob.link, name=p.stem)
