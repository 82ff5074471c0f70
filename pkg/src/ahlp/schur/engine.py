"""Distributed nested Schur complement factorization and solve.

Every rank runs the same program over the tree and only acts where the
assignment makes it a member.  For a node with corner unknowns ``c`` and
border ``B`` to the unknowns ``u`` of its subtree:

factor
    factor the children, form each border key's contribution
    ``B_k^T K_sub^{-1} B_k`` (Alg. 1 for blocks, a subtree solve for child
    nodes), fold the contributions in canonical key order at the node owner
    and factor ``S = K_c - sum``.
solve
    solve the children, fold ``B_k^T w_k`` to the owner, solve with ``S``,
    broadcast the corner solution and re-solve the children that touch the
    border with the updated right-hand side (Alg. 3).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..linalg import (
    Factorization,
    PatternViolation,
    SingularMatrixError,
    dense_factor,
    dense_solve,
    factor_indefinite,
    pattern_matrix,
    schur_product,
    solve_multi,
)
from ..linalg.dense import DenseFactorization
from ..linalg.schur import DROP_TOL
from ..runtime import Assignment
from .kkt import BlockKkt, KktLayout
from .pattern import SchurPattern, predict_sparsity
from .tree import Node, SchurTree

SPARSE_DENSITY_LIMIT = 0.25
# one refinement step against the unregularized matrix in every local solve
REFINE = True
# late IPM iterations legitimately produce Schur complements with rcond below eps
ROOT_RCOND_MIN = 0.0


class SchurError(ArithmeticError):
    """Factorization failure at a named place in the tree (``where``)."""

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


@dataclass(eq=False)
class NodePlan:
    node: Node
    keys: list[tuple]  # border keys in fold order
    key_set: frozenset
    sub_keys: dict[int, frozenset]  # child node id -> border keys inside that child's subtree
    nz_cols: np.ndarray  # corner columns touched by any border key
    retouch: frozenset  # children (block ids / node ids) that must be re-solved
    mask: np.ndarray | None
    storage: str  # 'dense' | 'sparse'
    is_constraint: np.ndarray
    bound: int | None
    full: bool


@dataclass(eq=False)
class Plan:
    layout: KktLayout
    tree: SchurTree
    assignment: Assignment
    nodes: dict[int, NodePlan]
    pattern: SchurPattern
    key_owner: dict[tuple, int]
    key_size: dict[tuple, int]

    def members(self, node_id: int) -> tuple[int, ...]:
        return self.assignment.members[node_id]


def _subtree_keys(node: Node) -> set:
    keys = set()
    for c in node.children:
        if isinstance(c, Node):
            keys.add(("c", c.id))
            keys |= _subtree_keys(c)
        else:
            keys.add(("b", int(c)))
    return keys


def _key_order(k):
    return (0 if k[0] == "b" else 1, k[1])


def make_plan(kkt: BlockKkt, tree: SchurTree, assignment: Assignment) -> Plan:
    """Static structure of every node, derived from one assembled system."""
    lay = kkt.layout
    pattern = predict_sparsity(lay.cls, lay.n0, lay.m0)
    owner = {("b", b): r for b, r in assignment.block_owner.items()}
    size = {("b", i): lay.n[i] + lay.m[i] for i in range(1, lay.N + 1)}
    for n in tree.nodes():
        owner[("c", n.id)] = assignment.members[n.id][0]
        size[("c", n.id)] = int(n.corner.size)
    K0_nz = kkt.K0 != 0
    nodes = {}
    for n in tree.nodes():
        cset = n.corner
        keys = []
        cols = np.zeros(cset.size, dtype=bool)
        for k in sorted(_subtree_keys(n), key=_key_order):
            if k[0] == "b":
                sub = kkt.L[k[1]][:, cset]
                touched = np.diff(sub.tocsc().indptr) > 0
            else:
                q = tree.node(k[1])
                touched = K0_nz[np.ix_(q.corner, cset)].any(axis=0)
            if touched.any():
                keys.append(k)
                cols |= touched
        key_set = frozenset(keys)
        sub_keys = {c.id: frozenset(_subtree_keys(c) | {("c", c.id)}) & key_set for c in n.child_nodes}
        retouch = set()
        for c in n.children:
            if isinstance(c, Node):
                if sub_keys[c.id]:
                    retouch.add(("c", c.id))
            elif ("b", int(c)) in key_set:
                retouch.add(("b", int(c)))
        if n.kind == "flat":
            mask = pattern.mask()
            storage = "sparse" if pattern.density < SPARSE_DENSITY_LIMIT else "dense"
            bound = pattern.bound
        elif n.kind == "root":
            mask, storage, bound = None, "dense", None
        else:
            mask, storage, bound = n.band_mask(), "sparse", n.band_bound
        nodes[n.id] = NodePlan(
            n, keys, key_set, sub_keys, np.nonzero(cols)[0], frozenset(retouch), mask, storage,
            lay.corner_is_constraint[cset], bound, bool(cset.size == lay.corner_size),
        )
    return Plan(lay, tree, assignment, nodes, pattern, owner, size)


# ---------------------------------------------------------------------------
# numeric pieces (computed on demand by the rank that needs them)


class _Pieces:
    """Border blocks of every node for one ``BlockKkt``, cached per rank."""

    def __init__(self, kkt: BlockKkt, plan: Plan):
        self.kkt = kkt
        self.plan = plan
        self._cache: dict = {}

    def border(self, node_id: int, key: tuple):
        ck = (node_id, key)
        hit = self._cache.get(ck)
        if hit is None:
            np_ = self.plan.nodes[node_id]
            corner = np_.node.corner
            if key[0] == "b":
                L = self.kkt.L[key[1]]
                hit = L if np_.full else L[:, corner]
                hit = sp.csr_matrix(hit)
            else:
                q = self.plan.tree.node(key[1])
                hit = self.kkt.K0[np.ix_(q.corner, corner)]
            self._cache[ck] = hit
        return hit

    def corner(self, node_id: int) -> np.ndarray:
        c = self.plan.nodes[node_id].node.corner
        return self.kkt.K0[np.ix_(c, c)]


@dataclass
class RankState:
    block_fact: dict = field(default_factory=dict)
    node_fact: dict = field(default_factory=dict)
    schur: dict = field(default_factory=dict)  # node id -> assembled Schur complement (owner only)
    times: dict = field(default_factory=lambda: {"factor": 0.0, "reduce": 0.0, "root": 0.0, "solve": 0.0})
    records: list = field(default_factory=list)


def _tick(st: RankState, phase: str, t0: float):
    st.times[phase] += time.perf_counter() - t0


class _Rank:
    """The per-rank view used inside one spawn."""

    def __init__(self, ctx, plan: Plan, pieces: _Pieces, state: RankState):
        self.ctx = ctx
        self.rank = ctx.rank
        self.plan = plan
        self.pieces = pieces
        self.st = state
        self.comms = {
            nid: ctx.comm(mem, name=("node", nid))
            for nid, mem in plan.assignment.members.items()
            if ctx.rank in mem
        }

    def owns(self, key) -> bool:
        return self.plan.key_owner[key] == self.rank

    def member(self, node: Node) -> bool:
        return node.id in self.comms

    # -- factor ------------------------------------------------------------

    def factor_node(self, node: Node):
        npl = self.plan.nodes[node.id]
        kkt = self.pieces.kkt
        lay = self.plan.layout
        for c in node.children:
            if isinstance(c, Node):
                if self.member(c):
                    self.factor_node(c)
            elif self.owns(("b", int(c))):
                t0 = time.perf_counter()
                try:
                    self.st.block_fact[int(c)] = factor_indefinite(kkt.K[c], is_constraint=lay.block_is_constraint(c))
                except SingularMatrixError as e:
                    raise SchurError(f"block {int(c)}", str(e)) from e
                _tick(self.st, "factor", t0)
        if node.corner.size == 0:
            return
        t0 = time.perf_counter()
        parts = {}
        for c in node.children:
            if isinstance(c, Node):
                if not self.member(c) or not npl.sub_keys[c.id]:
                    continue
                cols = npl.nz_cols
                rhs = {
                    k: np.asarray(self._dense(self.pieces.border(node.id, k))[:, cols])
                    for k in npl.sub_keys[c.id]
                    if self.owns(k)
                }
                Z = self.solve_node(c, rhs, cols.size)
                for k in npl.sub_keys[c.id]:
                    if self.owns(k):
                        Bk = self.pieces.border(node.id, k)
                        part = np.zeros((node.corner.size,) * 2)
                        part[np.ix_(cols, cols)] = self._dense(Bk)[:, cols].T @ Z[k]
                        parts[k] = part
            else:
                key = ("b", int(c))
                if key in npl.key_set and self.owns(key):
                    parts[key] = schur_product(self.st.block_fact[int(c)], self.pieces.border(node.id, key), refine=REFINE)
        _tick(self.st, "factor", t0)
        t0 = time.perf_counter()
        acc = self.comms[node.id].reduce_keyed(parts, npl.keys, root=0)
        _tick(self.st, "reduce", t0)
        if self.plan.key_owner[("c", node.id)] != self.rank:
            return
        t0 = time.perf_counter()
        S = self.pieces.corner(node.id)
        if acc is not None:
            S = S - acc
        self.st.schur[node.id] = S
        self.st.node_fact[node.id] = self._factor_corner(node, npl, S)
        _tick(self.st, "root", t0)

    @staticmethod
    def _dense(B):
        return B.toarray() if sp.issparse(B) else B

    def _factor_corner(self, node: Node, npl: NodePlan, S: np.ndarray):
        rec = {"node": node.path, "kind": node.kind, "order": int(S.shape[0]), "storage": npl.storage,
               "nnz": int(np.count_nonzero(S)), "bound": npl.bound, "members": list(self.plan.members(node.id))}
        if npl.mask is not None:
            outside = np.abs(S[~npl.mask]).max(initial=0.0)
            rec["max_dropped"] = float(outside)
            if outside > DROP_TOL:
                raise PatternViolation(f"{node.path}: entry of magnitude {outside:.3g} outside the predicted pattern")
            if node.kind == "flat":
                core = self.plan.pattern.core_size
                rec["nnz_core"] = int(np.count_nonzero(S[:core, :core]))
        self.st.records.append(rec)
        try:
            if npl.storage == "dense":
                return dense_factor(S, rcond_min=ROOT_RCOND_MIN)
            return factor_indefinite(pattern_matrix(S, npl.mask), is_constraint=npl.is_constraint)
        except SingularMatrixError as e:
            raise SchurError(node.path, f"Schur complement singular: {e}") from e

    # -- solve -------------------------------------------------------------

    def _zeros(self, key, ncols):
        return np.zeros((self.plan.key_size[key], ncols))

    def solve_children(self, node: Node, rhs: dict, ncols: int, only=None) -> dict:
        out = {}
        for c in node.children:
            if isinstance(c, Node):
                if only is not None and ("c", c.id) not in only:
                    continue
                if self.member(c):
                    out.update(self.solve_node(c, rhs, ncols))
            else:
                key = ("b", int(c))
                if only is not None and key not in only:
                    continue
                if self.owns(key):
                    t0 = time.perf_counter()
                    r = rhs.get(key)
                    out[key] = self._zeros(key, ncols) if r is None else solve_multi(self.st.block_fact[int(c)], r, refine=REFINE)
                    _tick(self.st, "solve", t0)
        return out

    def solve_node(self, node: Node, rhs: dict, ncols: int) -> dict:
        npl = self.plan.nodes[node.id]
        w = self.solve_children(node, rhs, ncols)
        if node.corner.size == 0:
            return w
        parts = {}
        t0 = time.perf_counter()
        for k in npl.keys:
            if self.owns(k):
                parts[k] = self.pieces.border(node.id, k).T @ w[k]
        _tick(self.st, "solve", t0)
        t0 = time.perf_counter()
        comm = self.comms[node.id]
        acc = comm.reduce_keyed(parts, npl.keys, root=0)
        _tick(self.st, "reduce", t0)
        me = ("c", node.id)
        dc = None
        if self.owns(me):
            t0 = time.perf_counter()
            rc = rhs.get(me)
            rc = self._zeros(me, ncols) if rc is None else rc
            if acc is not None:
                rc = rc - acc
            f = self.st.node_fact[node.id]
            dc = dense_solve(f, rc) if isinstance(f, DenseFactorization) else solve_multi(f, rc, refine=REFINE)
            _tick(self.st, "root", t0)
        t0 = time.perf_counter()
        dc = comm.bcast(dc, root=0)
        _tick(self.st, "reduce", t0)
        if not npl.retouch:
            if self.owns(me):
                w[me] = dc
            return w
        rhs2 = dict(rhs)
        for k in npl.keys:
            if self.owns(k):
                r = rhs.get(k)
                r = self._zeros(k, ncols) if r is None else r
                rhs2[k] = r - self.pieces.border(node.id, k) @ dc
        w.update(self.solve_children(node, rhs2, ncols, only=npl.retouch))
        if self.owns(me):
            w[me] = dc
        return w


def factor_program(ctx, plan: Plan, kkt: BlockKkt):
    st: RankState = ctx.state["rank"]
    st.block_fact.clear()
    st.node_fact.clear()
    st.schur.clear()
    st.records.clear()
    pieces = _Pieces(kkt, plan)
    ctx.state["pieces"] = pieces
    _Rank(ctx, plan, pieces, st).factor_node(plan.tree.root)
    return list(st.records)


def solve_program(ctx, plan: Plan, rhs: np.ndarray):
    st: RankState = ctx.state["rank"]
    r = _Rank(ctx, plan, ctx.state["pieces"], st)
    lay = plan.layout
    ncols = rhs.shape[1]
    local = {}
    for key, owner in plan.key_owner.items():
        if owner != ctx.rank:
            continue
        if key[0] == "b":
            local[key] = rhs[lay.block_idx(key[1])]
        else:
            node = plan.nodes[key[1]].node
            if node.corner.size:
                local[key] = rhs[lay.corner_idx[node.corner]]
    out = r.solve_node(plan.tree.root, local, ncols)
    return out
