"""KKT solvers built on the distributed Schur engine."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..runtime import Runtime, assign
from .engine import Plan, RankState, factor_program, make_plan, solve_program
from .kkt import BlockKkt, KktLayout, assemble_block_kkt, layout_for
from .tree import SchurTree, build_hierarchy


@dataclass(eq=False)
class StructuredFactorization:
    plan: Plan
    kkt: BlockKkt
    runtime: Runtime
    states: list
    records: list = field(default_factory=list)
    factor_time: float = 0.0

    @property
    def num_ranks(self) -> int:
        return self.plan.assignment.num_ranks

    def phase_times(self) -> dict:
        out = {"factor": 0.0, "reduce": 0.0, "root": 0.0, "solve": 0.0}
        for s in self.states:
            for k, v in s["rank"].times.items():
                out[k] += v
        return out

    def schur_matrices(self) -> dict[str, np.ndarray]:
        """Assembled Schur complement of every node with a corner, keyed by node path."""
        out = {}
        for st in self.states:
            for nid, S in st["rank"].schur.items():
                out[self.plan.nodes[nid].node.path] = S
        return out

    def root_matrix_record(self) -> dict | None:
        return next((r for r in self.records if r["node"] in ("flat", "root")), None)


def _factor(kkt: BlockKkt, tree: SchurTree, runtime: Runtime | None, num_ranks: int | None,
            plan: Plan | None = None, states=None) -> StructuredFactorization:
    runtime = runtime or Runtime()
    if plan is None:
        R = num_ranks or kkt.N
        plan = make_plan(kkt, tree, assign(tree, R))
    R = plan.assignment.num_ranks
    if states is None:
        states = [{"rank": RankState()} for _ in range(R)]
    t0 = time.perf_counter()
    recs = runtime.spawn(R, factor_program, plan, kkt, states=states)
    fact = StructuredFactorization(plan, kkt, runtime, states, [r for rs in recs for r in rs])
    fact.factor_time = time.perf_counter() - t0
    return fact


def _solve(fact: StructuredFactorization, b) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    vec = b.ndim == 1
    lay = fact.plan.layout
    if b.shape[0] != lay.order:
        raise ValueError(f"right-hand side has {b.shape[0]} rows, expected {lay.order}")
    B = b.reshape(lay.order, -1)
    outs = fact.runtime.spawn(fact.num_ranks, solve_program, fact.plan, B, states=fact.states)
    X = np.zeros_like(B)
    for out in outs:
        for key, val in out.items():
            if key[0] == "b":
                X[lay.block_idx(key[1])] = val
            else:
                node = fact.plan.nodes[key[1]].node
                X[lay.corner_idx[node.corner]] = val
    return X[:, 0] if vec else X


def factor_flat(kkt: BlockKkt, runtime: Runtime | None = None, num_ranks: int | None = None) -> StructuredFactorization:
    """Alg. 2 over ``num_ranks`` ranks (default one rank per block)."""
    return _factor(kkt, build_hierarchy(kkt.layout, 1), runtime, num_ranks)


def solve_flat(fact: StructuredFactorization, b) -> np.ndarray:
    """Alg. 3 for a vector or column set in natural order."""
    return _solve(fact, b)


def factor_hierarchical(kkt: BlockKkt, tree: SchurTree, runtime: Runtime | None = None,
                        num_ranks: int | None = None) -> StructuredFactorization:
    return _factor(kkt, tree, runtime, num_ranks)


def solve_hierarchical(fact: StructuredFactorization, b) -> np.ndarray:
    return _solve(fact, b)


class StructuredKktSolver:
    """Factor/solve interface used by the IPM; natural order ``(x, y_0..y_N, y_L)``.

    ``layers == 1`` is the flat decomposition; more layers build the
    hierarchical tree.  The plan (tree, assignment, border structure) is
    computed on the first factorization and reused afterwards.
    """

    def __init__(self, problem, layers: int = 1, num_ranks: int | None = None,
                 runtime: Runtime | None = None, partition="auto"):
        self.problem = getattr(problem, "problem", problem)
        self.layout: KktLayout = layout_for(self.problem)
        self.tree = build_hierarchy(self.layout, layers, partition)
        self.layers = layers
        self.num_ranks = min(num_ranks or self.layout.N, self.layout.N)
        self.runtime = runtime or Runtime()
        self.assignment = assign(self.tree, self.num_ranks)
        self.plan: Plan | None = None
        self.states = [{"rank": RankState()} for _ in range(self.num_ranks)]
        self.fact: StructuredFactorization | None = None
        self.factor_count = 0
        self.solve_count = 0
        self.solve_time = 0.0
        self.factor_time = 0.0

    @property
    def order(self) -> int:
        return self.layout.order

    def factor(self, sigma):
        kkt = assemble_block_kkt(self.problem, sigma, self.layout)
        if self.plan is None:
            self.plan = make_plan(kkt, self.tree, self.assignment)
        self.fact = _factor(kkt, self.tree, self.runtime, self.num_ranks, self.plan, self.states)
        self.factor_count += 1
        self.factor_time += self.fact.factor_time
        return self

    def solve(self, rhs):
        if self.fact is None:
            raise RuntimeError("factor() must be called before solve()")
        t0 = time.perf_counter()
        out = _solve(self.fact, rhs)
        self.solve_time += time.perf_counter() - t0
        self.solve_count += 1
        return out

    def statistics(self) -> dict:
        recs = self.fact.records if self.fact else []
        return {
            "layers": self.layers,
            "tree_levels": self.tree.layers,
            "ranks": self.num_ranks,
            "tree": self.tree.describe(),
            "nodes": recs,
            "phase_times": self.fact.phase_times() if self.fact else {},
            "factor_time": self.factor_time,
            "solve_time": self.solve_time,
        }


class FlatKktSolver(StructuredKktSolver):
    def __init__(self, problem, num_ranks=None, runtime=None):
        super().__init__(problem, 1, num_ranks, runtime)


class HierarchicalKktSolver(StructuredKktSolver):
    def __init__(self, problem, layers: int = 2, num_ranks=None, runtime=None, partition="auto"):
        super().__init__(problem, layers, num_ranks, runtime, partition)
