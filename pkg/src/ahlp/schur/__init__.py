"""Structured KKT solvers: block form, sparsity prediction, flat and hierarchical Schur decompositions."""

from .engine import SchurError, make_plan
from .kkt import BlockKkt, KktLayout, assemble_block_kkt, layout_for
from .pattern import SchurPattern, band_bound, band_mask, observation1_bound, predict_sparsity
from .solver import (
    FlatKktSolver,
    HierarchicalKktSolver,
    StructuredFactorization,
    StructuredKktSolver,
    factor_flat,
    factor_hierarchical,
    solve_flat,
    solve_hierarchical,
)
from .tree import MAX_LAYERS, Node, SchurTree, build_hierarchy, fanout, split_even

__all__ = [
    "BlockKkt", "FlatKktSolver", "HierarchicalKktSolver", "KktLayout", "MAX_LAYERS", "Node", "SchurError",
    "SchurPattern", "SchurTree", "StructuredFactorization", "StructuredKktSolver", "assemble_block_kkt",
    "band_bound", "band_mask", "build_hierarchy", "factor_flat", "factor_hierarchical", "fanout", "layout_for",
    "make_plan", "observation1_bound", "predict_sparsity", "solve_flat", "solve_hierarchical", "split_even",
]
