"""Symmetric indefinite factorizations and the Schur complement kernel."""

from ._kernels import warmup
from .dense import DenseFactorization, dense_factor, dense_solve
from .ldl import (
    PIVOT_THRESHOLD,
    REG_DEFAULT,
    REG_MAX,
    Factorization,
    Inertia,
    SingularMatrixError,
    factor_indefinite,
    inertia,
    solve_multi,
)
from .ordering import fill_reducing_order, minimum_degree
from .schur import BATCH_WIDTH, DROP_TOL, PatternViolation, pattern_matrix, schur_complement, schur_product
from .symmetric import DenseSymMatrix, DimensionError, SymSparseMatrix

__all__ = [
    "BATCH_WIDTH", "DROP_TOL", "DenseFactorization", "DenseSymMatrix", "DimensionError", "Factorization",
    "Inertia", "PIVOT_THRESHOLD", "PatternViolation", "REG_DEFAULT", "REG_MAX", "SingularMatrixError",
    "SymSparseMatrix", "dense_factor", "dense_solve", "factor_indefinite", "fill_reducing_order", "inertia",
    "minimum_degree", "pattern_matrix", "schur_complement", "schur_product", "solve_multi", "warmup",
]
