"""Brute-force dense references for testing.

Nothing here touches the Schur machinery or the sparse LDL^T kernel: the
augmented matrix is written entry by entry from the block matrices, solved
with a dense LU (partial pivoting) and fed to the same IPM loop.  Agreement
with the structured solvers is therefore evidence rather than tautology.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from . import ipm
from .problem import ArrowheadProblem, StandardArrowhead, to_standard_form

DEFAULT_CAP = 5000


class OracleError(RuntimeError):
    pass


class OrderCapExceeded(OracleError, ValueError):
    pass


class DenseSingularError(OracleError, np.linalg.LinAlgError):
    pass


@dataclass(frozen=True, eq=False)
class DenseSystem:
    """The augmented matrix ``[[diag(sigma), A^T], [A, 0]]`` in natural order.

    ``x_slices[i]`` and ``y_slices[i]`` locate block ``i``'s primal and
    dual unknowns; ``y_slices[N + 1]`` holds the linking rows.
    """

    matrix: np.ndarray
    rhs: np.ndarray | None
    x_slices: tuple[slice, ...]
    y_slices: tuple[slice, ...]

    @property
    def order(self) -> int:
        return self.matrix.shape[0]

    def with_rhs(self, b) -> "DenseSystem":
        return DenseSystem(self.matrix, np.asarray(b, dtype=float), self.x_slices, self.y_slices)


def _plain(problem) -> ArrowheadProblem:
    if isinstance(problem, StandardArrowhead):
        return problem.problem
    if not problem.is_standard:
        return to_standard_form(problem).problem
    return problem


def _put(M, r0, c0, blk, transpose=False):
    for r, c, v in zip(blk.row, blk.col, blk.val):
        if transpose:
            M[c0 + c, r0 + r] = v
        else:
            M[r0 + r, c0 + c] = v


def assemble_dense(problem, sigma, rhs=None, cap: int = DEFAULT_CAP) -> DenseSystem:
    p = _plain(problem)
    N = p.N
    n = [blk.n for blk in p.blocks]
    m = [blk.m_eq for blk in p.blocks] + [p.link.m_eq]
    order = sum(n) + sum(m)
    if order > cap:
        raise OrderCapExceeded(f"dense order {order} exceeds the oracle cap {cap}")
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (sum(n),):
        raise ValueError(f"sigma must have length {sum(n)}")

    xs, ys = [], []
    pos = 0
    for k in n:
        xs.append(slice(pos, pos + k))
        pos += k
    for k in m:
        ys.append(slice(pos, pos + k))
        pos += k

    M = np.zeros((order, order))
    for j in range(sum(n)):
        M[j, j] = sigma[j]
    for i, blk in enumerate(p.blocks):
        r0 = ys[i].start
        # A_i multiplies x_0; B_i multiplies x_i (block 0 keeps its rows in A)
        _put(M, r0, xs[0].start, blk.A)
        _put(M, r0, xs[0].start, blk.A, transpose=True)
        if i > 0:
            _put(M, r0, xs[i].start, blk.B)
            _put(M, r0, xs[i].start, blk.B, transpose=True)
        _put(M, ys[N + 1].start, xs[i].start, blk.F)
        _put(M, ys[N + 1].start, xs[i].start, blk.F, transpose=True)
    return DenseSystem(M, None if rhs is None else np.asarray(rhs, dtype=float), tuple(xs), tuple(ys))


def dense_kkt_solve(system: DenseSystem, b=None, refine: bool = True) -> np.ndarray:
    """LU solve with one step of refinement; raises ``DenseSingularError`` when singular."""
    b = system.rhs if b is None else np.asarray(b, dtype=float)
    if b is None:
        raise ValueError("no right-hand side given")
    if system.order == 0:
        return np.zeros_like(b)
    lu = _lu(system.matrix)
    return _lu_solve(lu, system.matrix, b, refine)


def _lu(M):
    try:
        with np.errstate(all="raise"), warnings.catch_warnings():
            warnings.simplefilter("error", la.LinAlgWarning)
            lu = la.lu_factor(M, check_finite=True)
    except (la.LinAlgError, la.LinAlgWarning, FloatingPointError, ValueError) as e:
        raise DenseSingularError(f"dense factorization failed: {e}") from e
    if np.any(np.diag(lu[0]) == 0.0):
        raise DenseSingularError("augmented matrix is singular")
    return lu


def _lu_solve(lu, M, b, refine):
    x = la.lu_solve(lu, b)
    if refine:
        x = x + la.lu_solve(lu, b - M @ x)
    return x


class DenseKktSolver:
    """Drop-in KKT solver for the IPM built on ``assemble_dense``."""

    def __init__(self, problem, cap: int = DEFAULT_CAP):
        self.problem = _plain(problem)
        self.cap = cap
        self.system: DenseSystem | None = None
        self._lu = None
        self.factor_count = 0
        self.solve_count = 0

    @property
    def order(self) -> int:
        return self.problem.num_vars + sum(b.m_eq for b in self.problem.blocks) + self.problem.link.m_eq

    def factor(self, sigma):
        self.system = assemble_dense(self.problem, sigma, cap=self.cap)
        self._lu = _lu(self.system.matrix)
        self.factor_count += 1
        return self

    def solve(self, rhs):
        if self._lu is None:
            raise RuntimeError("factor() must be called before solve()")
        self.solve_count += 1
        return _lu_solve(self._lu, self.system.matrix, np.asarray(rhs, dtype=float), True)

    def statistics(self) -> dict:
        return {"solver": "dense", "order": self.order}


@dataclass(frozen=True)
class OracleResult:
    objective: float
    x: np.ndarray
    iterations: int
    report: ipm.SolveReport


def dense_ipm_solve(problem, tol: float = 1e-8, max_iter: int = ipm.MAX_ITER,
                    cap: int = DEFAULT_CAP) -> OracleResult:
    """Same IPM loop on dense linear algebra; raises ``OracleError`` unless optimal."""
    std = problem if isinstance(problem, StandardArrowhead) else to_standard_form(problem)
    rep = ipm.solve(std, DenseKktSolver(std, cap), tol=tol, max_iter=max_iter)
    if rep.status != ipm.OPTIMAL:
        raise OracleError(f"dense IPM ended with status {rep.status} after {rep.iterations} iterations")
    return OracleResult(rep.objective, rep.x, rep.iterations, rep)
