"""Infeasible primal-dual interior-point method for standard-form arrowhead LPs.

The problem is ``min c^T x`` s.t. ``A x = b``, ``lb <= x <= ub``.  Every finite
lower bound carries a slack ``s = x - lb`` with dual ``z`` and every finite
upper bound a slack ``t = ub - x`` with dual ``w``, so the bound dual of the
paper is ``gamma = z - w``.  Each iteration factors the augmented matrix

    [[Sigma, A^T], [A, 0]],   Sigma = -(Z S^-1 + W T^-1),

once and reuses it for the affine predictor, the Mehrotra corrector and up to
``MAX_GONDZIO`` centrality correctors.  The linear algebra is delegated to a
KKT solver object with ``factor(sigma)`` and ``solve(rhs)`` in natural order
``(x_0..x_N, y_0..y_N, y_L)``.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .linalg import SingularMatrixError
from .problem import ArrowheadProblem, StandardArrowhead, to_standard_form

log = logging.getLogger(__name__)

STEP_FACTOR = 0.99995
MAX_GONDZIO = 3
GONDZIO_ACCEPT = 0.1
GONDZIO_LOOKAHEAD = 0.3
GONDZIO_BETA = (0.1, 10.0)
FREE_REG = 1e-10
MAX_ITER = 200
DIVERGENCE_FACTOR = 1e4
DEFAULT_TOL = 1e-6

OPTIMAL = "optimal"
MAX_ITER_STATUS = "max-iter"
NUMERICAL_FAILURE = "numerical-failure"
DIVERGED = "diverged"


class NumericalFailure(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class LpData:
    """Stacked data of a standard-form problem, built once per solve."""

    A: sp.csr_matrix
    b: np.ndarray
    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    offsets: np.ndarray
    row_offsets: np.ndarray

    @classmethod
    def from_problem(cls, problem) -> "LpData":
        if isinstance(problem, LpData):
            return problem
        p = _standard(problem).problem
        A, b = p.eq_matrix()
        lb, ub = p.lb.copy(), p.ub.copy()
        bad = np.nonzero(lb >= ub)[0]
        if bad.size:
            j = int(bad[0])
            raise ValueError(f"variable {j} has lb={lb[j]} >= ub={ub[j]}; fixed variables are not supported")
        m = [blk.m_eq for blk in p.blocks] + [p.link.m_eq]
        rows = np.concatenate([[0], np.cumsum(m)]).astype(np.int64)
        return cls(A.tocsr(), b, p.c.copy(), lb, ub, p.var_offsets(), rows)

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def m(self) -> int:
        return self.b.size

    @property
    def has_lb(self) -> np.ndarray:
        return np.isfinite(self.lb)

    @property
    def has_ub(self) -> np.ndarray:
        return np.isfinite(self.ub)


def _standard(problem) -> StandardArrowhead:
    if isinstance(problem, StandardArrowhead):
        return problem
    if isinstance(problem, ArrowheadProblem):
        return to_standard_form(problem)
    raise TypeError(f"expected an arrowhead problem, got {type(problem).__name__}")


@dataclass(eq=False)
class IterateState:
    """Primal-dual iterate.

    ``z`` and ``w`` have full length and are zero where the matching bound is
    infinite; ``lb``/``ub`` travel with the iterate so that slacks and
    ``Sigma`` can be derived from it alone.
    """

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    w: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    tau: float = 1.0
    offsets: np.ndarray | None = None

    @property
    def has_lb(self) -> np.ndarray:
        return np.isfinite(self.lb)

    @property
    def has_ub(self) -> np.ndarray:
        return np.isfinite(self.ub)

    @property
    def s(self) -> np.ndarray:
        return np.where(self.has_lb, self.x - np.where(self.has_lb, self.lb, 0.0), 0.0)

    @property
    def t(self) -> np.ndarray:
        return np.where(self.has_ub, np.where(self.has_ub, self.ub, 0.0) - self.x, 0.0)

    @property
    def gamma(self) -> np.ndarray:
        return self.z - self.w

    @property
    def num_pairs(self) -> int:
        return int(self.has_lb.sum() + self.has_ub.sum())

    def complementarity(self) -> float:
        return float(self.s @ self.z + self.t @ self.w)

    def mu(self) -> float:
        k = self.num_pairs
        return self.complementarity() / k if k else 0.0

    def is_interior(self) -> bool:
        hl, hu = self.has_lb, self.has_ub
        return bool(
            np.all(self.s[hl] > 0) and np.all(self.t[hu] > 0) and np.all(self.z[hl] > 0) and np.all(self.w[hu] > 0)
        )

    def blocks(self, v: np.ndarray | None = None) -> list[np.ndarray]:
        """Split ``x`` (or a conforming vector) per block."""
        v = self.x if v is None else v
        off = self.offsets if self.offsets is not None else np.array([0, v.size])
        return [v[off[i] : off[i + 1]] for i in range(off.size - 1)]

    def copy(self) -> "IterateState":
        return replace(self, x=self.x.copy(), y=self.y.copy(), z=self.z.copy(), w=self.w.copy())


@dataclass(frozen=True)
class Residuals:
    r_x: np.ndarray
    r_y: np.ndarray
    r_z: np.ndarray
    r_w: np.ndarray
    primal: float
    dual: float
    compl: float
    rel_primal: float
    rel_dual: float
    rel_gap: float
    gap: float
    objective: float

    @property
    def worst(self) -> float:
        return max(self.rel_primal, self.rel_dual, self.rel_gap)


def _inf(v: np.ndarray) -> float:
    return float(np.max(np.abs(v))) if v.size else 0.0


def residuals(problem, it: IterateState) -> Residuals:
    """``r_x = c - A^T y - gamma``, ``r_y = b - A x`` and ``r_gamma = tau e - X Gamma e`` split by bound."""
    d = LpData.from_problem(problem)
    r_x = d.c - d.A.T @ it.y - it.z + it.w
    r_y = d.b - d.A @ it.x
    hl, hu = it.has_lb, it.has_ub
    sz = it.s * it.z
    tw = it.t * it.w
    r_z = np.where(hl, it.tau - sz, 0.0)
    r_w = np.where(hu, it.tau - tw, 0.0)
    gap = float(sz.sum() + tw.sum())
    obj = float(d.c @ it.x)
    primal, dual = _inf(r_y), _inf(r_x)
    return Residuals(
        r_x, r_y, r_z, r_w,
        primal=primal,
        dual=dual,
        compl=max(_inf(r_z), _inf(r_w)),
        rel_primal=primal / (1.0 + _inf(d.b)),
        rel_dual=dual / (1.0 + _inf(d.c)),
        rel_gap=abs(gap) / (1.0 + abs(obj)),
        gap=gap,
        objective=obj,
    )


def assemble_sigma(it: IterateState) -> np.ndarray:
    """Stacked diagonal ``Sigma = -(z/s + w/t)``; free variables get ``-FREE_REG``."""
    hl, hu = it.has_lb, it.has_ub
    s = np.where(hl, it.s, 1.0)
    t = np.where(hu, it.t, 1.0)
    sig = -(np.where(hl, it.z / s, 0.0) + np.where(hu, it.w / t, 0.0))
    sig[~(hl | hu)] = -FREE_REG
    return sig


@dataclass(eq=False)
class Direction:
    dx: np.ndarray
    dy: np.ndarray
    dz: np.ndarray
    dw: np.ndarray

    def __add__(self, other: "Direction") -> "Direction":
        return Direction(self.dx + other.dx, self.dy + other.dy, self.dz + other.dz, self.dw + other.dw)

    @classmethod
    def zeros_like(cls, it: IterateState) -> "Direction":
        return cls(np.zeros_like(it.x), np.zeros_like(it.y), np.zeros_like(it.z), np.zeros_like(it.w))


def _ratio(v: np.ndarray, dv: np.ndarray, mask: np.ndarray) -> float:
    neg = mask & (dv < 0)
    if not neg.any():
        return np.inf
    return float(np.min(-v[neg] / dv[neg]))


def step_lengths(it: IterateState, delta: Direction) -> tuple[float, float]:
    """Fraction-to-boundary primal and dual step lengths."""
    hl, hu = it.has_lb, it.has_ub
    ap = min(_ratio(it.s, delta.dx, hl), _ratio(it.t, -delta.dx, hu))
    ad = min(_ratio(it.z, delta.dz, hl), _ratio(it.w, delta.dw, hu))
    return min(1.0, STEP_FACTOR * ap), min(1.0, STEP_FACTOR * ad)


def check_termination(res: Residuals, tol: float = DEFAULT_TOL) -> str | None:
    if res.rel_primal <= tol and res.rel_dual <= tol and res.rel_gap <= tol:
        return OPTIMAL
    return None


def _direction(kkt_solver, it: IterateState, r_x, r_y, r_z, r_w) -> Direction:
    hl, hu = it.has_lb, it.has_ub
    s = np.where(hl, it.s, 1.0)
    t = np.where(hu, it.t, 1.0)
    rhs = np.concatenate([r_x - r_z / s + r_w / t, r_y])
    sol = kkt_solver.solve(rhs)
    if not np.all(np.isfinite(sol)):
        raise NumericalFailure("KKT solve returned non-finite values")
    n = it.x.size
    dx, dy = sol[:n], sol[n:]
    dz = np.where(hl, (r_z - it.z * dx) / s, 0.0)
    dw = np.where(hu, (r_w + it.w * dx) / t, 0.0)
    return Direction(dx, dy, dz, dw)


@dataclass
class StepInfo:
    alpha_primal: float
    alpha_dual: float
    sigma: float
    mu: float
    mu_aff: float
    correctors: int
    direction: Direction = field(repr=False, default=None)


def predictor_corrector_iteration(problem, it: IterateState, kkt_solver,
                                  res: Residuals | None = None) -> tuple[IterateState, StepInfo]:
    """One Mehrotra predictor-corrector step with Gondzio correctors.

    ``kkt_solver`` must already hold the factorization for ``assemble_sigma(it)``.
    """
    res = res if res is not None else residuals(problem, it)
    hl, hu = it.has_lb, it.has_ub
    s, t = it.s, it.t
    mu = it.mu()

    aff = _direction(kkt_solver, it, res.r_x, res.r_y, np.where(hl, -s * it.z, 0.0), np.where(hu, -t * it.w, 0.0))
    ap, ad = step_lengths(it, aff)
    k = it.num_pairs
    if k:
        mu_aff = float(((s + ap * aff.dx) * (it.z + ad * aff.dz))[hl].sum()
                       + ((t - ap * aff.dx) * (it.w + ad * aff.dw))[hu].sum()) / k
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        sigma = min(sigma, 1.0)
    else:
        mu_aff, sigma = 0.0, 0.0
    target = sigma * mu

    r_z = np.where(hl, target - s * it.z - aff.dx * aff.dz, 0.0)
    r_w = np.where(hu, target - t * it.w + aff.dx * aff.dw, 0.0)
    delta = _direction(kkt_solver, it, res.r_x, res.r_y, r_z, r_w)
    ap, ad = step_lengths(it, delta)

    used = 0
    zero_x = np.zeros_like(res.r_x)
    zero_y = np.zeros_like(res.r_y)
    lo, hi = GONDZIO_BETA[0] * target, GONDZIO_BETA[1] * target
    for _ in range(MAX_GONDZIO if k and target > 0 else 0):
        if ap >= 1.0 and ad >= 1.0:
            break
        apt = min(1.0, ap + GONDZIO_LOOKAHEAD)
        adt = min(1.0, ad + GONDZIO_LOOKAHEAD)
        vz = (s + apt * delta.dx) * (it.z + adt * delta.dz)
        vw = (t - apt * delta.dx) * (it.w + adt * delta.dw)
        cz = np.where(hl, np.maximum(np.clip(vz, lo, hi) - vz, -hi), 0.0)
        cw = np.where(hu, np.maximum(np.clip(vw, lo, hi) - vw, -hi), 0.0)
        cand = delta + _direction(kkt_solver, it, zero_x, zero_y, cz, cw)
        ap2, ad2 = step_lengths(it, cand)
        if ap2 >= ap + GONDZIO_ACCEPT * (1 - ap) and ad2 >= ad + GONDZIO_ACCEPT * (1 - ad):
            delta, ap, ad = cand, ap2, ad2
            used += 1
        else:
            break

    new = it.copy()
    new.x = it.x + ap * delta.dx
    new.y = it.y + ad * delta.dy
    new.z = np.where(hl, it.z + ad * delta.dz, 0.0)
    new.w = np.where(hu, it.w + ad * delta.dw, 0.0)
    new.tau = target
    return new, StepInfo(ap, ad, sigma, mu, mu_aff, used, delta)


def starting_point(problem, kkt_solver) -> IterateState:
    """Mehrotra-style start: least-norm ``x``, least-squares ``y``, then shift into the interior."""
    d = LpData.from_problem(problem)
    n, m = d.n, d.m
    kkt_solver.factor(-np.ones(n))
    rhs = np.zeros((n + m, 2))
    rhs[n:, 0] = d.b
    rhs[:n, 1] = d.c
    sol = kkt_solver.solve(rhs)
    x = sol[:n, 0].copy()  # -x + A^T y = 0, A x = b: the least-norm solution of A x = b
    y = sol[n:, 1]
    gamma = d.c - d.A.T @ y
    hl, hu = d.has_lb, d.has_ub
    lbz = np.where(hl, d.lb, 0.0)
    ubz = np.where(hu, d.ub, 0.0)

    s = np.where(hl, x - lbz, np.inf)
    t = np.where(hu, ubz - x, np.inf)
    lo_only, up_only, box = hl & ~hu, hu & ~hl, hl & hu
    z = np.where(lo_only, gamma, 0.0) + np.where(box, np.maximum(gamma, 0.0), 0.0)
    w = np.where(up_only, -gamma, 0.0) + np.where(box, np.maximum(-gamma, 0.0), 0.0)

    slack = np.concatenate([s[hl], t[hu]])
    dual = np.concatenate([z[hl], w[hu]])
    if slack.size == 0:
        return IterateState(x, y, z, w, d.lb, d.ub, 0.0, d.offsets)
    dp = max(-1.5 * slack.min(), 0.0)
    dd = max(-1.5 * dual.min(), 0.0)
    sp_, dl_ = slack + dp, dual + dd
    prod = float(sp_ @ dl_)
    dp += 0.1 * prod / max(dl_.sum(), 1e-12)
    dd += 0.1 * prod / max(sp_.sum(), 1e-12)
    scale = max(1.0, _inf(d.b), _inf(d.c))
    dp = max(dp, 1e-2 * scale)
    dd = max(dd, 1e-2 * scale)

    x = x.copy()
    x[lo_only] = lbz[lo_only] + np.maximum(s[lo_only], 0.0) + dp
    x[up_only] = ubz[up_only] - np.maximum(t[up_only], 0.0) - dp
    width = ubz - lbz
    kap = np.minimum(dp, 0.5 * width)
    x[box] = np.clip(x[box], (lbz + kap)[box], (ubz - kap)[box])
    z = np.where(hl, z + dd, 0.0)
    w = np.where(hu, w + dd, 0.0)
    it = IterateState(x, y, z, w, d.lb, d.ub, 1.0, d.offsets)
    it.tau = it.mu()
    return it


@dataclass
class SolveReport:
    status: str
    iterations: int
    objective: float
    x: np.ndarray | None
    rel_primal: float
    rel_dual: float
    rel_gap: float
    tol: float
    times: dict = field(default_factory=dict)
    schur: dict = field(default_factory=dict)
    log: list = field(default_factory=list)
    message: str = ""
    iterate: IterateState | None = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    def summary(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k not in ("x", "log", "iterate")}
        out["record"] = "summary"
        return out

    def log_lines(self) -> list[str]:
        return [json.dumps(r, sort_keys=True) for r in self.log]


def _record(k: int, res: Residuals, info: StepInfo | None, mu: float) -> dict:
    rec = {
        "record": "iteration",
        "iter": k,
        "objective": res.objective,
        "rel_primal": res.rel_primal,
        "rel_dual": res.rel_dual,
        "rel_gap": res.rel_gap,
        "mu": mu,
    }
    if info is not None:
        rec.update(alpha_primal=info.alpha_primal, alpha_dual=info.alpha_dual, sigma=info.sigma,
                   correctors=info.correctors)
    return rec


def solve(problem, kkt_solver=None, tol: float = DEFAULT_TOL, max_iter: int = MAX_ITER,
          layers: int = 1, num_ranks: int | None = None, runtime=None,
          callback: Callable[[dict], None] | None = None) -> SolveReport:
    """Run the IPM; ``kkt_solver`` defaults to the structured Schur solver with ``layers``.

    The returned ``x`` is in the original variable space.  ``callback``
    receives every iteration record as it is produced.
    """
    if not 0 < tol < 1:
        raise ValueError("tol must lie in (0, 1)")
    std = _standard(problem)
    d = LpData.from_problem(std)
    if kkt_solver is None:
        from .schur import StructuredKktSolver

        kkt_solver = StructuredKktSolver(std, layers=layers, num_ranks=num_ranks, runtime=runtime)

    t_start = time.perf_counter()
    times = {"factor": 0.0, "solve": 0.0, "total": 0.0}
    records: list[dict] = []

    def timed_factor(sig):
        t0 = time.perf_counter()
        kkt_solver.factor(sig)
        times["factor"] += time.perf_counter() - t0

    status, message = MAX_ITER_STATUS, ""
    it = None
    res = None
    k = 0
    try:
        t0 = time.perf_counter()
        it = starting_point(d, kkt_solver)
        times["factor"] += time.perf_counter() - t0
        best = np.inf
        while True:
            res = residuals(d, it)
            rec = _record(k, res, None, it.mu())
            if check_termination(res, tol):
                status = OPTIMAL
                records.append(rec)
                if callback:
                    callback(rec)
                break
            cur = max(res.rel_primal, res.rel_dual)
            best = min(best, cur)
            if not np.isfinite(cur) or cur > DIVERGENCE_FACTOR * max(best, tol):
                status, message = DIVERGED, f"residual grew to {cur:.3e} from a minimum of {best:.3e}"
                records.append(rec)
                break
            if k >= max_iter:
                records.append(rec)
                break
            timed_factor(assemble_sigma(it))
            t1 = time.perf_counter()
            it, info = predictor_corrector_iteration(d, it, kkt_solver, res)
            times["solve"] += time.perf_counter() - t1
            rec = _record(k, res, info, info.mu)
            records.append(rec)
            if callback:
                callback(rec)
            log.debug("iter %d pobj %.10g pinf %.2e dinf %.2e gap %.2e", k, res.objective,
                      res.rel_primal, res.rel_dual, res.rel_gap)
            k += 1
    except (SingularMatrixError, NumericalFailure, np.linalg.LinAlgError, FloatingPointError) as exc:
        status, message = NUMERICAL_FAILURE, str(exc)
    except Exception as exc:  # errors raised inside the KKT solver carry their own type
        if type(exc).__name__ in ("SchurError", "RankError") and _numerical_cause(exc):
            status, message = NUMERICAL_FAILURE, str(exc)
        else:
            raise
    times["total"] = time.perf_counter() - t_start
    stats = kkt_solver.statistics() if hasattr(kkt_solver, "statistics") else {}
    if "phase_times" in stats:
        times.update({f"phase_{k2}": v for k2, v in stats["phase_times"].items()})
    x_orig = std.to_original(it.x) if it is not None else None
    return SolveReport(
        status=status,
        iterations=k,
        objective=float(d.c @ it.x) if it is not None else float("nan"),
        x=x_orig,
        rel_primal=res.rel_primal if res else float("nan"),
        rel_dual=res.rel_dual if res else float("nan"),
        rel_gap=res.rel_gap if res else float("nan"),
        tol=tol,
        times=times,
        schur={k2: v for k2, v in stats.items() if k2 != "phase_times"},
        log=records,
        message=message,
        iterate=it,
    )


def _numerical_cause(exc: BaseException) -> bool:
    seen = set()
    while exc is not None and id(exc) not in seen:
        seen.add(id(exc))
        if isinstance(exc, (SingularMatrixError, NumericalFailure, np.linalg.LinAlgError)):
            return True
        if type(exc).__name__ == "SchurError":
            return True
        exc = getattr(exc, "error", None) or exc.__cause__
    return False
