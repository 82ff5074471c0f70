"""Command-line front end: ``ahlp generate | inspect | solve | bench``.

Exit codes: 0 optimal (or success), 1 ``--check`` disagreement,
2 nonconvergence, 3 numerical failure, 64 usage or input error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import __version__, ipm
from .problem import (
    GeneratorError,
    GeneratorParams,
    ParseError,
    dumps,
    generate_instance,
    read_file,
    to_standard_form,
    validate,
)
from .linalg import warmup
from .runtime import Runtime, default_workers
from .schur import StructuredKktSolver, build_hierarchy, layout_for, predict_sparsity
from .schur.pattern import band_bound

EXIT_OK = 0
EXIT_CHECK = 1
EXIT_NONCONVERGED = 2
EXIT_NUMERICAL = 3
EXIT_USAGE = 64

CSV_FIELDS = ("ranks", "layers", "workers", "factor_time", "solve_time", "total_time", "iterations",
              "status", "objective", "speedup")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    input: str
    tol: float = ipm.DEFAULT_TOL
    max_iter: int = ipm.MAX_ITER
    layers: int = 1
    partition: str | tuple[int, ...] = "auto"
    ranks: int | None = None
    workers: int = 1
    deterministic: bool = True
    check: bool = False
    json: bool = False

    def validate(self) -> None:
        if not 0.0 < self.tol < 1.0:
            raise UsageError("--tol must lie in (0, 1)")
        if not 1 <= self.layers <= 4:
            raise UsageError("--layers must lie in 1..4")
        if self.ranks is not None and self.ranks < 1:
            raise UsageError("--ranks must be >= 1")
        if self.max_iter < 1:
            raise UsageError("--max-iter must be >= 1")
        if self.workers < 1:
            raise UsageError("--workers must be >= 1")


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma separated list of integers, got {text!r}") from None


def _partition(text: str):
    if text in ("auto", "weighted"):
        return text
    cuts = _int_list(text)
    if not cuts:
        raise argparse.ArgumentTypeError("empty partition")
    return tuple(cuts)


def _workers(cli_value: int | None) -> int:
    env = os.environ.get("AHLP_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"AHLP_WORKERS must be an integer, got {env!r}") from None
    return cli_value if cli_value is not None else default_workers()


def _load(path: str):
    try:
        problem = read_file(path)
    except ParseError as e:
        raise UsageError(f"{path}:{e.line}: {e.message}") from e
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror or e}") from e
    bad = validate(problem)
    if bad:
        raise UsageError(f"{path}: invalid problem: {bad[0]}")
    return problem


def _fmt(v) -> str:
    return f"{v:.6g}" if isinstance(v, float) else str(v)


def _table(rows: Sequence[dict], cols: Sequence[str], out) -> None:
    text = [[_fmt(r.get(c, "")) for c in cols] for r in rows]
    width = [max(len(c), *(len(t[j]) for t in text)) if text else len(c) for j, c in enumerate(cols)]
    out.write("  ".join(c.rjust(w) for c, w in zip(cols, width)) + "\n")
    for t in text:
        out.write("  ".join(v.rjust(w) for v, w in zip(t, width)) + "\n")


# ---------------------------------------------------------------------------
# generate


def cmd_generate(args) -> int:
    params = GeneratorParams(
        N=args.blocks,
        block_rows=args.block_rows,
        block_cols=args.block_cols,
        n0=args.n0,
        local_links=args.local_links[0] if len(args.local_links) == 1 else tuple(args.local_links),
        global_links=args.global_links,
        density=args.density,
        seed=args.seed,
        ineq_rows=args.ineq_rows,
        m0=args.m0,
        link_ineq=args.link_ineq,
        upper_fraction=args.upper_fraction,
        free_fraction=args.free_fraction,
    )
    try:
        inst = generate_instance(params)
    except GeneratorError as e:
        raise UsageError(str(e)) from e
    text = dumps(inst.problem)
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.output, "w") as fh:
            fh.write(text)
    sys.stderr.write(f"planted objective {inst.objective!r}\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# inspect


def structure_report(problem, layers: int = 2, partition="auto") -> dict:
    std = to_standard_form(problem)
    lay = layout_for(std)
    cls = lay.cls  # slacks join the block the row already touches, so counts match the original rows
    pattern = predict_sparsity(lay.cls, lay.n0, lay.m0)
    hist: dict[int, int] = {}
    for v in cls.counts:
        hist[int(v)] = hist.get(int(v), 0) + 1
    tree = build_hierarchy(lay, max(layers, 2), partition) if problem.N >= 1 else None
    return {
        "name": problem.name,
        "N": problem.N,
        "n": [int(v) for v in problem.n],
        "m_eq": [b.m_eq for b in problem.blocks],
        "m_ineq": [b.m_ineq for b in problem.blocks],
        "m_link": [problem.link.m_eq, problem.link.m_ineq],
        "l": [int(v) for v in cls.counts],
        "l_histogram": {str(k): v for k, v in sorted(hist.items())},
        "m_global": int(cls.m_global),
        "n0": int(problem.blocks[0].n),
        "n0_standard": int(lay.n0),
        "flat_schur_order": int(pattern.size),
        "flat_schur_bound": int(pattern.bound),
        "band_bound": int(band_bound(cls.counts)) if len(cls.counts) else 0,
        "hierarchy": tree.describe() if tree else "",
    }


def cmd_inspect(args) -> int:
    problem = _load(args.input)
    rep = structure_report(problem, args.layers, args.partition)
    if args.json:
        print(json.dumps(rep, sort_keys=True))
        return EXIT_OK
    out = sys.stdout
    out.write(f"instance            {rep['name']}\n")
    out.write(f"blocks N            {rep['N']}\n")
    out.write(f"block columns       {' '.join(map(str, rep['n']))}\n")
    out.write(f"equality rows       {' '.join(map(str, rep['m_eq']))} | link {rep['m_link'][0]}\n")
    out.write(f"inequality rows     {' '.join(map(str, rep['m_ineq']))} | link {rep['m_link'][1]}\n")
    out.write(f"2-links l_i         {' '.join(map(str, rep['l'])) or '-'}\n")
    out.write(f"l_i histogram       {', '.join(f'{k}:{v}' for k, v in rep['l_histogram'].items()) or '-'}\n")
    out.write(f"global links m_F    {rep['m_global']}\n")
    out.write(f"linking vars n_0    {rep['n0']} (standard form {rep['n0_standard']})\n")
    out.write(f"flat Schur order    {rep['flat_schur_order']}\n")
    out.write(f"flat Schur bound    {rep['flat_schur_bound']}\n")
    out.write(f"inner band bound    {rep['band_bound']}\n")
    out.write(f"hierarchy           {rep['hierarchy']}\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# solve


def _exit_for(status: str) -> int:
    if status == ipm.OPTIMAL:
        return EXIT_OK
    if status == ipm.NUMERICAL_FAILURE:
        return EXIT_NUMERICAL
    return EXIT_NONCONVERGED


def _config(args) -> RunConfig:
    cfg = RunConfig(
        input=args.input,
        tol=args.tol,
        max_iter=args.max_iter,
        layers=args.layers,
        partition=args.partition,
        ranks=args.ranks,
        workers=_workers(args.workers),
        deterministic=args.deterministic,
        check=getattr(args, "check", False),
        json=getattr(args, "json", False),
    )
    cfg.validate()
    return cfg


def run_solve(cfg: RunConfig, problem, callback=None, runtime=None) -> ipm.SolveReport:
    std = to_standard_form(problem)
    ranks = cfg.ranks or problem.N
    if ranks > problem.N:
        raise UsageError(f"--ranks {ranks} exceeds the number of blocks {problem.N}")
    runtime = runtime or Runtime(cfg.workers, cfg.deterministic)
    try:
        solver = StructuredKktSolver(std, cfg.layers, ranks, runtime, cfg.partition)
    except ValueError as e:
        raise UsageError(str(e)) from e
    return ipm.solve(std, solver, tol=cfg.tol, max_iter=cfg.max_iter, callback=callback)


def cmd_solve(args) -> int:
    cfg = _config(args)
    problem = _load(cfg.input)
    emit = (lambda rec: print(json.dumps(rec, sort_keys=True), flush=True)) if cfg.json else None
    rep = run_solve(cfg, problem, emit)
    summary = rep.summary()
    code = _exit_for(rep.status)
    if cfg.check:
        from .oracle import OracleError, dense_ipm_solve

        try:
            ref = dense_ipm_solve(problem).objective
            rel = abs(rep.objective - ref) / max(1.0, abs(ref))
            summary["check"] = {"oracle_objective": ref, "rel_diff": rel, "passed": bool(rel <= 1e-6)}
        except OracleError as e:
            summary["check"] = {"error": str(e), "passed": False}
        if code == EXIT_OK and not summary["check"]["passed"]:
            code = EXIT_CHECK
    if args.output and rep.x is not None:
        np.savetxt(args.output, rep.x, fmt="%.17g")
    if cfg.json:
        print(json.dumps(summary, sort_keys=True, default=_jsonable))
        return code
    out = sys.stdout
    _table(rep.log, ["iter", "objective", "rel_primal", "rel_dual", "rel_gap", "alpha_primal", "alpha_dual",
                     "correctors"], out)
    out.write(f"\nstatus       {rep.status}\n")
    if rep.message:
        out.write(f"message      {rep.message}\n")
    out.write(f"iterations   {rep.iterations}\n")
    out.write(f"objective    {rep.objective!r}\n")
    out.write(f"residuals    primal {rep.rel_primal:.3e}  dual {rep.rel_dual:.3e}  gap {rep.rel_gap:.3e}\n")
    out.write(f"layers/ranks {cfg.layers}/{cfg.ranks or problem.N} ({cfg.workers} workers)\n")
    out.write("times        " + "  ".join(f"{k} {v:.3f}s" for k, v in sorted(rep.times.items())) + "\n")
    if "check" in summary:
        chk = summary["check"]
        verdict = "passed" if chk["passed"] else "FAILED"
        detail = chk.get("error") or f"oracle {chk['oracle_objective']!r}, rel diff {chk['rel_diff']:.2e}"
        out.write(f"check        {verdict} ({detail})\n")
    return code


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    return str(v)


# ---------------------------------------------------------------------------
# bench


def bench_rows(problem, ranks: Sequence[int], layers: Sequence[int], cfg: RunConfig) -> list[dict]:
    rows = []
    base: dict[int, float] = {}
    for L in layers:
        for R in ranks:
            c = RunConfig(**{**asdict(cfg), "ranks": R, "layers": L})
            c.validate()
            t0 = time.perf_counter()
            rep = run_solve(c, problem)
            total = time.perf_counter() - t0
            base.setdefault(L, total)
            rows.append({
                "ranks": R,
                "layers": L,
                "workers": c.workers,
                "factor_time": rep.times.get("factor", 0.0),
                "solve_time": rep.times.get("solve", 0.0),
                "total_time": total,
                "iterations": rep.iterations,
                "status": rep.status,
                "objective": rep.objective,
                "speedup": base[L] / total if total > 0 else float("nan"),
            })
    return rows


def cmd_bench(args) -> int:
    if args.input:
        problem = _load(args.input)
    else:
        try:
            problem = generate_instance(GeneratorParams(
                N=args.blocks, block_rows=args.block_rows, block_cols=args.block_cols, n0=args.n0,
                local_links=args.local_links[0] if len(args.local_links) == 1 else tuple(args.local_links),
                global_links=args.global_links, seed=args.seed)).problem
        except GeneratorError as e:
            raise UsageError(str(e)) from e
    cfg = RunConfig(input=args.input or "<generated>", tol=args.tol, max_iter=args.max_iter,
                    workers=_workers(args.workers), deterministic=args.deterministic)
    cfg.validate()
    warmup()
    rows = bench_rows(problem, args.ranks, args.layers, cfg)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    if args.output in (None, "-"):
        sys.stdout.write(buf.getvalue())
    else:
        with open(args.output, "w") as fh:
            fh.write(buf.getvalue())
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_generator_args(p, blocks_required: bool):
    p.add_argument("--blocks", "-N", type=int, required=blocks_required, default=None if blocks_required else 64,
                   help="number of diagonal blocks N")
    p.add_argument("--block-rows", type=int, default=4)
    p.add_argument("--block-cols", type=int, default=8)
    p.add_argument("--n0", type=int, default=0, help="linking variables")
    p.add_argument("--local-links", type=_int_list, default=[1],
                   help="2-links per consecutive pair (one value, or N-1 comma separated values)")
    p.add_argument("--global-links", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)


def _add_solver_args(p):
    p.add_argument("--tol", type=float, default=ipm.DEFAULT_TOL)
    p.add_argument("--max-iter", type=int, default=ipm.MAX_ITER)
    p.add_argument("--workers", type=int, default=None, help="worker threads (env AHLP_WORKERS overrides)")
    p.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=True,
                   help="deterministic collectives (default on)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="ahlp", description="Structure-exploiting interior-point solver for arrowhead LPs.")
    ap.add_argument("--version", action="version", version=f"ahlp {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic instance with a planted optimum")
    _add_generator_args(g, True)
    g.add_argument("--density", type=float, default=0.3)
    g.add_argument("--ineq-rows", type=int, default=None, help="range rows per block (default block_rows // 4)")
    g.add_argument("--m0", type=int, default=0, help="equality rows of block 0")
    g.add_argument("--link-ineq", type=float, default=0.0, help="fraction of linking rows that are ranges")
    g.add_argument("--upper-fraction", type=float, default=0.3)
    g.add_argument("--free-fraction", type=float, default=0.0)
    g.add_argument("-o", "--output", default=None)
    g.set_defaults(func=cmd_generate)

    i = sub.add_parser("inspect", help="report the block structure and predicted Schur sparsity")
    i.add_argument("-i", "--input", required=True)
    i.add_argument("--layers", type=int, default=2, help="layers of the proposed hierarchy")
    i.add_argument("--partition", type=_partition, default="auto")
    i.add_argument("--json", action="store_true")
    i.set_defaults(func=cmd_inspect)

    s = sub.add_parser("solve", help="solve an instance")
    s.add_argument("-i", "--input", required=True)
    s.add_argument("-o", "--output", default=None, help="write the primal solution, one value per line")
    _add_solver_args(s)
    s.add_argument("--layers", type=int, default=1)
    s.add_argument("--partition", type=_partition, default="auto", help="auto, weighted or i1,i2,...")
    s.add_argument("--ranks", type=int, default=None, help="number of ranks (default N)")
    s.add_argument("--check", action="store_true", help="compare against the dense oracle")
    s.add_argument("--json", action="store_true", help="json-lines output")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="time factor/solve over a grid of rank counts and layers")
    b.add_argument("-i", "--input", default=None, help="instance file (default: generate one)")
    _add_generator_args(b, False)
    _add_solver_args(b)
    b.add_argument("--ranks", type=_int_list, default=[1, 2, 4, 8])
    b.add_argument("--layers", type=_int_list, default=[1])
    b.add_argument("-o", "--output", default=None, help="CSV destination (default stdout)")
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        sys.stderr.write(f"ahlp {args.command}: error: {e}\n")
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
