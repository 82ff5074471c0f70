import csv
import io
import json

import numpy as np
import pytest

from ahlp import cli
from ahlp.problem import classify_links, read_file, to_standard_form

from conftest import FIXTURES, link_problem
from ahlp.problem import write_file


def run(capsys, *argv):
    try:
        code = cli.main(list(argv))
    except SystemExit as e:
        code = e.code
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def gen8(tmp_path, capsys):
    path = tmp_path / "a.ahlp"
    code, _, err = run(capsys, "generate", "--blocks", "8", "--local-links", "2", "--seed", "1", "--n0", "1",
                       "-o", str(path))
    assert code == 0
    planted = float(err.split()[-1])
    return path, planted


# -- generate --------------------------------------------------------------------


def test_generate_writes_parsable_file(gen8):
    path, _ = gen8
    p = read_file(path)
    assert p.N == 8
    assert classify_links(to_standard_form(p)).counts.tolist() == [2] * 7


def test_generate_is_deterministic(tmp_path, capsys):
    for name in ("x", "y"):
        run(capsys, "generate", "--blocks", "8", "--local-links", "2", "--seed", "1", "-o", str(tmp_path / name))
    assert (tmp_path / "x").read_bytes() == (tmp_path / "y").read_bytes()


def test_generate_to_stdout(capsys):
    code, out, err = run(capsys, "generate", "-N", "2", "--seed", "3")
    assert code == 0 and out.startswith("AHLP 1 N=2")
    assert err.startswith("planted objective")


@pytest.mark.parametrize("argv", [
    ["generate", "--blocks", "0"],
    ["generate"],
    ["generate", "--blocks", "3", "--local-links", "1,x"],
    ["solve"],
    ["frobnicate"],
])
def test_usage_errors(capsys, argv):
    code, _, _ = run(capsys, *argv)
    assert code == 64


# -- inspect ---------------------------------------------------------------------


def test_inspect_bound(tmp_path, capsys):
    path = tmp_path / "p.ahlp"
    write_file(link_problem(3, [{1, 2}, {2, 3}]), path)
    code, out, _ = run(capsys, "inspect", "-i", str(path), "--json")
    rep = json.loads(out)
    assert code == 0
    assert rep["flat_schur_bound"] == 4 and rep["l"] == [1, 1] and rep["m_global"] == 0


def test_inspect_global_only_has_zero_band(tmp_path, capsys):
    path = tmp_path / "g.ahlp"
    write_file(link_problem(3, [{1, 3}, {0}], n0=1), path)
    code, out, _ = run(capsys, "inspect", "-i", str(path), "--json")
    rep = json.loads(out)
    assert rep["band_bound"] == 0 and rep["m_global"] == 2


def test_inspect_human(gen8, capsys):
    code, out, _ = run(capsys, "inspect", "-i", str(gen8[0]))
    assert code == 0
    assert "flat Schur bound" in out and "hierarchy" in out


def test_inspect_malformed(tmp_path, capsys):
    path = tmp_path / "bad.ahlp"
    path.write_text("AHLP 1 N=1\nBLOCK 0 NVAR=0 MEQ=0 MINEQ=0\nBLOCK 1 NVAR=1 MEQ=0 MINEQ=0\nOBJ\n0 nope\n")
    code, _, err = run(capsys, "inspect", "-i", str(path))
    assert code == 64
    assert "bad.ahlp:5:" in err


def test_missing_file(capsys, tmp_path):
    code, _, err = run(capsys, "inspect", "-i", str(tmp_path / "none.ahlp"))
    assert code == 64


# -- solve -----------------------------------------------------------------------


def test_solve_minimal(capsys, tmp_path):
    out_path = tmp_path / "x.txt"
    code, out, _ = run(capsys, "solve", "-i", str(FIXTURES / "minimal.ahlp"), "--check", "-o", str(out_path))
    assert code == 0
    assert "status       optimal" in out and "check        passed" in out
    np.testing.assert_allclose(np.loadtxt(out_path), [1.0, 0.0], atol=1e-6)


def test_solve_hierarchical_matches_planted(gen8, capsys):
    path, planted = gen8
    code, out, _ = run(capsys, "solve", "-i", str(path), "--layers", "2", "--ranks", "8", "--json")
    assert code == 0
    recs = [json.loads(line) for line in out.splitlines()]
    summary = recs[-1]
    assert summary["record"] == "summary" and summary["status"] == "optimal"
    assert abs(summary["objective"] - planted) <= 1e-5 * max(1.0, abs(planted))
    assert all(r["record"] == "iteration" for r in recs[:-1])
    assert {"factor", "solve", "total"} <= set(summary["times"])
    assert summary["schur"]["layers"] == 2 and summary["schur"]["tree_levels"] == 3


def _log(capsys, path, *extra):
    code, out, _ = run(capsys, "solve", "-i", str(path), "--json", *extra)
    assert code == 0
    lines = out.splitlines()
    return lines[:-1], json.loads(lines[-1])


def test_layers_agree(gen8, capsys):
    a, sa = _log(capsys, gen8[0], "--layers", "1")
    b, sb_ = _log(capsys, gen8[0], "--layers", "2")
    assert abs(sa["objective"] - sb_["objective"]) <= 1e-7 * max(1.0, abs(sa["objective"]))
    assert sa["iterations"] == sb_["iterations"]


def test_rank_counts_give_identical_logs(gen8, capsys):
    a, _ = _log(capsys, gen8[0], "--ranks", "1")
    b, _ = _log(capsys, gen8[0], "--ranks", "8")
    assert a == b


def test_workers_env_override(gen8, capsys, monkeypatch):
    monkeypatch.setenv("AHLP_WORKERS", "3")
    code, out, _ = run(capsys, "solve", "-i", str(gen8[0]), "--workers", "1")
    assert code == 0 and "(3 workers)" in out


@pytest.mark.parametrize("argv", [["--tol", "2"], ["--layers", "0"], ["--ranks", "99"], ["--partition", "9"]])
def test_solve_bad_config(gen8, capsys, argv):
    code, _, _ = run(capsys, "solve", "-i", str(gen8[0]), "--layers", "2", *argv)
    assert code == 64


def test_solve_max_iter_exit(gen8, capsys):
    code, out, _ = run(capsys, "solve", "-i", str(gen8[0]), "--max-iter", "1")
    assert code == 2
    assert "max-iter" in out


def test_solve_numerical_failure_exit(gen8, capsys, monkeypatch):
    from ahlp import ipm

    def broken(*a, **k):
        raise ipm.NumericalFailure("forced")

    monkeypatch.setattr(ipm, "starting_point", broken)
    code, out, _ = run(capsys, "solve", "-i", str(gen8[0]))
    assert code == 3 and "numerical-failure" in out


# -- bench -----------------------------------------------------------------------


def test_bench_rows(gen8, capsys, tmp_path):
    dest = tmp_path / "b.csv"
    code, _, _ = run(capsys, "bench", "-i", str(gen8[0]), "--ranks", "1,2,4", "-o", str(dest))
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(dest.read_text())))
    assert [int(r["ranks"]) for r in rows] == [1, 2, 4]
    assert list(rows[0]) == list(cli.CSV_FIELDS)
    assert len({r["iterations"] for r in rows}) == 1
    assert float(rows[0]["speedup"]) == 1.0


def test_bench_repeatable_iterations(capsys):
    cols = []
    for _ in range(2):
        code, out, _ = run(capsys, "bench", "-N", "4", "--ranks", "1,2", "--seed", "2")
        assert code == 0
        cols.append([r["iterations"] for r in csv.DictReader(io.StringIO(out))])
    assert cols[0] == cols[1]
