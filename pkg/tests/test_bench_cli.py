import json

import numpy as np
import pytest
import scipy.sparse as sp
from numpy.testing import assert_allclose

from shifted_krylov.bench import (
    CSV_COLUMNS,
    BenchReport,
    RunConfig,
    emit_report,
    read_report,
    run_compare,
)
from shifted_krylov.cli import main, parse_complex, parse_shift_range, parse_shifts
from shifted_krylov.problems import gen_tau_grid, synthetic_spd, aquifer_problem, write_matrix_market
from shifted_krylov.solvers import SolverConfig


def _row(**kw):
    r = {"solver": "mpgmres-sh", "shift_index": 0, "shift_re": 0.0, "shift_im": 1.5,
         "iterations": 3, "precond_solves": 9, "residual": 1.25e-11, "converged": True, "wall_ms": 2.0}
    r.update(kw)
    return r


# -- harness -------------------------------------------------------------------


def test_identity_single_shift():
    run = RunConfig(sp.identity(5, format="csr"), np.ones(5), [0.0],
                    [("mp", SolverConfig(taus=[1.0]))])
    rep = run_compare(run)
    assert len(rep.rows) == 1
    assert rep.rows[0]["iterations"] == 1
    assert rep.rows[0]["precond_solves"] == 1
    assert rep.all_converged


def test_failing_solver_recorded():
    A = sp.diags([1.0, 2.0, 3.0]).tocsr()
    run = RunConfig(A, np.ones(3), [0.0, 1.0], [
        ("bad", SolverConfig(taus=[-1.0])),  # singular preconditioner
        ("good", SolverConfig(taus=[0.5])),
    ])
    rep = run_compare(run)
    bad = [r for r in rep.rows if r["solver"] == "bad"]
    good = [r for r in rep.rows if r["solver"] == "good"]
    assert len(bad) == 2 and not any(r["converged"] for r in bad)
    assert all(r["converged"] for r in good)
    assert "SingularMatrixError" in rep.metadata["runs"][0]["error"]


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig(sp.identity(2), np.ones(2), [0.0], [])
    with pytest.raises(TypeError):
        RunConfig(sp.identity(2), np.ones(2), [0.0], [("x", {"taus": [1.0]})])


def _phasor_run(n_ps=(2, 3)):
    pr = aquifer_problem(12, 12, nshift=8, seed=1)
    lo, hi = pr.omegas[0], pr.omegas[-1]
    solvers = []
    for n_p in n_ps:
        taus = gen_tau_grid(lo, hi, n_p).taus
        solvers += [(f"mp{n_p}", SolverConfig(taus=taus)),
                    (f"fg{n_p}", SolverConfig(taus=taus, kind="fgmres-sh"))]
    return RunConfig(pr.K, pr.b, pr.sigmas, solvers, pr.M)


def test_deterministic():
    a, b = run_compare(_phasor_run()), run_compare(_phasor_run())
    strip = lambda rows: [{k: v for k, v in r.items() if k != "wall_ms"} for r in rows]  # noqa: E731
    assert strip(a.rows) == strip(b.rows)


def test_empty_csv_is_header_only():
    assert emit_report(BenchReport([], {}), "csv") == ",".join(CSV_COLUMNS) + "\n"


def test_csv_round_trip(tmp_path):
    rep = BenchReport([_row()], {})
    p = tmp_path / "r.csv"
    text = emit_report(rep, "csv", p)
    assert len(text.splitlines()) == 2
    assert read_report(p).rows == rep.rows


def test_json_round_trip(tmp_path):
    rep = run_compare(_phasor_run((2,)))
    p = tmp_path / "r.json"
    emit_report(rep, "json", p)
    back = read_report(p)
    assert back.rows == rep.rows
    assert back.metadata == json.loads(json.dumps(rep.metadata))


def test_unknown_format():
    with pytest.raises(ValueError):
        emit_report(BenchReport([], {}), "xml")


def test_report_rows_finite():
    rep = run_compare(_phasor_run())
    for r in rep.rows:
        assert np.isfinite([r["residual"], r["wall_ms"]]).all()
        assert r["residual"] <= 1e-9


# -- phasor comparison ------------------------------------------------------------


def _phasor_counts(nx=50):
    pr = aquifer_problem(nx, nx)
    out = {}
    for n_p in (2, 3, 5):
        taus = gen_tau_grid(pr.omegas[0], pr.omegas[-1], n_p).taus
        run = RunConfig(pr.K, pr.b, pr.sigmas, [
            ("mp", SolverConfig(taus=taus)),
            ("fg", SolverConfig(taus=taus, kind="fgmres-sh")),
        ], pr.M)
        rep = run_compare(run)
        assert rep.all_converged
        out[n_p] = {r["solver"]: (r["total_iterations"], r["precond_solves"]) for r in rep.metadata["runs"]}
    return out


@pytest.fixture(scope="module")
def phasor_counts():
    return _phasor_counts()


def test_phasor_mpgmres_fewer_iterations(phasor_counts):
    for n_p, res in phasor_counts.items():
        assert res["mp"][0] < res["fg"][0]


@pytest.mark.xfail(strict=True, reason="on the 2-D analogue FGMRES-Sh needs slightly fewer solves")
def test_phasor_mpgmres_fewer_solves(phasor_counts):
    for n_p, res in phasor_counts.items():
        assert res["mp"][1] < res["fg"][1]


# -- CLI parsing ----------------------------------------------------------------------


@pytest.mark.parametrize("tok,val", [("1.5", 1.5), ("2i", 2j), ("-3+4i", -3 + 4j), ("1e-3-2.5i", 1e-3 - 2.5j),
                                     ("i", 1j), ("-i", -1j), ("2j", 2j)])
def test_parse_complex(tok, val):
    assert parse_complex(tok) == val


def test_parse_shifts_and_range(tmp_path):
    assert_allclose(parse_shifts("1, 2i,-1-1i"), [1, 2j, -1 - 1j])
    f = tmp_path / "s.txt"
    f.write_text("0.5i\n1.5i\n")
    assert_allclose(parse_shifts(f"@{f}"), [0.5j, 1.5j])
    assert_allclose(parse_shift_range("1:3:3:imag"), [1j, 2j, 3j])
    assert_allclose(parse_shift_range("1:3:3"), [1, 2, 3])
    for bad in ("1:3", "1:3:0", "a:b:c", "1:2:3:real"):
        with pytest.raises(ValueError):
            parse_shift_range(bad)


# -- CLI end to end -----------------------------------------------------------------


@pytest.fixture
def spd_file(tmp_path):
    A = synthetic_spd(150, 1e3, seed=0)
    p = tmp_path / "A.mtx"
    write_matrix_market(p, A, symmetry="symmetric")
    return p, A


def test_cli_generate_and_solve(tmp_path, capsys):
    d = tmp_path / "ph"
    assert main(["generate", "phasor", "--nx", "10", "--ny", "10", "--nshift", "6", "--out-dir", str(d)]) == 0
    for name in ("K.mtx", "M.mtx", "b.npy", "shifts.txt", "problem.json"):
        assert (d / name).is_file()
    out = tmp_path / "r.json"
    code = main(["solve", "--matrix", str(d / "K.mtx"), "--mass", str(d / "M.mtx"), "--rhs", str(d / "b.npy"),
                 "--shifts", f"@{d / 'shifts.txt'}", "--ntaus", "3", "--out", str(out)])
    assert code == 0
    rep = json.loads(out.read_text())
    assert len(rep["rows"]) == 6
    assert all(r["converged"] for r in rep["rows"])
    assert rep["metadata"]["generalized"] is True


def test_cli_bench_csv(tmp_path):
    out = tmp_path / "b.csv"
    code = main(["bench", "--phasor", "10x10", "--ntaus", "2,3", "--format", "csv", "--out", str(out)])
    assert code == 0
    rows = read_report(out).rows
    assert {r["solver"] for r in rows} == {f"{k}/np{n}" for k in ("mpgmres-sh", "fgmres-sh", "gmres-sh")
                                           for n in (2, 3)}
    assert len(rows) == 6 * 50


def test_cli_bench_to_stdout(capsys):
    assert main(["bench", "--phasor", "6", "--solver", "mpgmres-sh", "--shift-range", "0.1:1:4:imag"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert len(rep["rows"]) == 4


@pytest.mark.parametrize("func", ["exp-neg", "log", "sqrt"])
def test_cli_matfun(tmp_path, spd_file, func):
    path, A = spd_file
    vec = tmp_path / "x.npy"
    code = main(["matfun", "--matrix", str(path), "--func", func, "--rhs", "random", "--seed", "4",
                 "--vector-out", str(vec), "--out", str(tmp_path / "m.json")])
    assert code == 0
    b = np.random.default_rng(4).standard_normal(150)
    b /= np.linalg.norm(b)
    lam, Q = np.linalg.eigh(A.toarray())
    f = {"exp-neg": lambda x: np.exp(-x), "log": np.log, "sqrt": np.sqrt}[func]
    ref = Q @ (f(lam) * (Q.T @ b))
    x = np.load(vec)
    assert np.linalg.norm(x - ref) <= 1e-5 * np.linalg.norm(ref)


def test_cli_not_converged_exit_1(spd_file, capsys):
    path, _ = spd_file
    code = main(["solve", "--matrix", str(path), "--rhs", "random", "--shifts", "0.5,1,2",
                 "--taus", "10", "--max-iter", "1"])
    assert code == 1
    rep = json.loads(capsys.readouterr().out)
    assert not all(r["converged"] for r in rep["rows"])


def test_cli_matfun_not_converged_exit_1(spd_file):
    path, _ = spd_file
    assert main(["matfun", "--matrix", str(path), "--func", "log", "--rhs", "random", "--max-iter", "1"]) == 1


@pytest.mark.parametrize("argv", [
    ["solve", "--phasor", "6", "--shift-range", "1:2"],
    ["solve", "--matrix", "missing.mtx", "--shifts", "1"],
    ["solve", "--shifts", "1"],
    ["solve", "--phasor", "6", "--matrix", "x.mtx"],
    ["solve", "--phasor", "abc"],
    ["solve", "--phasor", "6", "--shifts", "1", "--shift-range", "1:2:3"],
    ["solve", "--phasor", "6", "--solver", "mpgmres-sh", "--solver", "fgmres-sh"],
    ["solve", "--phasor", "6", "--taus", "1,1"],
    ["matfun", "--phasor", "6", "--func", "log"],
])
def test_cli_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "error" in capsys.readouterr().err


def test_cli_argparse_errors():
    with pytest.raises(SystemExit) as exc:
        main(["solve", "--solver", "cg"])
    assert exc.value.code == 2
