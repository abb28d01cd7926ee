import json
import math

import pytest

from imexbdf2 import cli, harness
from imexbdf2.harness import (
    ConfigError,
    ConvergenceReport,
    ConvergenceRow,
    MertonRow,
    convergence_study,
    emit_csv,
    kernel_report,
    manufactured_error,
    merton_study,
    observed_orders,
    parse_csv,
    read_config,
)
from imexbdf2.problems import MertonParams


def test_observed_orders_rule():
    orders = observed_orders([1.0, 0.25, 0.0625])
    assert orders[0] is None
    assert orders[1:] == [2.0, 2.0]
    assert observed_orders([3.0]) == [None]
    assert math.isnan(observed_orders([1.0, 0.0])[1])


def test_csv_round_trip_convergence():
    rep = ConvergenceReport([
        ConvergenceRow(0.5, 4.0, 128, 256, 1.2345678901234567e-3, None),
        ConvergenceRow(0.5, 4.0, 256, 256, 3.1e-4, 1.9936),
    ])
    text = emit_csv(rep)
    assert text.splitlines()[0] == "alpha,gamma,N,M,error,order"
    assert text.splitlines()[1].endswith(",")
    assert parse_csv(text) == rep


def test_csv_round_trip_merton():
    rep = ConvergenceReport([MertonRow(256, 256, 90.0, 4.2e-4), MertonRow(512, 512, 90.0, 1.1e-4, 1.93)])
    text = emit_csv(rep)
    assert text.startswith("M,N,spot,error,order\n")
    assert parse_csv(text) == rep
    with pytest.raises(ConfigError):
        parse_csv("a,b\n1,2\n")


def test_report_filters():
    rep = ConvergenceReport([
        ConvergenceRow(0.5, 1.0, 8, 16, 1.0), ConvergenceRow(0.5, 1.0, 16, 16, 0.5, 1.0),
        ConvergenceRow(0.5, 2.0, 8, 16, 1.0), ConvergenceRow(0.5, 2.0, 16, 16, 0.25, 2.0),
    ])
    assert rep.orders(gamma=2.0) == [2.0]
    assert rep.errors(gamma=1.0) == [1.0, 0.5]


def test_small_convergence_study():
    rep = convergence_study("manufactured", 0.5, [1.0, 4.0], [16, 32], 64)
    assert len(rep.rows) == 4
    assert rep.rows[0].order is None and rep.rows[1].order is not None
    assert all(e > 0 for e in rep.errors())
    assert rep.errors(gamma=1.0)[1] < rep.errors(gamma=1.0)[0]
    single = convergence_study("manufactured", 0.5, [2.0], [64], 64)
    assert single.rows[0].order is None


def test_error_measures():
    e_max = manufactured_error(0.5, 2.0, 32, 64, measure="max")
    e_fin = manufactured_error(0.5, 2.0, 32, 64, measure="final")
    assert e_max >= e_fin > 0
    with pytest.raises(ConfigError):
        manufactured_error(0.5, 2.0, 32, 64, measure="mean")


def test_parallel_study_matches_serial():
    a = convergence_study("manufactured", 0.75, [2.0], [8, 16], 32, jobs=1)
    b = convergence_study("manufactured", 0.75, [2.0], [8, 16], 32, jobs=2)
    assert a == b


@pytest.mark.parametrize("N_list", [[128, 200], [256, 128], []])
def test_non_doubling_rejected(N_list):
    with pytest.raises(ConfigError):
        convergence_study("manufactured", 0.5, [1.0], N_list, 64)


def test_caps_and_problem_id():
    with pytest.raises(ConfigError):
        convergence_study("manufactured", 0.5, [1.0], [16], 16384)
    with pytest.raises(ConfigError):
        convergence_study("merton", 0.5, [1.0], [16], 64)
    with pytest.raises(ConfigError):
        merton_study(MertonParams(), [(63, 64)])


def test_merton_study_shape():
    rep = merton_study(MertonParams(), [(32, 32), (64, 64)])
    assert [(r.M, r.spot) for r in rep.rows] == [(32, 90.0), (32, 100.0), (32, 110.0),
                                                 (64, 90.0), (64, 100.0), (64, 110.0)]
    assert all(r.order is None for r in rep.rows[:3])


# ---------------------------------------------------------------- kernel report

@pytest.mark.parametrize("N,gamma", [(64, 1.0), (512, 4.0)])
def test_kernel_report_passes(N, gamma):
    rep = kernel_report(1.0, N, gamma, draws=200)
    assert rep["pass"], rep["checks"]
    assert rep["ratio"]["satisfies_A1"]
    json.dumps(rep, default=harness._json_default)


def test_kernel_report_single_step():
    rep = kernel_report(1.0, 1, 1.0)
    assert rep["pass"]
    assert rep["orthogonality"] <= 1e-15


def test_kernel_table_csv():
    lines = harness.kernel_table_csv(1.0, 3, 1.0).splitlines()
    assert lines[0] == "n,j,b0,b1,theta,p"
    assert len(lines) == 1 + 6
    n, j, b0, b1, theta, p = lines[-1].split(",")
    assert (n, j) == ("3", "3")
    assert float(theta) == pytest.approx(2 / 9)
    assert float(b0) == pytest.approx(4.5)


# ---------------------------------------------------------------- config / CLI

def test_read_config(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nalpha = 0.75\n--fast-integral = off\nN = 8, 16\n")
    assert read_config(cfg) == {"alpha": "0.75", "fast_integral": "off", "N": "8, 16"}
    with pytest.raises(ConfigError):
        read_config(tmp_path / "missing.cfg")


def test_cli_flag_overrides_config(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("alpha = 0.75\ngamma = 1, 2\nN = 8, 16\nM = 32\n")
    assert cli.main(["convergence", "--config", str(cfg), "--gamma", "3"]) == 0
    rows = parse_csv(capsys.readouterr().out).rows
    assert {r.gamma for r in rows} == {3.0}
    assert {r.alpha for r in rows} == {0.75}
    assert [r.N for r in rows] == [8, 16]


def test_cli_solve_writes_csv(tmp_path, capsys):
    out = tmp_path / "u.csv"
    assert cli.main(["solve", "--N", "16", "--M", "32", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "x,u,exact" and len(lines) == 34
    assert "final_L2_error" in capsys.readouterr().err


def test_cli_solve_merton(capsys):
    assert cli.main(["solve", "--problem", "merton", "--N", "16", "--M", "32"]) == 0
    assert "V(100)" in capsys.readouterr().err


def test_cli_merton_and_kernels(tmp_path, capsys):
    assert cli.main(["merton", "--N", "16,32"]) == 0
    assert capsys.readouterr().out.startswith("M,N,spot,error,order")
    tables = tmp_path / "k.csv"
    assert cli.main(["kernels", "--N", "16", "--gamma", "3", "--tables", str(tables)]) == 0
    assert json.loads(capsys.readouterr().out)["pass"] is True
    assert tables.read_text().startswith("n,j,")


@pytest.mark.parametrize("argv", [
    ["convergence", "--N", "128,200", "--M", "64"],
    ["convergence", "--M", "16384", "--N", "8,16"],
    ["merton", "--N", "16,32", "--M", "31,62"],
    ["solve", "--problem", "manufactured", "--T", "2"],
    ["solve", "--alpha", "0.2", "--N", "4", "--M", "8"],
    ["kernels", "--N", "0"],
])
def test_cli_config_errors_exit_2(argv, capsys):
    assert cli.main(argv) == cli.EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err


def test_cli_unknown_config_key(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    assert cli.main(["solve", "--config", str(cfg)]) == cli.EXIT_CONFIG


def test_cli_solver_failure_exit_3(monkeypatch, capsys):
    from imexbdf2.spatial import SingularPivotError
    from imexbdf2.stepper import SolverError

    def boom(*args, **kwargs):
        raise SolverError(4, SingularPivotError(0))

    monkeypatch.setattr(cli, "run", boom)
    assert cli.main(["solve", "--N", "8", "--M", "16"]) == cli.EXIT_SOLVER
    assert "step 4" in capsys.readouterr().err


def test_cli_argparse_rejects_bad_switch():
    with pytest.raises(SystemExit) as info:
        cli.main(["solve", "--fast-integral", "maybe"])
    assert info.value.code == 2
