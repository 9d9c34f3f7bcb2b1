import numpy as np

from flexform.cli import main
from flexform.scenarios import builtin, save_scenario
from flexform.shapes import read_projection_csv
from flexform.sim import load_trajectory


def test_simulate_writes_trajectory(tmp_path, capsys):
    out = tmp_path / "t.csv"
    assert main(["simulate", "--scenario", "case3", "--t-final", "0.05", "--out", str(out)]) == 0
    rec = load_trajectory(out)
    assert rec.t.size == 51
    assert "converged at" in capsys.readouterr().out


def test_simulate_from_file(tmp_path):
    path = tmp_path / "s.json"
    save_scenario(builtin("case1", t_final=0.02), path)
    assert main(["simulate", "--scenario", str(path), "--dt", "0.002"]) == 0


def test_solve_shapes_writes_projection(tmp_path, capsys):
    out = tmp_path / "p.csv"
    assert main(["solve-shapes", "--scenario", "case3", "--starts", "40", "--seed", "1", "--out", str(out)]) == 0
    pts = read_projection_csv(out)
    assert pts.shape[1] == 2 and pts.shape[0] >= 1
    text = capsys.readouterr().out
    assert "ISOLATED" in text


def test_check_rigidity_exit_codes(tmp_path, capsys):
    assert main(["check-rigidity", "--scenario", "case2"]) == 0
    assert "rank 5" in capsys.readouterr().out


def test_bad_scenario_reports_error(tmp_path, capsys):
    assert main(["simulate", "--scenario", str(tmp_path / "missing.json")]) == 2
    assert "error" in capsys.readouterr().err


def test_verify_quick_suite(capsys):
    assert main(["verify"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert out.strip().splitlines()[-1].endswith("checks passed")
    assert np.all(["PASS" in line for line in out.strip().splitlines()[:-1]])
