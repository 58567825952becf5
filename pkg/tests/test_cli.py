import csv

import numpy as np
import pytest

from clampqp.cli import main
from clampqp.problem import save_problem, validate


@pytest.fixture
def box_file(tmp_path):
    path = tmp_path / "box.json"
    save_problem(validate([[2.0]], [-2.0], [[1.0]], [0.0], [0.5]), path)
    return path


def test_solve_prints_solution(box_file, capsys):
    assert main(["solve", str(box_file), "--eps-prim", "1e-9", "--eps-dual", "1e-9"]) == 0
    out = dict(line.split(": ", 1) for line in capsys.readouterr().out.splitlines())
    assert out["status"] == "solved"
    assert float(out["y"].strip("[]")) == pytest.approx(0.5, abs=1e-8)
    assert float(out["lambda"].strip("[]")) == pytest.approx(1.0, abs=1e-8)


def test_solve_max_iters_exit_code(tmp_path, capsys):
    rng = np.random.default_rng(0)
    M = rng.standard_normal((20, 20))
    G = rng.standard_normal((10, 20))
    path = tmp_path / "hard.json"
    save_problem(validate(M.T @ M + 0.1 * np.eye(20), rng.standard_normal(20), G,
                          np.full(10, -0.1), np.full(10, 0.1)), path)
    assert main(["solve", str(path), "--max-iters", "5", "--eps-prim", "1e-14", "--eps-dual", "1e-14"]) == 2
    assert "max-iters" in capsys.readouterr().out


def test_solve_input_errors(tmp_path, capsys):
    assert main(["solve", str(tmp_path / "missing.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text('{"n": 1, "m": 1, "H": [[-1]], "g": [0], "G": [[1]], "c": [0], "d": [1]}')
    assert main(["solve", str(bad)]) == 1
    assert "error" in capsys.readouterr().err


def test_bench_qp_writes_rows(tmp_path, capsys):
    out = tmp_path / "qp.csv"
    assert main(["bench-qp", "--sizes", "10,50", "--seeds", "3", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 6
    assert {r["n_or_nu"] for r in rows} == {"10", "50"}
    assert "converged=3/3" in capsys.readouterr().out


def test_bench_bad_output_dir(tmp_path):
    assert main(["bench-qp", "--sizes", "10", "--seeds", "1", "--out", str(tmp_path / "x" / "y.csv")]) == 1


def test_help_lists_defaults(capsys):
    with pytest.raises(SystemExit):
        main(["solve", "--help"])
    text = capsys.readouterr().out
    assert "1e-06" in text and "4000" in text and "25" in text


def test_mpc_demo_double_integrator(capsys):
    assert main(["mpc-demo", "--steps", "200", "--horizon", "20", "--iters-per-step", "5"]) == 0
    out = capsys.readouterr().out
    assert "steps_to_stabilize:" in out and "None" not in out
