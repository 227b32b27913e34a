import json

import pytest

from varsns.cli import main


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_simulate_to_stdout(capsys):
    code, out, _ = run(["simulate", "--model", "h2o2_toy", "--steps", "4"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("k,x_0,") and len(lines) == 5


def test_simulate_single_step_and_tiny_dt(tmp_path, capsys):
    code, _, _ = run(["simulate", "--model", "h2o2_toy", "--steps", "1", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert (tmp_path / "trajectory.csv").read_text().count("\n") == 2
    code, out, _ = run(["simulate", "--model", "h2o2_toy", "--steps", "1000", "--dt", "1e-12"], capsys)
    assert code == 0 and out.count("\n") == 1001


def test_missing_model_exit_code(tmp_path, capsys):
    missing = tmp_path / "none.json"
    code, _, err = run(["simulate", "--model", str(missing)], capsys)
    assert code == 2 and str(missing) in err


def test_numerical_failure_exit_code(tmp_path, capsys):
    # Explosive autocatalysis: the stage equations have no solution near the start.
    path = tmp_path / "boom.json"
    path.write_text(json.dumps({
        "species": ["A"],
        "reactions": [{"reactants": {"0": 2}, "products": {"0": 3}, "rate_constant": 1e6}],
        "closed": False,
        "x0": [10.0],
        "dt": 1.0,
    }))
    code, _, err = run(["simulate", "--model", str(path), "--steps", "5"], capsys)
    assert code == 3 and "numerical" in err


def test_bad_arguments_exit_code(capsys):
    assert run(["select", "--model", "h2o2_toy", "--r", "12"], capsys)[0] == 2
    assert run(["select", "--model", "h2o2_toy"], capsys)[0] == 2
    assert run(["simulate", "--model", "linear", "--x0", "1,2"], capsys)[0] == 2
    with pytest.raises(SystemExit) as info:
        main(["select", "--metric", "det"])
    assert info.value.code == 2


def test_trace_methods_agree(capsys):
    code, out, _ = run(
        ["select", "--model", "oxidation_toy", "--steps", "200", "--metric", "trace", "--r", "4", "--method", "both"],
        capsys,
    )
    assert code == 0
    greedy, cont = json.loads(out)["selections"]
    assert sorted(greedy["selected"]) == cont["selected"]


def test_continuous_reruns_are_byte_identical(tmp_path, capsys):
    args = ["select", "--model", "oxidation_toy", "--steps", "200", "--r", "3", "--method", "continuous", "--seed", "7"]
    for name in ("a", "b"):
        assert run(args + ["--out", str(tmp_path / name)], capsys)[0] == 0
    a = (tmp_path / "a" / "selection.json").read_bytes()
    assert a == (tmp_path / "b" / "selection.json").read_bytes()
    assert json.loads(a)["selections"][0]["seed"] == 7


def test_logdet_ratio_against_exhaustive(capsys):
    code, out, _ = run(["compare", "--model", "oxidation_toy", "--metric", "logdet", "--eps", "1e-6", "--r", "4"], capsys)
    assert code == 0
    row = json.loads(out)["rows"][0]
    assert row["greedy"]["ratio"] >= 0.63 and row["continuous"]["ratio"] >= 0.63


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# experiment\nmodel = h2o2_toy\nsteps = 6\nalpha-max = 0.1\n")
    code, out, _ = run(["simulate", "--config", str(cfg)], capsys)
    assert code == 0 and out.count("\n") == 7
    code, out, _ = run(["simulate", "--config", str(cfg), "--steps", "2"], capsys)
    assert code == 0 and out.count("\n") == 3
    cfg.write_text("model = h2o2_toy\nbogus = 1\n")
    assert run(["simulate", "--config", str(cfg)], capsys)[0] == 2


def test_validate_outputs(tmp_path, capsys):
    args = ["validate", "--model", "oxidation_toy", "--steps", "40", "--r", "3,5", "--trials", "2", "--out", str(tmp_path)]
    assert run(args, capsys)[0] == 0
    rows = (tmp_path / "validation.csv").read_text().splitlines()
    assert rows[0] == "r,trial,error,method" and len(rows) == 1 + 2 * 2 * 2
    doc = json.loads((tmp_path / "validation.json").read_text())
    assert [(r["r"], r["method"]) for r in doc["reports"]] == [(3, "greedy"), (3, "continuous"), (5, "greedy"), (5, "continuous")]


def test_check_and_gramian(tmp_path, capsys):
    code, out, _ = run(["check", "--model", "h2o2_toy", "--steps", "100", "--metric", "logdet"], capsys)
    assert code == 0 and json.loads(out)["passed"] is True
    code, out, _ = run(["gramian", "--model", "h2o2_toy", "--steps", "10"], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["n_x"] == 9 and len(doc["contributions"]) == 9


def test_x0_from_file(tmp_path, capsys):
    path = tmp_path / "x0.json"
    path.write_text("[1.0, 0.0, 0.0]")
    code, out, _ = run(["simulate", "--model", "linear", "--x0", str(path), "--steps", "1"], capsys)
    assert code == 0 and out.splitlines()[1] == "0,1,0,0"
