import json
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from gwsteer import files
from gwsteer.cli import EXIT_INPUT, EXIT_OK, EXIT_SOLVER, main

PROBLEMS = Path(__file__).resolve().parents[1] / "problems"


def example_doc(**target):
    return {
        "schema_version": 1,
        "system": {"A": [[1.0, 0.1], [-0.3, 1.0]], "B": [[0.7], [0.4]], "W": [[0.5, 0.0], [0.0, 0.5]],
                   "R": 1.0, "N": 10, "sigma0": [[3.0, 0.0], [0.0, 3.0]]},
        "target": target or {"sigma_r": [[2.0, 0.0], [0.0, 0.5]]},
        "solver": {"lambda": 1.0},
        "seed": 0,
    }


def write(tmp_path, doc, name="problem.json"):
    path = tmp_path / name
    path.write_text(doc if isinstance(doc, str) else json.dumps(doc))
    return str(path)


def strip_timings(doc):
    return {k: v for k, v in doc.items() if k != "timings"}


def test_shipped_problem_files_parse():
    for path in sorted(PROBLEMS.glob("*.json")):
        problem = files.load_problem(path)
        assert problem.params.N >= 1


def test_solve_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["solve", write(tmp_path, example_doc()), "--out", str(out)]) == EXIT_OK
    doc = json.loads((out / "result.json").read_text())
    schema = json.loads(resources.files("gwsteer").joinpath("schemas/result.schema.json").read_text())
    jsonschema.validate(doc, schema)
    assert abs(doc["theta_gw"] - 1.20) <= 0.05
    assert doc["J"] == doc["objective_history"][-1]
    traj = files.read_trajectory_csv(out / "trajectory.csv")
    assert traj.shape == (11, 2, 2)
    assert (out / "trajectory.csv").read_text().splitlines()[0] == "k,s00,s01,s10,s11"
    assert np.allclose(traj, doc["covariance_trajectory"])
    assert "theta_gw=1.20" in capsys.readouterr().out


def test_solve_is_deterministic_modulo_timings(tmp_path):
    problem = write(tmp_path, example_doc())
    for name in ("a", "b"):
        assert main(["solve", problem, "--out", str(tmp_path / name)]) == EXIT_OK
    a = json.loads((tmp_path / "a" / "result.json").read_text())
    b = json.loads((tmp_path / "b" / "result.json").read_text())
    assert strip_timings(a) == strip_timings(b)
    assert (tmp_path / "a" / "trajectory.csv").read_bytes() == (tmp_path / "b" / "trajectory.csv").read_bytes()


def test_lambda_override_changes_hash(tmp_path):
    problem = write(tmp_path, example_doc())
    main(["solve", problem, "--out", str(tmp_path / "a")])
    main(["solve", problem, "--lambda", "100", "--out", str(tmp_path / "b")])
    a = json.loads((tmp_path / "a" / "result.json").read_text())
    b = json.loads((tmp_path / "b" / "result.json").read_text())
    assert a["inputs_hash"] != b["inputs_hash"] and b["lambda"] == 100.0
    assert b["energy"] < a["energy"]


def test_uncontrolled(tmp_path):
    out = tmp_path / "u"
    assert main(["uncontrolled", write(tmp_path, example_doc()), "--out", str(out)]) == EXIT_OK
    doc = json.loads((out / "uncontrolled.json").read_text())
    assert doc["ggw_squared"] == pytest.approx(6711.44, rel=1e-6)
    assert len((out / "trajectory.csv").read_text().splitlines()) == 12


def test_rollout_with_policy(tmp_path):
    problem = write(tmp_path, example_doc())
    main(["solve", problem, "--out", str(tmp_path / "s")])
    out = tmp_path / "r"
    args = ["rollout", problem, "--policy", str(tmp_path / "s" / "result.json"), "--samples", "2000", "--out", str(out)]
    assert main(args) == EXIT_OK
    summary = json.loads((out / "rollout_summary.json").read_text())
    assert summary["within_5_standard_errors"]
    lines = (out / "paths.csv").read_text().splitlines()
    assert lines[0] == "sample,k,x0,x1" and len(lines) == 1 + 2000 * 11
    assert main(args[:-1] + [str(tmp_path / "r2")]) == EXIT_OK
    assert (out / "paths.csv").read_bytes() == (tmp_path / "r2" / "paths.csv").read_bytes()


def test_rollout_needs_policy(tmp_path, capsys):
    assert main(["rollout", write(tmp_path, example_doc()), "--out", str(tmp_path / "r")]) == EXIT_INPUT
    assert "--policy" in capsys.readouterr().err


def test_rollout_uncontrolled(tmp_path):
    out = tmp_path / "r"
    assert main(["rollout", write(tmp_path, example_doc()), "--uncontrolled", "--samples", "500", "--out", str(out)]) == 0
    assert json.loads((out / "rollout_summary.json").read_text())["predicted_energy"] == 0.0


def test_ragged_rows_report_json_path(tmp_path, capsys):
    doc = example_doc()
    doc["system"]["A"] = [[1.0, 0.1], [-0.3]]
    assert main(["solve", write(tmp_path, doc), "--out", str(tmp_path / "o")]) == EXIT_INPUT
    assert "$.system.A[1]: ragged rows" in capsys.readouterr().err


def test_json_syntax_error_reports_position(tmp_path, capsys):
    path = write(tmp_path, '{"system": {\n  "A": [1,,2]}}')
    assert main(["uncontrolled", path, "--out", str(tmp_path / "o")]) == EXIT_INPUT
    assert f"{path}:2:" in capsys.readouterr().err


@pytest.mark.parametrize(
    "mutate, fragment",
    [
        (lambda d: d["system"].pop("N"), "$.system.N: missing"),
        (lambda d: d["system"].update(N=0), "$.system.N"),
        (lambda d: d["system"].update(R=-1.0), "$.system"),
        (lambda d: d["target"].update(sigma_r=[[1.0, 0.0], [0.0, -1.0]]), "$.target.sigma_r"),
        (lambda d: d["target"].update(mean=[1.0, 0.0]), "$.target.mean"),
        (lambda d: d["solver"].update({"lambda": 0}), "$.solver.lambda"),
        (lambda d: d.update(seed=-3), "$.seed"),
        (lambda d: d["system"].update(B="x"), "$.system.B"),
    ],
)
def test_invalid_inputs_exit_2(tmp_path, capsys, mutate, fragment):
    doc = example_doc()
    mutate(doc)
    assert main(["solve", write(tmp_path, doc), "--out", str(tmp_path / "o")]) == EXIT_INPUT
    assert fragment in capsys.readouterr().err


def test_missing_file_exit_2(tmp_path):
    assert main(["uncontrolled", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]) == EXIT_INPUT


def test_solver_failure_exit_3(tmp_path, capsys):
    doc = example_doc()
    doc["solver"]["backend"] = {"max_iter": 2}
    with pytest.warns(UserWarning):
        code = main(["solve", write(tmp_path, doc), "--out", str(tmp_path / "o")])
    assert code == EXIT_SOLVER
    assert "solver failure" in capsys.readouterr().err


def test_sweep_lambda_csv(tmp_path):
    out = tmp_path / "sw"
    assert main(["sweep", write(tmp_path, example_doc()), "--mode", "lambda", "--values", "1,100", "--out", str(out)]) == 0
    lines = (out / "sweep_lambda.csv").read_text().splitlines()
    body = [ln for ln in lines if not ln.startswith("#")]
    assert body[0].startswith("lambda,energy,terminal_cost,status,wall_time_s")
    assert len(body) == 3
    assert any(ln.startswith("# problem_hash: ") for ln in lines)


def test_sweep_theta_csv(tmp_path, capsys):
    out = tmp_path / "sw"
    args = ["sweep", write(tmp_path, example_doc()), "--mode", "theta", "--grid", "8", "--no-refine", "--out", str(out)]
    assert main(args) == 0
    body = [ln for ln in (out / "sweep_theta.csv").read_text().splitlines() if not ln.startswith("#")]
    assert body[0].startswith("theta_rad,energy,terminal_cost,status")
    assert len(body) == 9
    assert "theta* =" in capsys.readouterr().out


def test_sweep_bad_values(tmp_path):
    args = ["sweep", write(tmp_path, example_doc()), "--mode", "lambda", "--values", "1,abc", "--out", str(tmp_path / "o")]
    assert main(args) == EXIT_INPUT


def test_compare(tmp_path):
    out = tmp_path / "c"
    assert main(["compare", write(tmp_path, example_doc()), "--grid", "16", "--out", str(out)]) == EXIT_OK
    doc = json.loads((out / "compare.json").read_text())
    assert doc["comparable"] and doc["angle_gap"] <= 0.1
    assert doc["gw_problems_solved"] == 1


def test_compare_isotropic(tmp_path, capsys):
    doc = example_doc(sigma_r=[[1.0, 0.0], [0.0, 1.0]])
    assert main(["compare", write(tmp_path, doc), "--out", str(tmp_path / "c")]) == EXIT_OK
    assert "incomparable" in capsys.readouterr().out


def test_line_target_via_dim(tmp_path):
    doc = example_doc(sigma_r=[[10.0]], dim=2)
    out = tmp_path / "l"
    assert main(["solve", write(tmp_path, doc), "--out", str(out)]) == EXIT_OK
    assert json.loads((out / "result.json").read_text())["ggw_squared"] < 0.05 * 3126.58


def test_time_varying_sequences_parse():
    doc = example_doc()
    doc["system"]["A"] = [[[1.0, 0.1], [-0.3, 1.0]]] * 10
    doc["system"]["R"] = [[[1.0]]] * 10
    problem = files.parse_problem(doc)
    assert problem.params.A.shape == (10, 2, 2)
    doc["system"]["A"] = [[[1.0, 0.1], [-0.3, 1.0]]] * 9
    with pytest.raises(files.ProblemFileError):
        files.parse_problem(doc)


def test_canonical_hash_ignores_key_order():
    assert files.canonical_hash({"a": 1, "b": [1, 2]}) == files.canonical_hash({"b": [1, 2], "a": 1})


def test_uncontrolled_without_noise_or_drift_is_constant(tmp_path):
    doc = example_doc()
    doc["system"]["A"] = [[1.0, 0.0], [0.0, 1.0]]
    doc["system"]["W"] = [[0.0, 0.0], [0.0, 0.0]]
    out = tmp_path / "u"
    assert main(["uncontrolled", write(tmp_path, doc), "--out", str(out)]) == EXIT_OK
    traj = files.read_trajectory_csv(out / "trajectory.csv")
    assert np.all(traj == 3.0 * np.eye(2))
    assert main(["rollout", write(tmp_path, doc), "--uncontrolled", "--samples", "20", "--out", str(tmp_path / "r")]) == 0
    rows = np.loadtxt(tmp_path / "r" / "paths.csv", delimiter=",", skiprows=1)
    paths = rows[:, 2:].reshape(20, 11, 2)
    assert np.all(paths == paths[:, :1])
