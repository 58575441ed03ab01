import csv
import json

import numpy as np
import pytest

from uotlab.cli import emit_convergence_csv, run, InputError


@pytest.fixture
def fixtures(tmp_path):
    def write(name, obj):
        path = tmp_path / name
        path.write_text(json.dumps(obj))
        return str(path)

    mu0 = write("mu0.json", {"points": [[0.0, 0.0], [0.7, 0.3]], "weights": [0.8, 0.5]})
    mu1 = write("mu1.json", {"points": [[0.1, 0.0], [0.6, 0.5]], "weights": [0.6, 0.9]})
    dirac = write("dirac.json", {"points": [[0.25, 0.25]], "weights": [1.0]})
    return tmp_path, mu0, mu1, dirac


def test_solve_x_on_coincident_diracs(fixtures):
    tmp, mu0, mu1, dirac = fixtures
    out = tmp / "report.json"
    code = run(["solve-x", "--mu0", dirac, "--mu1", dirac, "--cost", "sqeuclidean",
                "--eps", "0.5", "--emit-plan", "--out", str(out)])
    assert code == 0
    record = json.loads(out.read_text())
    assert abs(record["report"]["primal"]) < 1e-9
    assert record["report"]["converged"] is True
    assert record["plan"]["rows"] == 1
    assert record["version"]


def test_solve_y_subcommand(fixtures):
    tmp, mu0, mu1, _ = fixtures
    out = tmp / "ry.json"
    code = run(["solve-y", "--mu0", mu0, "--mu1", mu1, "--cost", "hk",
                "--eps", "0.4", "--radial-nodes", "12", "--smin-frac", "0.02",
                "--tol", "1e-8", "--out", str(out)])
    assert code == 0
    record = json.loads(out.read_text())
    assert record["report"]["converged"] is True


def test_sweep_eps_monotone_and_csv_shape(fixtures):
    tmp, mu0, mu1, _ = fixtures
    out = tmp / "sweep.csv"
    code = run(["sweep-eps", "--mu0", mu0, "--mu1", mu1, "--cost", "sqeuclidean",
                "--eps-list", "1,0.5,0.2,0.1", "--formulation", "x", "--out", str(out)])
    assert code == 0
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["eps"] for r in rows] == ["1.0", "0.5", "0.2", "0.1"]
    values = [float(r["value"]) for r in rows]
    assert all(b <= a + 1e-9 for a, b in zip(values, values[1:]))
    assert list(rows[0]) == ["formulation", "eps", "value", "gap", "iterations", "seconds"]


def test_sweep_eps_rejects_single_value(fixtures):
    tmp, mu0, mu1, _ = fixtures
    code = run(["sweep-eps", "--mu0", mu0, "--mu1", mu1, "--cost", "sqeuclidean",
                "--eps-list", "0.5", "--out", str(tmp / "s.csv")])
    assert code == 1


def test_emit_csv_dedupes_and_validates(tmp_path):
    rows = [
        {"formulation": "x", "eps": 1.0, "value": 2.0, "gap": 0.0, "iterations": 3, "seconds": 0.1},
        {"formulation": "x", "eps": 1.0, "value": 2.0, "gap": 0.0, "iterations": 3, "seconds": 0.2},
        {"formulation": "x", "eps": 0.5, "value": 1.5, "gap": 0.0, "iterations": 4, "seconds": 0.1},
    ]
    path = tmp_path / "out.csv"
    emit_convergence_csv(rows, str(path))
    with open(path, newline="") as fh:
        written = list(csv.DictReader(fh))
    assert len(written) == 2
    with pytest.raises(InputError):
        emit_convergence_csv(rows[:1], str(path))


def test_compare_subcommand(fixtures):
    tmp, mu0, mu1, _ = fixtures
    out = tmp / "cmp.json"
    code = run(["compare", "--mu0", mu0, "--mu1", mu1, "--cost", "sqeuclidean",
                "--eps", "0.6", "--radial-nodes", "14", "--out", str(out)])
    assert code == 0
    record = json.loads(out.read_text())
    assert set(record["values"]) == {"solve_x_eps", "solve_x_extended", "solve_y_eps"}
    assert record["residuals"]["solve_x_eps_vs_solve_x_extended"] < 1e-2


def test_lift_check_balanced(fixtures, tmp_path):
    tmp = tmp_path
    mu0 = tmp / "m0.json"
    mu0.write_text(json.dumps({"points": [[0.0, 0.0], [1.0, 0.0]], "weights": [0.5, 0.5]}))
    mu1 = tmp / "m1.json"
    mu1.write_text(json.dumps({"points": [[0.0, 1.0], [1.0, 1.0]], "weights": [0.4, 0.6]}))
    out = tmp / "lift.json"
    code = run(["lift-check", "--mu0", str(mu0), "--mu1", str(mu1),
                "--cost", "sqeuclidean", "--which", "balanced",
                "--radial-nodes", "8", "--out", str(out)])
    assert code == 0
    record = json.loads(out.read_text())
    assert record["residuals"]["lifted_vs_classical"] < 1e-9


def test_identities_subcommand(tmp_path):
    out = tmp_path / "id.json"
    code = run(["identities", "--grid", "4", "--dim", "1", "--eps", "0.2",
                "--seed", "3", "--out", str(out)])
    assert code == 0
    record = json.loads(out.read_text())
    assert record["values"]["residual_w2"] < 1e-9
    assert record["values"]["residual_w3"] < 1e-9


def test_record_roundtrip_byte_identical(fixtures):
    tmp, mu0, mu1, dirac = fixtures
    out = tmp / "report.json"
    run(["solve-x", "--mu0", dirac, "--mu1", dirac, "--cost", "sqeuclidean",
         "--eps", "0.5", "--out", str(out)])
    raw = out.read_text()
    rebuilt = json.dumps(json.loads(raw), sort_keys=True, indent=2) + "\n"
    assert rebuilt == raw


def test_determinism_modulo_wall_clock(fixtures):
    tmp, mu0, mu1, _ = fixtures
    outs = []
    for name in ("a.json", "b.json"):
        out = tmp / name
        run(["solve-x", "--mu0", mu0, "--mu1", mu1, "--cost", "sqeuclidean",
             "--eps", "0.3", "--out", str(out)])
        record = json.loads(out.read_text())
        record.pop("wallClockSeconds")
        record["config"].pop("out")
        outs.append(json.dumps(record, sort_keys=True))
    assert outs[0] == outs[1]


def test_malformed_inputs_exit_one(fixtures, capsys):
    tmp, mu0, mu1, _ = fixtures
    bad = tmp / "bad.json"
    bad.write_text("{not json")
    code = run(["solve-x", "--mu0", str(bad), "--mu1", mu1, "--cost", "sqeuclidean",
                "--eps", "0.5", "--out", str(tmp / "x.json")])
    assert code == 1
    assert "bad.json" in capsys.readouterr().err

    code = run(["solve-x", "--mu0", str(tmp / "missing.json"), "--mu1", mu1,
                "--cost", "sqeuclidean", "--eps", "0.5", "--out", str(tmp / "x.json")])
    assert code == 1

    code = run(["solve-x", "--mu0", mu0, "--mu1", mu1, "--cost", "nope",
                "--eps", "0.5", "--out", str(tmp / "x.json")])
    assert code == 1

    # unknown flags are usage errors
    code = run(["solve-x", "--mu0", mu0, "--mu1", mu1, "--cost", "sqeuclidean",
                "--eps", "0.5", "--out", str(tmp / "x.json"), "--bogus", "1"])
    assert code == 1


def test_nonconvergence_exits_two(fixtures):
    tmp, mu0, mu1, _ = fixtures
    code = run(["solve-x", "--mu0", mu0, "--mu1", mu1, "--cost", "sqeuclidean",
                "--eps", "0.01", "--max-iters", "2", "--tol", "1e-12",
                "--out", str(tmp / "x.json")])
    assert code == 2


def test_cost_file_spec(fixtures):
    tmp, mu0, mu1, _ = fixtures
    cost = tmp / "cost.json"
    cost.write_text(json.dumps([[0.0, 1.0], [1.0, 0.0]]))
    out = tmp / "r.json"
    code = run(["solve-x", "--mu0", mu0, "--mu1", mu1, "--cost", f"file:{cost}",
                "--eps", "0.5", "--out", str(out)])
    assert code == 0
    record = json.loads(out.read_text())
    assert record["report"]["converged"]
