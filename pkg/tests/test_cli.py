import csv
import json
import subprocess
import sys

import numpy as np
import pytest
import scipy.io

from infarnoldi.cli import EXIT_ERROR, EXIT_NOT_CONVERGED, EXIT_OK, SEED_ENV, main
from infarnoldi.problems import load_manifest


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def write_linear_manifest(tmp_path, a, name="custom.json"):
    n = a.shape[0]
    scipy.io.mmwrite(tmp_path / "I.mtx", np.eye(n))
    scipy.io.mmwrite(tmp_path / "A.mtx", a)
    manifest = {"n": n, "terms": [{"matrix": "I.mtx", "fun": "poly(1)"}, {"matrix": "A.mtx", "fun": "poly(0,-1)"}]}
    path = tmp_path / name
    path.write_text(json.dumps(manifest))
    return path


def test_list_problems(capsys):
    code, out, _ = run(["list-problems"], capsys)
    assert code == EXIT_OK
    for name in ["hadeler", "gun", "delay"]:
        assert name in out


def test_solve_writes_outputs(tmp_path, capsys):
    code, out, _ = run(["solve", "--problem", "delay", "--n", "5", "--p", "4", "--out", str(tmp_path)], capsys)
    assert code == EXIT_OK
    rows = json.loads((tmp_path / "eigenvalues.json").read_text())
    assert len(rows) == 4
    assert set(rows[0]) == {"lambda_re", "lambda_im", "residual"}
    assert all(r["residual"] <= 1000 * np.finfo(float).eps for r in rows)
    with open(tmp_path / "convergence.csv") as fh:
        table = list(csv.reader(fh))
    assert table[0] == ["outer_iter", "inner_iter", "ritz_index", "residual", "p_l", "gamma"]
    assert len(table) > 1
    assert "converged" in out


def test_solve_verify_reports_agreement(tmp_path, capsys):
    code, out, _ = run(["solve", "--problem", "delay", "--n", "5", "--p", "4", "--verify", "--out", str(tmp_path)],
                       capsys)
    assert code == EXIT_OK
    assert "max mismatch" in out and "(ok" in out


def test_manifest_linear_problem(tmp_path, capsys):
    a = np.diag([2.0, -1.25, 0.4, 0.1])
    path = write_linear_manifest(tmp_path, a)
    code, out, err = run(["solve", "--manifest", str(path), "--kmax", "8", "--p", "2", "--out", str(tmp_path)], capsys)
    assert code == EXIT_OK, err
    rows = json.loads((tmp_path / "eigenvalues.json").read_text())
    lams = sorted(r["lambda_re"] for r in rows)
    # eigenvalues of I - lam A are the reciprocals of those of A
    assert np.allclose(lams, [-0.8, 0.5], atol=1e-12)


def test_manifest_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"terms": [{"matrix": "x.mtx"}]}))
    with pytest.raises(ValueError, match="needs 'matrix' and 'fun'"):
        load_manifest(bad)
    path = write_linear_manifest(tmp_path, np.eye(3))
    data = json.loads(path.read_text())
    data["n"] = 4
    path.write_text(json.dumps(data))
    with pytest.raises(ValueError, match="n=4"):
        load_manifest(path)


def test_invalid_configurations(tmp_path, capsys):
    cases = [
        ["solve"],
        ["solve", "--problem", "nope"],
        ["solve", "--problem", "delay", "--manifest", "x.json"],
        ["solve", "--problem", "delay", "--p", "12", "--kmax", "12"],
        ["solve", "--problem", "delay", "--selector", "target"],
        ["solve", "--problem", "delay", "--lambda0", "0"],
        ["solve", "--manifest", str(tmp_path / "missing.json")],
    ]
    for argv in cases:
        code, _, err = run(argv + ["--out", str(tmp_path)], capsys)
        assert code == EXIT_ERROR, argv
        assert err.startswith("error:")


def test_non_convergence_exit_code(tmp_path, capsys):
    code, out, _ = run(["solve", "--problem", "hadeler", "--max-outer", "1", "--out", str(tmp_path)], capsys)
    assert code == EXIT_NOT_CONVERGED
    assert (tmp_path / "eigenvalues.json").exists()
    assert "max_outer" in out


def test_seed_from_environment(tmp_path, capsys, monkeypatch):
    outs = {}
    for label, env_seed, flag in [("env", "3", []), ("flag", None, ["--seed", "3"]), ("default", None, [])]:
        if env_seed is None:
            monkeypatch.delenv(SEED_ENV, raising=False)
        else:
            monkeypatch.setenv(SEED_ENV, env_seed)
        d = tmp_path / label
        code, _, _ = run(["solve", "--problem", "delay", "--p", "2", "--out", str(d)] + flag, capsys)
        assert code == EXIT_OK
        outs[label] = (d / "eigenvalues.json").read_text()
    assert outs["env"] == outs["flag"]
    assert outs["env"] != outs["default"]
    monkeypatch.setenv(SEED_ENV, "abc")
    code, _, err = run(["solve", "--problem", "delay", "--out", str(tmp_path)], capsys)
    assert code == EXIT_ERROR and SEED_ENV in err


def test_deterministic_output(tmp_path, capsys):
    texts = []
    for d in ["a", "b"]:
        run(["solve", "--problem", "hadeler", "--p", "4", "--out", str(tmp_path / d)], capsys)
        texts.append(((tmp_path / d / "eigenvalues.json").read_text(), (tmp_path / d / "convergence.csv").read_text()))
    assert texts[0] == texts[1]


def test_verify_subcommand(capsys):
    code, out, _ = run(["verify", "--problem", "delay"], capsys)
    assert code == EXIT_OK
    assert "newton" in out


def test_verify_refuses_large_oracle(capsys):
    code, _, err = run(["verify", "--problem", "gun"], capsys)
    assert code == EXIT_ERROR and "oracle" in err


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "infarnoldi", "list-problems"], capture_output=True, text=True)
    assert proc.returncode == 0 and "delay" in proc.stdout
