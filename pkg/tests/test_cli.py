import csv
import io
import json
import subprocess
import sys

import pytest

from cayleygibbs import __version__
from cayleygibbs.cli import (OUTPUT_DIR_ENV, ParseError, ValidationError, emit, execute, main,
                             parse_config, run_job)
from cayleygibbs.kernel import OddRational, TauVariant

SOLVE_TAU = "command = solve\nkernel = tau\ntau = 1/1\nvariant = corrected\nnodes = 64\n"


def test_parse_example():
    job = parse_config(SOLVE_TAU)
    assert job.command == "solve"
    assert job.tau == OddRational(1) and job.variant is TauVariant.CORRECTED
    assert job.nodes == 64 and job.seed == 0


def test_comments_and_blank_lines():
    job = parse_config("# a job\n\ncommand = scan-positivity  # inline\nkernel = ising\nJ = -1.5\n")
    assert job.J == -1.5 and job.couplings.J == -1.5


@pytest.mark.parametrize("text,key", [
    ("command = solve\nkernel = tau\ntau = 2/1\n", "tau"),
    ("kernel = ising\n", "command"),
    ("command = solve\n", "kernel"),
    ("command = solve\nkernel = ising\nfoo = 1\n", "foo"),
    ("command = solve\nkernel = ising\nbeta = 0\n", "beta"),
    ("command = solve\nkernel = potts\nJ3 = 1\n", "J3"),
    ("command = solve\nkernel = ising\nnodes = x\n", "nodes"),
    ("command = solve\nkernel = ising\nformat = csv\n", "format"),
    ("command = oracle-check\nkernel = tau\ntau = 1\n", "kernel"),
    ("command = solve\nkernel = tau\n", "tau"),
])
def test_validation_errors(text, key):
    with pytest.raises(ValidationError) as info:
        parse_config(text)
    assert info.value.key == key
    assert info.value.record()["key"] == key


@pytest.mark.parametrize("text,line", [("command = solve\nkernel ising\n", 2),
                                       ("command = solve\ncommand = sweep\n", 2),
                                       ("\n = 3\n", 2)])
def test_parse_errors(text, line):
    with pytest.raises(ParseError) as info:
        parse_config(text)
    assert info.value.line == line


def test_round_trip():
    job = parse_config(SOLVE_TAU + "damping = 0.75\ntaus = 1/3,5\nnewton = yes\n")
    again = parse_config(emit(job))
    assert again == job
    assert run_job(again)[1] == run_job(job)[1]


def test_solve_ising_report():
    code, rep = run_job(parse_config("command = solve\nkernel = ising\nJ = 1\nalpha = 0.5\n"))
    assert code == 0 and rep["status"] == "ok"
    assert rep["result"]["distinct_fixed_points"] == 1
    assert max(abs(v - 1) for v in rep["result"]["fixed_points"][0]["values"]) < 1e-10
    assert rep["tool_version"] == __version__ and rep["seed"] == 0
    assert rep["config"]["kernel"] == "ising" and rep["schema_version"] == "1"


def test_solve_tau_with_newton():
    code, rep = run_job(parse_config(SOLVE_TAU + "newton = true\n"))
    fps = rep["result"]["fixed_points"]
    assert code == 0 and len(fps) == 2
    assert all(fp["residual"] < 1e-12 for fp in fps)


def test_not_converged_exit_code():
    code, rep = run_job(parse_config("command = solve\nkernel = sum\nmax_iter = 1\ntol = 1e-15\n"
                                     "n_starts = 3\n"))
    assert code == 1 and rep["status"] == "not_converged" and rep["errors"]


def test_scan_reports_negative_minimum():
    code, rep = run_job(parse_config("command = scan-positivity\nkernel = tau\ntau = 1\n"
                                     "resolution = 51\n"))
    assert code == 0 and rep["result"]["scan"]["min_value"] < 0


def test_verify_printed():
    code, rep = run_job(parse_config("command = verify-analytic\nkernel = tau\ntau = 1\n"
                                     "variant = printed\n"))
    res = rep["result"]
    assert code == 0
    assert 1.8 <= res["reports"][1]["residual_sup"] <= 2.0
    assert res["printed_closed_form_defect"] < 1e-9


def test_separability_and_period_two():
    code, rep = run_job(parse_config("command = check-separability\nkernel = ising\nJ1 = 0.4\n"))
    assert code == 0 and rep["result"]["separability"]["separable"]
    assert rep["result"]["pair_operator_defect"] < 1e-12
    code, rep = run_job(parse_config("command = solve-period2\nkernel = sum\nn_starts = 5\n"))
    assert code == 0
    assert rep["result"]["classification_counts"] == {"translation_invariant": 5}


def test_oracle_check():
    code, rep = run_job(parse_config("command = oracle-check\nkernel = ising\nJ1 = 0.5\n"
                                     "oracle_method = factorized\n"))
    assert code == 0 and rep["result"]["residual"] < 1e-6
    assert rep["result"]["notes"]


def test_sweep_csv(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path))
    job = parse_config("command = sweep\nvariant = printed\nformat = csv\nresolution = 41\n"
                       "output = sweep.csv\n")
    code, path, _ = execute(job)
    assert code == 0 and path == tmp_path / "sweep.csv"
    text = path.read_text()
    assert text.startswith("# tool_version=")
    rows = list(csv.DictReader(io.StringIO("".join(l for l in text.splitlines(True)
                                                   if not l.startswith("#")))))
    assert [r["tau"] for r in rows] == ["1/1", "3/1", "5/1", "7/1", "9/1"]
    assert [r["positive"] for r in rows] == ["False", "False", "False", "True", "True"]


def test_execute_writes_timestamped_json(tmp_path):
    job = parse_config("command = scan-positivity\nkernel = ising\nresolution = 11\n")
    code, path, payload = execute(job, tmp_path / "r.json")
    on_disk = json.loads(path.read_text())
    assert "timestamp" in on_disk and "timestamp" not in payload
    on_disk.pop("timestamp")
    assert on_disk == json.loads(json.dumps(payload))


def test_main_config_error(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("command = solve\nkernel = tau\ntau = 2/1\n")
    assert main([str(cfg)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["status"] == "config_error" and err["errors"][0]["key"] == "tau"


def test_module_entry_point(tmp_path):
    cfg = tmp_path / "job.cfg"
    cfg.write_text("command = solve\nkernel = potts\nJ = 1\nn_starts = 4\n")
    out = tmp_path / "out.json"
    proc = subprocess.run([sys.executable, "-m", "cayleygibbs", str(cfg), "-o", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(out.read_text())["result"]["distinct_fixed_points"] == 1
