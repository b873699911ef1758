"""End-to-end CLI contract: exit codes, JSON/CSV output, reproducibility."""

import csv
import io
import json
import subprocess
import sys
from importlib.resources import files

import jsonschema
import pytest

from rnnmf import SWEEP_COLUMNS, get_architecture, theta_to_json_dict
from rnnmf.cli import run

from conftest import make_theta


def _schema(name):
    return json.loads((files("rnnmf") / "schemas" / name).read_text())


def _write_theta(tmp_path, arch_name, filename="theta.json", **kw):
    arch = get_architecture(arch_name)
    theta = make_theta(arch, **kw)
    path = tmp_path / filename
    path.write_text(json.dumps(theta_to_json_dict(theta, arch_name)))
    return path


def _rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_help_exits_zero(capsys):
    assert run(["--help"]) == 0
    out = capsys.readouterr().out
    assert "fixed-point" in out and "verify" in out


def test_no_command_prints_help_and_exits_2(capsys):
    assert run([]) == 2
    assert "command" in capsys.readouterr().out


def test_fixed_point_report_is_schema_valid(tmp_path, capsys):
    theta = _write_theta(tmp_path, "GRU")
    assert run(["fixed-point", "--theta", str(theta), "--seed", "0"]) == 0
    doc = json.loads(capsys.readouterr().out)
    jsonschema.validate(doc, _schema("fixed_point_report.schema.json"))
    assert doc["arch"] == "GRU"
    assert 0.0 <= doc["c_star"] <= 1.0
    assert doc["chi"] > 0.0


def test_missing_theta_file_is_a_usage_error(tmp_path, capsys):
    code = run(["fixed-point", "--theta", str(tmp_path / "nope.json")])
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_malformed_theta_json_is_a_usage_error(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["fixed-point", "--theta", str(bad)]) == 2


def _gate(sigma2=0.0, nu2=0.0, rho2=0.0, mu=0.0):
    return {"sigma2": sigma2, "nu2": nu2, "rho2": rho2, "mu": mu}


def test_invalid_theta_values_are_a_usage_error(tmp_path, capsys):
    doc = {"arch": "GRU", "gates": {"f": _gate(sigma2=-0.5), "r": _gate(), "r2": _gate()}}
    bad = tmp_path / "neg.json"
    bad.write_text(json.dumps(doc))
    assert run(["fixed-point", "--theta", str(bad)]) == 2
    assert "error:" in capsys.readouterr().err


def test_arch_flag_must_match_the_file(tmp_path, capsys):
    theta = _write_theta(tmp_path, "GRU")
    assert run(["fixed-point", "--theta", str(theta), "--arch", "LSTM"]) == 2


def test_computation_failure_exits_1_with_json_error(tmp_path, capsys):
    doc = {
        "arch": "peepholeLSTM",
        "gates": {
            "i": _gate(sigma2=0.1, nu2=1.0),
            "f": _gate(mu=10.0),
            "r": _gate(sigma2=0.1, nu2=1.0),
            "o": _gate(sigma2=0.1, nu2=1.0),
        },
    }
    path = tmp_path / "divergent.json"
    path.write_text(json.dumps(doc))
    assert run(["fixed-point", "--theta", str(path), "--seed", "0"]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "NoConvergence"
    assert isinstance(err["message"], str)


def test_omitted_seed_is_drawn_echoed_and_reproducible(tmp_path, capsys):
    theta = _write_theta(tmp_path, "LSTM")
    assert run(["fixed-point", "--theta", str(theta)]) == 0
    captured = capsys.readouterr()
    line = next(l for l in captured.err.splitlines() if l.startswith("seed = "))
    seed = int(line.split("=")[1])
    assert run(["fixed-point", "--theta", str(theta), "--seed", str(seed)]) == 0
    assert capsys.readouterr().out == captured.out


def test_timescale_highlights_xi_on_stderr(tmp_path, capsys):
    theta = _write_theta(tmp_path, "GRU")
    assert run(["timescale", "--theta", str(theta), "--seed", "0"]) == 0
    captured = capsys.readouterr()
    assert "xi = " in captured.err and "steps" in captured.err
    json.loads(captured.out)  # full report still on stdout


def test_jacobian_report_is_schema_valid(tmp_path, capsys):
    theta = _write_theta(tmp_path, "peepholeLSTM")
    assert run(["jacobian", "--theta", str(theta), "--seed", "0"]) == 0
    doc = json.loads(capsys.readouterr().out)
    jsonschema.validate(doc, _schema("jacobian_report.schema.json"))


def test_critical_init_preset_prints_theta(capsys):
    assert run(["critical-init", "--preset", "peephole_critical"]) == 0
    doc = json.loads(capsys.readouterr().out)
    jsonschema.validate(doc, _schema("theta.schema.json"))
    assert doc["arch"] == "peepholeLSTM"
    assert doc["gates"]["f"]["mu"] == 5.0


def test_critical_init_unknown_preset_is_a_usage_error(capsys):
    assert run(["critical-init", "--preset", "nope"]) == 2


def test_critical_init_needs_exactly_one_mode(capsys):
    assert run(["critical-init"]) == 2
    assert run(["critical-init", "--preset", "standard", "--search"]) == 2
    assert run(["critical-init", "--search"]) == 2  # search needs --arch


def test_critical_init_search_reports_progress(capsys):
    code = run(
        ["critical-init", "--search", "--arch", "peepholeLSTM", "--target-xi", "10", "--seed", "0"]
    )
    assert code == 0
    captured = capsys.readouterr()
    doc = json.loads(captured.out)
    jsonschema.validate(doc, _schema("theta.schema.json"))
    assert "xi" in captured.err


def _sweep_files(tmp_path):
    theta0 = _write_theta(tmp_path, "GRU", filename="theta0.json", mu_f=0.0)
    direction = tmp_path / "dir.json"
    direction.write_text(json.dumps({"gates": {"f": {"mu": 1.0}}}))
    return theta0, direction


def test_sweep_csv_matches_the_column_contract(tmp_path, capsys):
    theta0, direction = _sweep_files(tmp_path)
    args = [
        "sweep", "--theta0", str(theta0), "--direction", str(direction),
        "--alphas", "0:2:3", "--arch", "GRU", "--seed", "0",
    ]
    assert run(args + ["--workers", "1"]) == 0
    first = capsys.readouterr().out
    rows = _rows(first)
    assert rows[0] == list(SWEEP_COLUMNS)
    assert len(rows) == 4
    assert [r[0] for r in rows[1:]] == ["0", "1", "2"]
    assert all(r[6] == "ok" for r in rows[1:])
    assert run(args + ["--workers", "2"]) == 0
    assert capsys.readouterr().out == first  # worker count cannot change results


def test_sweep_rejects_a_malformed_grid(tmp_path, capsys):
    theta0, direction = _sweep_files(tmp_path)
    code = run(
        ["sweep", "--theta0", str(theta0), "--direction", str(direction),
         "--alphas", "zero-to-two", "--arch", "GRU", "--seed", "0"]
    )
    assert code == 2


def test_simulate_trajectory_csv(tmp_path, capsys):
    theta = _write_theta(tmp_path, "minimalRNN")
    args = [
        "simulate", "--theta", str(theta), "--N", "32", "--T", "6", "--seed", "0",
    ]
    assert run(args) == 0
    rows = _rows(capsys.readouterr().out)
    assert rows[0] == ["t", "mu", "q", "c", "se_mu", "se_q", "se_c"]
    assert len(rows) == 8
    assert rows[1][0] == "0" and rows[1][3] == "1"  # shared start: c = 1 exactly
    float(rows[-1][1])  # numeric payload


def test_simulate_schedule_length_is_checked(tmp_path, capsys):
    theta = _write_theta(tmp_path, "minimalRNN")
    sched = tmp_path / "sched.txt"
    sched.write_text("0.0\n1.0\n")
    code = run(
        ["simulate", "--theta", str(theta), "--N", "16", "--T", "6",
         "--seed", "0", "--sigma-z-schedule", str(sched)]
    )
    assert code == 2


def test_spectrum_csv_and_theory_line(tmp_path, capsys):
    theta = _write_theta(tmp_path, "GRU")
    assert run(["spectrum", "--theta", str(theta), "--N", "32", "--seed", "0"]) == 0
    captured = capsys.readouterr()
    rows = _rows(captured.out)
    assert rows[0] == ["rank", "squared_singular_value"]
    assert len(rows) == 33
    values = [float(r[1]) for r in rows[1:]]
    assert values == sorted(values, reverse=True)
    assert "empirical mean" in captured.err and "predicted m1" in captured.err


def test_cell_dist_sampler_csv(tmp_path, capsys):
    theta = _write_theta(tmp_path, "LSTM")
    assert run(["cell-dist", "--theta", str(theta), "--seed", "0", "--n-s", "64"]) == 0
    rows = _rows(capsys.readouterr().out)
    assert rows[0] == ["cell"]
    assert len(rows) == 65


def test_cell_dist_simulator_path(tmp_path, capsys):
    theta = _write_theta(tmp_path, "peepholeLSTM")
    code = run(
        ["cell-dist", "--theta", str(theta), "--simulate", "--N", "24", "--T", "10", "--seed", "0"]
    )
    assert code == 0
    assert len(_rows(capsys.readouterr().out)) == 25


def test_cell_dist_guards_the_architecture(tmp_path, capsys):
    gru = _write_theta(tmp_path, "GRU")
    assert run(["cell-dist", "--theta", str(gru), "--seed", "0"]) == 2
    assert run(["cell-dist", "--theta", str(gru), "--simulate", "--seed", "0"]) == 2
    peep = _write_theta(tmp_path, "peepholeLSTM", filename="peep.json")
    assert run(["cell-dist", "--theta", str(peep), "--seed", "0"]) == 2  # sampler is LSTM-only


def test_verify_battery_passes(capsys):
    assert run(["verify"]) == 0
    out = capsys.readouterr().out
    assert "7/7 checks passed" in out
    assert "FAIL" not in out


def test_console_script_is_wired():
    proc = subprocess.run(
        [sys.executable, "-m", "rnnmf.cli", "--help"], capture_output=True, text=True
    )
    assert proc.returncode == 0
    assert "Mean-field" in proc.stdout
