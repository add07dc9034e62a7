import csv
import json
import os

import numpy as np
import pytest

from procctl.cli import EXIT_CONFIG, EXIT_NONMONOTONIC, EXIT_OK, EXIT_STEP, EXIT_VALIDATION, main
from procctl.config import dump_config, load_config
from procctl.io import encode_matrix, read_process
from procctl.objectives import depolarizing_closed_form, error_probability

from conftest import qubit_config


def write_cfg(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data, indent=2))
    return str(p)


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_simulate_outputs(tmp_path, capsys):
    cfg = write_cfg(tmp_path, qubit_config())
    out = tmp_path / "out"
    assert main(["simulate", cfg, "--out", str(out)]) == EXIT_OK
    for name in ["trajectory.csv", "process_final.json", "pulses.csv", "spectrum_ex.csv", "validation.json"]:
        assert (out / name).exists(), name
    traj = read_csv(out / "trajectory.csv")
    assert traj[0] == ["t_ns", "trace", "min_eig", "herm_err", "fidelity"] and len(traj) == 42
    assert read_csv(out / "pulses.csv")[0] == ["t_ns", "ex"]
    assert read_csv(out / "spectrum_ex.csv")[0] == ["omega_rad_per_ns", "magnitude"]
    rep = json.loads((out / "validation.json").read_text())
    assert rep["oracle"]["passed"] and rep["oracle"]["max_trace_distance"] < 1e-6
    assert rep["invariant_violations"] == []
    text = capsys.readouterr().out
    assert "terminal fidelity -F =" in text and "oracle: max trace distance" in text


def test_simulate_zero_model_keeps_initial(tmp_path):
    z = encode_matrix(np.zeros((2, 2)))
    data = qubit_config()
    data["model"] = {"dim": 2, "drift": z, "controls": [{"name": "ex", "matrix": z}], "jumps": []}
    data["fields"][0]["peak"] = 0.0
    data["objective"] = {"target": "gate:identity"}
    out = tmp_path / "out"
    assert main(["simulate", write_cfg(tmp_path, data), "--out", str(out)]) == EXIT_OK
    chi = read_process(out / "process_final.json").matrix
    want = np.zeros((4, 4))
    want[3, 3] = 2
    assert np.abs(chi - want).max() < 1e-15


def test_simulate_validation_failure(tmp_path):
    data = qubit_config(validation={"oracle_samples": 2, "oracle_tolerance": 1e-30})
    assert main(["simulate", write_cfg(tmp_path, data), "--out", str(tmp_path / "o")]) == EXIT_VALIDATION


def test_bad_config_exit_1(tmp_path, capsys):
    data = qubit_config()
    data["grid"]["bogus"] = 1
    assert main(["simulate", write_cfg(tmp_path, data)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "bogus" in err and "line " in err
    assert main(["simulate", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    assert main(["optimize", write_cfg(tmp_path, data)]) == EXIT_CONFIG


def test_optimize_outputs(tmp_path, capsys):
    cfg = write_cfg(tmp_path, qubit_config())
    out = tmp_path / "out"
    assert main(["optimize", cfg, "--out", str(out), "--gnuplot-snippets"]) == EXIT_OK
    conv = read_csv(out / "convergence.csv")
    assert conv[0] == ["n", "J", "F", "J_f", "A_n", "retries"] and len(conv) == 7
    j = np.array([float(r[1]) for r in conv[1:]])
    assert np.all(np.diff(j) <= 1e-9)
    for name in ["pulses.csv", "spectrum_ex.csv", "process_final.json", "checkpoint.json", "rejected.csv"]:
        assert (out / name).exists(), name
    for name in ["convergence.gp", "pulses.gp", "spectrum_ex.gp"]:
        assert "set datafile separator ','" in (out / name).read_text()
    assert "iterations 5" in capsys.readouterr().out


def test_optimize_max_iters_zero(tmp_path):
    out = tmp_path / "out"
    assert main(["optimize", write_cfg(tmp_path, qubit_config()), "--out", str(out), "--max-iters", "0"]) == EXIT_OK
    conv = read_csv(out / "convergence.csv")
    assert len(conv) == 2 and conv[1][0] == "0"


def test_optimize_deterministic(tmp_path):
    cfg = write_cfg(tmp_path, qubit_config())
    for d in ("a", "b"):
        assert main(["optimize", cfg, "--out", str(tmp_path / d)]) == EXIT_OK
        assert main(["simulate", cfg, "--out", str(tmp_path / d)]) == EXIT_OK
    for name in ["convergence.csv", "pulses.csv", "spectrum_ex.csv", "trajectory.csv", "process_final.json"]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_optimize_resume_equals_straight(tmp_path):
    data = qubit_config(krotov={"max_iters": 6})
    cfg = write_cfg(tmp_path, data)
    assert main(["optimize", cfg, "--out", str(tmp_path / "full")]) == EXIT_OK
    assert main(["optimize", cfg, "--out", str(tmp_path / "half"), "--max-iters", "3"]) == EXIT_OK
    ck = str(tmp_path / "half" / "checkpoint.json")
    assert main(["optimize", cfg, "--out", str(tmp_path / "rest"), "--resume", ck]) == EXIT_OK
    for name in ["convergence.csv", "pulses.csv", "process_final.json"]:
        assert (tmp_path / "full" / name).read_bytes() == (tmp_path / "rest" / name).read_bytes(), name


def test_optimize_bad_checkpoint(tmp_path):
    cfg = write_cfg(tmp_path, qubit_config())
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    assert main(["optimize", cfg, "--resume", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert main(["optimize", cfg, "--resume", str(tmp_path / "none.json"), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_optimize_nonmonotonic_exit(tmp_path, monkeypatch):
    import procctl.krotov as krotov

    monkeypatch.setattr(krotov, "_field_cost", lambda *a: 10.0)
    data = qubit_config(krotov={"max_iters": 2, "retry_limit": 0, "escalation_limit": 1})
    out = tmp_path / "o"
    assert main(["optimize", write_cfg(tmp_path, data), "--out", str(out)]) == EXIT_NONMONOTONIC
    assert len(read_csv(out / "convergence.csv")) == 2


def test_optimize_step_failure_exit(tmp_path):
    data = qubit_config(krotov={"max_iters": 1, "fixed_point_max": 1})
    assert main(["optimize", write_cfg(tmp_path, data), "--out", str(tmp_path / "o")]) == EXIT_STEP


def test_target_identity(tmp_path):
    p = tmp_path / "id.json"
    assert main(["target", "gate:identity", str(p)]) == EXIT_OK
    d = json.loads(p.read_text())
    assert d["schema"] == "procctl-process/1" and d["dim"] == 4 and d["basis"] == "gell-mann"
    m = np.array(d["matrix"]["re"]) + 1j * np.array(d["matrix"]["im"])
    assert m[15, 15] == 4 and np.count_nonzero(m) == 1


def test_target_depolarizing(tmp_path):
    p = tmp_path / "dep.json"
    assert main(["target", "depolarizing:tf=900", str(p)]) == EXIT_OK
    chi = read_process(p)
    want = depolarizing_closed_form(error_probability(900.0), chi.basis.ordering)
    assert np.abs(chi.matrix - want).max() < 1e-10


def test_target_decoherence_zero(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["target", "decoherence:tf=0", str(a)]) == EXIT_OK
    assert main(["target", "gate:identity", str(b)]) == EXIT_OK
    assert np.array_equal(read_process(a).matrix, read_process(b).matrix)


def test_target_logical_basis(tmp_path):
    p = tmp_path / "l.json"
    assert main(["target", "gate:identity", str(p), "--basis", "logical"]) == EXIT_OK
    chi = read_process(p)
    assert chi.basis.kind != "generalized-gell-mann"
    assert abs(chi.trace - 4) < 1e-12


@pytest.mark.parametrize("spec", ["gate:cnot", "depolarizing:tf=abc", "decoherence", "nonsense"])
def test_target_malformed(tmp_path, spec, capsys):
    assert main(["target", spec, str(tmp_path / "x.json")]) == EXIT_CONFIG
    assert "error:" in capsys.readouterr().err


def test_dump_preset(tmp_path, capsys):
    p = tmp_path / "iii.json"
    assert main(["dump-preset", "III", str(p), "--n-steps", "30", "--max-iters", "2"]) == EXIT_OK
    cfg = load_config(str(p))
    assert cfg.data["grid"]["n_steps"] == 30 and cfg.data["krotov"]["max_iters"] == 2
    assert dump_config(cfg) == p.read_text()
    assert main(["dump-preset", "gate-simulation", "-"]) == EXIT_OK
    assert '"gate:phase:pi"' in capsys.readouterr().out
    assert main(["dump-preset", "IV", "-"]) == EXIT_CONFIG


def test_simulate_preset_pulse_header(tmp_path):
    p = tmp_path / "ii.json"
    main(["dump-preset", "II", str(p), "--n-steps", "50"])
    data = json.loads(p.read_text())
    data["validation"]["oracle_samples"] = 0
    out = tmp_path / "o"
    assert main(["simulate", write_cfg(tmp_path, data, "ii2.json"), "--out", str(out)]) == EXIT_OK
    assert read_csv(out / "pulses.csv")[0] == ["t_ns", "omega_p_rad_per_ns", "omega_s_rad_per_ns"]


def test_jobs_fan_out(tmp_path):
    a = write_cfg(tmp_path, qubit_config(), "a.json")
    b = write_cfg(tmp_path, qubit_config(grid={"t_f_ns": 8.0, "n_steps": 30}), "b.json")
    out = tmp_path / "o"
    assert main(["simulate", a, b, "--jobs", "2", "--out", str(out)]) == EXIT_OK
    assert len(read_csv(out / "a" / "trajectory.csv")) == 42
    assert len(read_csv(out / "b" / "trajectory.csv")) == 32
    serial = tmp_path / "s"
    assert main(["simulate", a, b, "--out", str(serial)]) == EXIT_OK
    assert (serial / "a" / "trajectory.csv").read_bytes() == (out / "a" / "trajectory.csv").read_bytes()


def test_threads_env(tmp_path, monkeypatch):
    monkeypatch.setenv("PROCCTL_THREADS", "1")
    assert main(["simulate", write_cfg(tmp_path, qubit_config()), "--out", str(tmp_path / "o")]) == EXIT_OK
