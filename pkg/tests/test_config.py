import json

import numpy as np
import pytest

from procctl.config import (
    build_target,
    canonical,
    dump_config,
    load_config,
    parse_angle,
    parse_config,
    preset_config,
)
from procctl.errors import ConfigError, InvalidScenarioError, InvalidTargetError
from procctl.io import encode_matrix, write_process
from procctl.dynamics import ProcessMatrix
from procctl.basis import build_gell_mann_basis
from procctl.objectives import depolarizing_closed_form, error_probability, gate_target, phase_gate

from conftest import qubit_config


def test_qubit_config_builds():
    setup = parse_config(json.dumps(qubit_config())).build()
    assert setup.model.dim == 2 and setup.grid.n_steps == 40
    assert setup.fields[0].name == "ex"
    assert abs(setup.fields[0].samples.max() - 0.3) < 0.01
    assert np.abs(setup.objective.target - gate_target(np.diag([1, -1]), setup.basis)).max() < 1e-14
    assert setup.krotov.max_iters == 5


def test_roundtrip_canonical(tmp_path):
    cfg = parse_config(json.dumps(qubit_config(), indent=3))
    text = dump_config(cfg)
    again = parse_config(text)
    assert again == cfg
    assert json.loads(text) == canonical(json.loads(text))
    p = tmp_path / "c.json"
    dump_config(cfg, p)
    assert load_config(p) == cfg


def test_defaults_filled():
    d = parse_config(json.dumps(qubit_config())).data
    assert d["krotov"]["j_tolerance"] == 1e-10 and d["krotov"]["max_iters"] == 5
    assert d["objective"]["w0"] == 1.0 and d["output"]["formats"] == ["csv", "json"]


def test_unknown_key_rejected_with_line():
    data = qubit_config()
    data["grid"]["n_step"] = 3
    text = json.dumps(data, indent=2)
    want = next(i + 1 for i, line in enumerate(text.splitlines()) if '"n_step"' in line)
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert "n_step" in str(exc.value)
    assert exc.value.line == want
    assert str(exc.value).startswith(f"line {want}:")


def test_unknown_top_level_section():
    data = qubit_config(extra={})
    with pytest.raises(ConfigError, match="extra"):
        parse_config(json.dumps(data, indent=2))


def test_json_syntax_error_line():
    text = '{\n "schema": "procctl-config/1",\n "grid": {,}\n}'
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.line == 3


def test_wrong_type_anchored():
    data = qubit_config()
    data["grid"]["n_steps"] = "forty"
    text = json.dumps(data, indent=2)
    want = next(i + 1 for i, line in enumerate(text.splitlines()) if '"n_steps"' in line)
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.line == want


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d["model"].update(preset="rydberg"),
        lambda d: d["objective"].update(target_file="x.json"),
        lambda d: d["objective"].pop("target"),
        lambda d: d["fields"][0].update(samples=[0.0] * 40),
        lambda d: d["fields"][0].pop("peak"),
        lambda d: d.pop("grid"),
        lambda d: d.update(schema="procctl-config/0"),
    ],
)
def test_structural_errors(mutate):
    data = qubit_config()
    mutate(data)
    with pytest.raises(ConfigError):
        parse_config(json.dumps(data, indent=2))


def test_build_errors():
    bad_field_count = qubit_config()
    bad_field_count["fields"].append(dict(bad_field_count["fields"][0], name="ey"))
    with pytest.raises(ConfigError):
        parse_config(json.dumps(bad_field_count)).build()
    non_herm = qubit_config()
    non_herm["model"]["drift"] = encode_matrix(np.array([[0, 1], [0, 0]]))
    with pytest.raises(ConfigError):
        parse_config(json.dumps(non_herm)).build()
    bad_target = qubit_config(objective={"target": "gate:swap"})
    with pytest.raises(ConfigError):
        parse_config(json.dumps(bad_target)).build()


def test_target_file(tmp_path, gm2):
    prod = build_gell_mann_basis(2, "product")
    chi = gate_target(np.diag([1, 1j]), prod)
    write_process(tmp_path / "t.json", ProcessMatrix(prod, chi))
    data = qubit_config(objective={"target_file": str(tmp_path / "t.json")})
    setup = parse_config(json.dumps(data)).build()
    want = gate_target(np.diag([1, 1j]), setup.basis)
    assert np.abs(setup.objective.target - want).max() < 1e-14


@pytest.mark.parametrize(
    "text, value",
    [("pi", np.pi), ("pi/2", np.pi / 2), ("-3pi/4", -0.75 * np.pi), ("0.5*pi", 0.5 * np.pi), ("1.25", 1.25)],
)
def test_parse_angle(text, value):
    assert abs(parse_angle(text) - value) < 1e-15


def test_parse_angle_error():
    with pytest.raises(InvalidTargetError):
        parse_angle("tau")


def test_target_specs(gm4):
    ident = build_target("gate:identity", gm4)
    assert ident[15, 15] == 4 and np.count_nonzero(ident) == 1
    phase = build_target("gate:phase:pi", gm4)
    assert np.abs(phase - gate_target(phase_gate(np.pi), gm4)).max() < 1e-14
    lvl = build_target("gate:phase:pi/2:level=2", gm4)
    assert np.abs(lvl - gate_target(phase_gate(np.pi / 2, level=2), gm4)).max() < 1e-14
    dec0 = build_target("decoherence:tf=0", gm4)
    assert np.abs(dec0 - ident).max() == 0
    dep = build_target("depolarizing:tf=900", gm4)
    ref = depolarizing_closed_form(error_probability(900.0), gm4.ordering)
    assert np.abs(dep - ref).max() < 1e-10
    dep_p = build_target("depolarizing:p=0.2", gm4)
    assert np.abs(dep_p - depolarizing_closed_form(0.2, gm4.ordering)).max() < 1e-10


@pytest.mark.parametrize(
    "spec", ["gate", "gate:phase", "gate:phase:pi:level=7", "decoherence", "decoherence:t=3", "depolarizing:p=2", "x:y"]
)
def test_bad_target_specs(spec, gm4):
    with pytest.raises((InvalidTargetError, IndexError)):
        build_target(spec, gm4)


def test_decoherence_uses_model(gm2):
    from conftest import qubit_model

    m = qubit_model(delta=0.4)
    tgt = build_target("decoherence:tf=3", gm2, m)
    want = gate_target(np.diag(np.exp(-1j * np.array([0.2, -0.2]) * 3)), gm2)
    assert np.abs(tgt - want).max() < 1e-14


@pytest.mark.parametrize("name", ["gate-simulation", "II", "passive-environment"])
def test_preset_config_builds(name):
    data = preset_config(name, n_steps=30)
    cfg = parse_config(dump_config(data))
    setup = cfg.build()
    assert setup.model.dim == 4 and setup.grid.n_steps == 30
    assert [f.name for f in setup.fields] == ["omega_p_rad_per_ns", "omega_s_rad_per_ns"]


def test_preset_defaults():
    d = preset_config("III")
    assert d["grid"] == {"t_f_ns": 900.0, "n_steps": 900}
    assert d["objective"]["target"] == "depolarizing:tf=900"
    assert d["krotov"]["zeta_A"] == 0.0
    assert preset_config("I")["krotov"]["zeta_A"] == 0.01
    assert preset_config("I", frame="absorbed")["model"]["params"]["frame"] == "absorbed"
    with pytest.raises(InvalidScenarioError):
        preset_config("IV")
