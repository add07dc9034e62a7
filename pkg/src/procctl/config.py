"""Run configuration: JSON schema, defaults, line-anchored errors and target specs.

A configuration is a JSON object with the sections ``model``, ``grid``,
``objective``, ``fields``, ``krotov``, ``output`` and ``validation``. Unknown
keys are rejected. :func:`canonical` fills every default so that two files
describing the same run compare equal.
"""

from __future__ import annotations

import copy
import json
import math
import os
import re
from dataclasses import dataclass, fields as dc_fields

import jsonschema
import numpy as np

from .basis import build_gell_mann_basis
from .dynamics import LindbladModel
from .errors import ConfigError, DomainError, InvalidTargetError
from .fields import ControlField, ShapeFunction, TimeGrid
from .io import decode_matrix, encode_matrix, read_process
from .krotov import KrotovConfig
from .objectives import (
    Objective,
    decoherence_suppression_target,
    depolarizing_target,
    error_probability,
    gate_target,
    phase_gate,
)
from .rydberg import PUMP_SHAPE, SCENARIOS, STOKES_SHAPE, ALIASES, RydbergParams, rydberg_model

__all__ = [
    "CONFIG_SCHEMA_ID",
    "SCHEMA",
    "RunConfig",
    "RunSetup",
    "load_config",
    "parse_config",
    "canonical",
    "dump_config",
    "preset_config",
    "build_target",
    "parse_angle",
]

CONFIG_SCHEMA_ID = "procctl-config/1"

_MATRIX = {
    "type": "object",
    "properties": {
        "re": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
        "im": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
    },
    "required": ["re"],
    "additionalProperties": False,
}

_PARAMS = {
    "type": "object",
    "properties": {
        "delta_p": {"type": "number"},
        "delta_s": {"type": "number"},
        "omega0": {"type": "number"},
        "frame": {"enum": ["literal", "absorbed"]},
        "tau_i": {"type": "number", "exclusiveMinimum": 0},
        "tau_r": {"type": "number", "exclusiveMinimum": 0},
        "e_peak": {"type": "number", "minimum": 0},
        "g": {"type": "number"},
        "weight": {"type": "number", "exclusiveMinimum": 0},
        "dt": {"type": "number", "exclusiveMinimum": 0},
    },
    "additionalProperties": False,
}

SCHEMA = {
    "type": "object",
    "properties": {
        "schema": {"const": CONFIG_SCHEMA_ID},
        "model": {
            "type": "object",
            "properties": {
                "preset": {"enum": ["rydberg"]},
                "params": _PARAMS,
                "dim": {"type": "integer", "minimum": 2},
                "drift": _MATRIX,
                "frame": {"oneOf": [_MATRIX, {"type": "null"}]},
                "controls": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "properties": {"name": {"type": "string"}, "matrix": _MATRIX},
                        "required": ["name", "matrix"],
                        "additionalProperties": False,
                    },
                },
                "jumps": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "properties": {"matrix": _MATRIX, "rate": {"type": "number", "minimum": 0}},
                        "required": ["matrix", "rate"],
                        "additionalProperties": False,
                    },
                },
            },
            "additionalProperties": False,
        },
        "grid": {
            "type": "object",
            "properties": {
                "t_f_ns": {"type": "number", "exclusiveMinimum": 0},
                "n_steps": {"type": "integer", "minimum": 2},
            },
            "required": ["t_f_ns", "n_steps"],
            "additionalProperties": False,
        },
        "objective": {
            "type": "object",
            "properties": {
                "target": {"type": "string"},
                "target_file": {"type": "string"},
                "w0": {"type": "number", "minimum": 0},
                "kind": {"enum": ["normalized", "linear"]},
            },
            "additionalProperties": False,
        },
        "fields": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "name": {"type": "string"},
                    "shape": {
                        "type": "object",
                        "properties": {
                            "kind": {"enum": ["blackman-paper", "constant", "custom-samples"]},
                            "g": {"type": "number"},
                            "k": {"type": "integer"},
                            "l": {"type": "integer"},
                            "samples": {"type": "array", "items": {"type": "number", "minimum": 0}},
                        },
                        "required": ["kind"],
                        "additionalProperties": False,
                    },
                    "peak": {"type": "number", "minimum": 0},
                    "samples": {"type": "array", "items": {"type": "number"}},
                    "weight": {"type": "number", "exclusiveMinimum": 0},
                },
                "required": ["name", "shape", "weight"],
                "additionalProperties": False,
            },
        },
        "krotov": {
            "type": "object",
            "properties": {
                "max_iters": {"type": "integer", "minimum": 0},
                "j_tolerance": {"type": "number", "minimum": 0},
                "zeta_A": {"type": "number", "minimum": 0},
                "zeta_B": {"type": "number", "minimum": 0},
                "A_override": {"type": ["number", "null"], "minimum": 0},
                "retry_limit": {"type": "integer", "minimum": 0},
                "escalation_limit": {"type": "integer", "minimum": 0},
                "escalation_factor": {"type": "number", "exclusiveMinimum": 1},
                "checkpoint_every": {"type": "integer", "minimum": 0},
                "fixed_point_tol": {"type": "number", "exclusiveMinimum": 0},
                "fixed_point_max": {"type": "integer", "minimum": 1},
                "costate_midpoint": {"enum": ["half-step", "average"]},
            },
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {
                "directory": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": ["csv", "json"]}},
                "gnuplot_snippets": {"type": "boolean"},
                "spectrum_window": {"enum": [None, "hann", "blackman"]},
            },
            "additionalProperties": False,
        },
        "validation": {
            "type": "object",
            "properties": {
                "oracle_samples": {"type": "integer", "minimum": 0},
                "oracle_tolerance": {"type": "number", "exclusiveMinimum": 0},
                "seed": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
    },
    "required": ["schema", "model", "grid", "objective", "fields"],
    "additionalProperties": False,
}

_DEFAULTS = {
    "objective": {"w0": 1.0, "kind": "normalized"},
    "krotov": {f.name: f.default for f in dc_fields(KrotovConfig)},
    "output": {"directory": "out", "formats": ["csv", "json"], "gnuplot_snippets": False, "spectrum_window": None},
    "validation": {"oracle_samples": 10, "oracle_tolerance": 1e-6, "seed": 0},
}


def _line_of(text, path):
    """Best-effort 1-based line of the JSON location ``path`` in ``text``."""
    pos = 0
    for key in path:
        if isinstance(key, str):
            idx = text.find(json.dumps(key), pos)
            if idx < 0:
                break
            pos = idx
        else:
            # skip to the key'th element: approximate by advancing past that many '{' or '['
            for _ in range(int(key) + 1):
                nxt = min([i for i in (text.find("{", pos + 1), text.find("[", pos + 1)) if i >= 0], default=-1)
                if nxt < 0:
                    break
                pos = nxt
    return text.count("\n", 0, pos) + 1


def _schema_error(err, text):
    path = list(err.absolute_path)
    if err.validator == "additionalProperties" and isinstance(err.instance, dict):
        allowed = set(err.schema.get("properties", {}))
        extra = sorted(k for k in err.instance if k not in allowed)
        if extra:
            where = ".".join(str(p) for p in path) or "<top>"
            return ConfigError(f"unknown key {extra[0]!r} in {where}", _line_of(text, path + [extra[0]]))
    where = ".".join(str(p) for p in path) or "<top>"
    return ConfigError(f"{where}: {err.message}", _line_of(text, path))


def canonical(data):
    """Return ``data`` with every optional section and default filled in."""
    out = copy.deepcopy(data)
    for section, defaults in _DEFAULTS.items():
        merged = dict(defaults)
        merged.update(out.get(section, {}))
        out[section] = merged
    model = out["model"]
    if model.get("preset") == "rydberg":
        params = RydbergParams(**model.get("params", {}))
        model["params"] = params.to_dict()
    return out


def parse_config(text, source="<config>"):
    """Parse and validate configuration text; raises ``ConfigError`` with a line number."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: invalid JSON: {exc.msg}", exc.lineno) from exc
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: _line_of(text, list(e.absolute_path)))
    if errors:
        raise _schema_error(errors[0], text)
    model = data["model"]
    if "preset" in model:
        inline = {"dim", "drift", "controls", "jumps", "frame"} & set(model)
        if inline:
            raise ConfigError(f"model: preset cannot be combined with {sorted(inline)}", _line_of(text, ["model"]))
    elif not {"dim", "drift"} <= set(model):
        raise ConfigError("model: give either a preset or dim and drift", _line_of(text, ["model"]))
    obj = data["objective"]
    if ("target" in obj) == ("target_file" in obj):
        raise ConfigError("objective: give exactly one of target or target_file", _line_of(text, ["objective"]))
    for i, f in enumerate(data["fields"]):
        if ("peak" in f) == ("samples" in f):
            raise ConfigError(
                f"fields[{i}]: give exactly one of peak or samples", _line_of(text, ["fields", i, "name"])
            )
    return RunConfig(canonical(data), source, text)


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(text, path)


def dump_config(cfg_or_data, path=None):
    data = cfg_or_data.data if isinstance(cfg_or_data, RunConfig) else canonical(cfg_or_data)
    text = json.dumps(data, indent=2, sort_keys=True) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


_ANGLE = re.compile(r"^\s*([+-]?\d*\.?\d*)\s*\*?\s*pi\s*(?:/\s*(\d+(?:\.\d*)?))?\s*$")


def parse_angle(text):
    """``"pi"``, ``"pi/2"``, ``"-3pi/4"``, ``"0.5*pi"`` or a plain number (radians)."""
    m = _ANGLE.match(text)
    if m:
        coef = m.group(1)
        c = -1.0 if coef == "-" else 1.0 if coef in ("", "+") else float(coef)
        den = float(m.group(2)) if m.group(2) else 1.0
        return c * math.pi / den
    try:
        return float(text)
    except ValueError:
        raise InvalidTargetError(f"cannot parse angle {text!r}") from None


def _kv(parts):
    out = {}
    for p in parts:
        for item in p.split(","):
            if not item:
                continue
            if "=" not in item:
                raise InvalidTargetError(f"expected key=value, got {item!r}")
            k, v = item.split("=", 1)
            try:
                out[k.strip()] = float(v)
            except ValueError:
                raise InvalidTargetError(f"bad number in {item!r}") from None
    return out


def build_target(spec, basis, model=None, params=None):
    """Target process from a builder spec.

    ``gate:identity``, ``gate:phase:<angle>[:level=<n>]``,
    ``decoherence:tf=<ns>``, ``depolarizing:tf=<ns>[,tau=<ns>]`` or
    ``depolarizing:p=<p>``. The decoherence target uses the field-free
    Hamiltonian of ``model`` (the Rydberg preset when omitted).
    """
    parts = spec.strip().split(":")
    head = parts[0]
    if head == "gate":
        if parts[1:] == ["identity"]:
            return gate_target(np.eye(basis.dim), basis)
        if len(parts) >= 3 and parts[1] == "phase":
            opts = _kv(parts[3:])
            level = int(opts.get("level", 1))
            if not 0 <= level < basis.dim:
                raise InvalidTargetError(f"phase level {level} out of range")
            return gate_target(phase_gate(parse_angle(parts[2]), basis.dim, level), basis)
    elif head == "decoherence" and len(parts) == 2:
        opts = _kv(parts[1:])
        if set(opts) != {"tf"}:
            raise InvalidTargetError("decoherence spec needs tf=<ns>")
        if model is None:
            model = rydberg_model(params or RydbergParams())
        h = model.hamiltonian(np.zeros(model.n_controls))
        return decoherence_suppression_target(opts["tf"], h, basis)
    elif head == "depolarizing" and len(parts) == 2:
        opts = _kv(parts[1:])
        if set(opts) == {"p"}:
            p = opts["p"]
        elif "tf" in opts and set(opts) <= {"tf", "tau"}:
            tau = opts.get("tau", (params or RydbergParams()).tau_i)
            p = error_probability(opts["tf"], tau)
        else:
            raise InvalidTargetError("depolarizing spec needs tf=<ns>[,tau=<ns>] or p=<p>")
        try:
            return depolarizing_target(p, basis)
        except DomainError as exc:
            raise InvalidTargetError(str(exc)) from exc
    raise InvalidTargetError(f"malformed target spec {spec!r}")


@dataclass(eq=False)
class RunSetup:
    model: LindbladModel
    grid: TimeGrid
    fields: tuple
    objective: Objective
    basis: object
    krotov: KrotovConfig
    output: dict
    validation: dict


@dataclass(eq=False)
class RunConfig:
    """Validated, canonical configuration."""

    data: dict
    source: str = "<config>"
    text: str = ""

    def __eq__(self, other):
        return isinstance(other, RunConfig) and dump_config(self) == dump_config(other)

    def _err(self, msg, path):
        return ConfigError(f"{self.source}: {msg}", _line_of(self.text, path) if self.text else None)

    def build_model(self):
        m = self.data["model"]
        if m.get("preset") == "rydberg":
            return rydberg_model(RydbergParams(**m["params"])), RydbergParams(**m["params"])
        try:
            model = LindbladModel(
                dim=m["dim"],
                drift=decode_matrix(m["drift"], "model.drift"),
                controls=tuple(decode_matrix(c["matrix"], f"control {c['name']}") for c in m.get("controls", [])),
                jumps=tuple((decode_matrix(j["matrix"], "jump"), j["rate"]) for j in m.get("jumps", [])),
                frame=None if m.get("frame") is None else decode_matrix(m["frame"], "model.frame"),
                control_names=tuple(c["name"] for c in m.get("controls", [])),
            )
        except (ValueError, ArithmeticError) as exc:
            raise self._err(f"model: {exc}", ["model"]) from exc
        return model, None

    def build(self):
        model, params = self.build_model()
        g = self.data["grid"]
        try:
            grid = TimeGrid(g["t_f_ns"], g["n_steps"])
        except ValueError as exc:
            raise self._err(f"grid: {exc}", ["grid"]) from exc
        basis = build_gell_mann_basis(model.dim)
        if len(self.data["fields"]) != model.n_controls:
            raise self._err(
                f"{len(self.data['fields'])} fields given for {model.n_controls} control operators", ["fields"]
            )
        fields = []
        for i, f in enumerate(self.data["fields"]):
            sh = dict(f["shape"])
            if "samples" in sh:
                sh["samples"] = tuple(sh["samples"])
            try:
                shape = ShapeFunction(**sh)
                s = shape.on_grid(grid)
                samples = f["peak"] * s if "peak" in f else np.array(f["samples"], dtype=float)
                fields.append(ControlField(f["name"], samples, shape, f["weight"], grid))
            except (ValueError, TypeError) as exc:
                raise self._err(f"fields[{i}]: {exc}", ["fields", i, "name"]) from exc
        o = self.data["objective"]
        try:
            if "target" in o:
                target = build_target(o["target"], basis, model, params)
            else:
                chi = read_process(o["target_file"])
                if chi.basis.dim != model.dim:
                    raise InvalidTargetError("target dimension does not match the model")
                if chi.basis.ordering != basis.ordering or chi.basis.kind != basis.kind:
                    from .basis import basis_change

                    target = basis_change(chi.basis, basis).apply(chi.matrix)
                else:
                    target = chi.matrix
        except (ValueError, KeyError) as exc:
            raise self._err(f"objective: {exc}", ["objective"]) from exc
        objective = Objective(target, o["w0"], o["kind"], o.get("target", o.get("target_file", "")))
        try:
            krotov = KrotovConfig(**self.data["krotov"])
        except ValueError as exc:
            raise self._err(f"krotov: {exc}", ["krotov"]) from exc
        return RunSetup(model, grid, tuple(fields), objective, basis, krotov, self.data["output"], self.data["validation"])


TARGET_SPECS = {
    "gate-simulation": "gate:phase:pi",
    "decoherence-suppression": "decoherence:tf={t_f:g}",
    "passive-environment": "depolarizing:tf={t_f:g}",
}


def preset_config(name, n_steps=None, frame=None, weight=None, max_iters=None):
    """Fully expanded configuration of a Rydberg scenario preset."""
    kind = ALIASES.get(name, name)
    if kind not in SCENARIOS:
        from .errors import InvalidScenarioError

        raise InvalidScenarioError(f"unknown scenario {name!r}; choose one of {sorted(SCENARIOS)}")
    params = RydbergParams() if frame is None else RydbergParams(frame=frame)
    preset = SCENARIOS[kind]
    t_f = preset["t_f"]
    n = int(round(t_f / params.dt)) if n_steps is None else int(n_steps)
    w = params.weight if weight is None else weight
    krotov = {"zeta_A": preset["zeta_A"], "zeta_B": preset["zeta_B"]}
    if max_iters is not None:
        krotov["max_iters"] = int(max_iters)
    data = {
        "schema": CONFIG_SCHEMA_ID,
        "model": {"preset": "rydberg", "params": params.to_dict()},
        "grid": {"t_f_ns": t_f, "n_steps": n},
        "objective": {"target": TARGET_SPECS[kind].format(t_f=t_f), "w0": 1.0},
        "fields": [
            {
                "name": "omega_p_rad_per_ns",
                "shape": {"kind": "blackman-paper", "g": params.g, **PUMP_SHAPE},
                "peak": params.e_peak,
                "weight": w,
            },
            {
                "name": "omega_s_rad_per_ns",
                "shape": {"kind": "blackman-paper", "g": params.g, **STOKES_SHAPE},
                "peak": params.e_peak,
                "weight": w,
            },
        ],
        "krotov": krotov,
        "output": {"directory": os.path.join("out", kind)},
    }
    return canonical(data)
