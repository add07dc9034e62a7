"""Process-matrix JSON files and complex-matrix encoding.

File layout::

    {"schema": "procctl-process/1", "dim": 4, "basis": "gell-mann",
     "ordering": "blocks", "matrix": {"re": [[...]], "im": [[...]]}}

Floats are written by ``json`` with ``repr``, which round-trips doubles exactly.
"""

from __future__ import annotations

import json

import numpy as np

from .basis import build_gell_mann_basis, build_logical_basis
from .dynamics import ProcessMatrix
from .errors import ConfigError, DimensionError

__all__ = ["PROCESS_SCHEMA", "encode_matrix", "decode_matrix", "write_process", "read_process", "process_to_dict"]

PROCESS_SCHEMA = "procctl-process/1"


def encode_matrix(m):
    m = np.asarray(m, dtype=np.complex128)
    return {"re": m.real.tolist(), "im": m.imag.tolist()}


def decode_matrix(d, name="matrix"):
    try:
        re = np.array(d["re"], dtype=float)
        im = np.array(d.get("im", np.zeros_like(re)), dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: expected {{re, im}} arrays ({exc})") from exc
    if re.shape != im.shape or re.ndim != 2:
        raise ConfigError(f"{name}: re and im must be 2-d arrays of equal shape")
    return re + 1j * im


def _basis_name(basis):
    return "gell-mann" if basis.kind == "generalized-gell-mann" else "logical"


def process_to_dict(chi):
    return {
        "schema": PROCESS_SCHEMA,
        "dim": chi.basis.dim,
        "basis": _basis_name(chi.basis),
        "ordering": chi.basis.ordering,
        "matrix": encode_matrix(chi.matrix),
    }


def write_process(path, chi):
    with open(path, "w") as fh:
        json.dump(process_to_dict(chi), fh, indent=1)
        fh.write("\n")


def read_process(path):
    try:
        with open(path) as fh:
            d = json.load(fh)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read process file {path}: {exc}") from exc
    if d.get("schema") != PROCESS_SCHEMA:
        raise ConfigError(f"{path}: schema must be {PROCESS_SCHEMA!r}")
    dim = int(d["dim"])
    if d.get("basis") == "gell-mann":
        basis = build_gell_mann_basis(dim, d.get("ordering", "blocks"))
    elif d.get("basis") == "logical":
        basis = build_logical_basis(dim)
    else:
        raise ConfigError(f"{path}: unknown basis {d.get('basis')!r}")
    m = decode_matrix(d["matrix"])
    try:
        return ProcessMatrix(basis, m)
    except DimensionError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
