"""Four-level Rydberg-ion ladder: Hamiltonian, decay channels and scenario presets.

Levels are ordered ``|0>, |1>, |i>, |r>`` (indices 0..3). ``|0>`` and ``|1>``
form the register qubit. The pump couples ``|0> <-> |i>`` and the Stokes laser
couples ``|i> <-> |r>``. Units are ns and rad/ns.

Two conventions are available for the optical-scale qubit term ``-omega_0 |1><1|``:

``"literal"``
    the term is kept, as a commuting frame Hamiltonian that is integrated
    exactly (see :class:`procctl.dynamics.LindbladModel`).
``"absorbed"``
    the term is removed by a second rotating frame ``diag(1, e^{i omega_0 t}, 1, 1)``;
    targets are then read in that frame.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from .basis import build_gell_mann_basis
from .dynamics import LindbladModel
from .errors import InvalidScenarioError
from .fields import ShapeFunction, TimeGrid, guess_pulse
from .objectives import (
    Objective,
    decoherence_suppression_target,
    depolarizing_target,
    error_probability,
    gate_target,
    phase_gate,
)

__all__ = [
    "RydbergParams",
    "Scenario",
    "SCENARIOS",
    "rydberg_hamiltonian",
    "rydberg_drift",
    "rydberg_controls",
    "rydberg_jumps",
    "rydberg_model",
    "scenario",
]

SPEED_OF_LIGHT = 299792458.0
QUBIT_WAVELENGTH = 674e-9

G0, G1, GI, GR = 0, 1, 2, 3


def _ket_bra(a, b, dim=4):
    m = np.zeros((dim, dim), dtype=np.complex128)
    m[a, b] = 1.0
    return m


@dataclass(frozen=True)
class RydbergParams:
    """Physical constants of the ladder (rad/ns, ns)."""

    delta_p: float = 40e-3 * np.pi
    delta_s: float = -40e-3 * np.pi
    omega0: float = 2 * np.pi * SPEED_OF_LIGHT / QUBIT_WAVELENGTH * 1e-9
    frame: str = "literal"
    tau_i: float = 35.0
    tau_r: float = 2300.0
    e_peak: float = 94e-3 * np.pi
    g: float = 0.16
    weight: float = 0.01
    dt: float = 1.0

    def __post_init__(self):
        if not (self.tau_i > 0 and self.tau_r > 0):
            raise ValueError("lifetimes must be positive")
        if self.frame not in ("literal", "absorbed"):
            raise ValueError(f"frame must be 'literal' or 'absorbed', got {self.frame!r}")

    @property
    def qubit_frequency(self):
        """``omega_0`` as seen by the dynamics: zero in the absorbed frame."""
        return self.omega0 if self.frame == "literal" else 0.0

    def to_dict(self):
        return asdict(self)


def rydberg_hamiltonian(params, omega_p, omega_s):
    """Full ladder Hamiltonian at fixed Rabi frequencies."""
    w0 = params.qubit_frequency
    h = np.array(
        [
            [0, 0, omega_p, 0],
            [0, -2 * w0, 0, 0],
            [omega_p, 0, 2 * params.delta_p, -omega_s],
            [0, 0, -omega_s, 2 * (params.delta_p + params.delta_s)],
        ],
        dtype=np.complex128,
    )
    return 0.5 * h


def rydberg_drift(params):
    """Field-free part, without the ``omega_0`` term."""
    return np.diag([0.0, 0.0, params.delta_p, params.delta_p + params.delta_s]).astype(np.complex128)


def rydberg_frame(params):
    return np.diag([0.0, -params.qubit_frequency, 0.0, 0.0]).astype(np.complex128)


def rydberg_controls():
    """``dH/d Omega_p`` and ``dH/d Omega_s``."""
    hp = 0.5 * (_ket_bra(G0, GI) + _ket_bra(GI, G0))
    hs = -0.5 * (_ket_bra(GI, GR) + _ket_bra(GR, GI))
    return hp, hs


def rydberg_jumps(params):
    """Decay of ``|i>`` and ``|r>`` into ``|1>``, as (operator, rate) pairs."""
    return (
        (_ket_bra(G1, GI), 1.0 / params.tau_i),
        (_ket_bra(G1, GR), 1.0 / params.tau_r),
    )


def rydberg_model(params):
    frame = rydberg_frame(params) if params.frame == "literal" else None
    return LindbladModel(
        dim=4,
        drift=rydberg_drift(params),
        controls=rydberg_controls(),
        jumps=rydberg_jumps(params),
        frame=frame,
        control_names=("omega_p_rad_per_ns", "omega_s_rad_per_ns"),
    )


def free_hamiltonian(params):
    """Diagonal bare-system Hamiltonian used for the decoherence-suppression target."""
    return np.diag(
        [0.0, -params.qubit_frequency, params.delta_p, params.delta_p + params.delta_s]
    ).astype(np.complex128)


PUMP_SHAPE = dict(k=4, l=8)
STOKES_SHAPE = dict(k=2, l=4)

SCENARIOS = {
    "gate-simulation": dict(t_f=900.0, zeta_A=0.01, zeta_B=0.0),
    "decoherence-suppression": dict(t_f=500.0, zeta_A=0.0, zeta_B=0.0),
    "passive-environment": dict(t_f=900.0, zeta_A=0.0, zeta_B=0.0),
}
ALIASES = {"I": "gate-simulation", "II": "decoherence-suppression", "III": "passive-environment"}


@dataclass(frozen=True, eq=False)
class Scenario:
    """Everything needed to simulate or optimize one preset."""

    name: str
    params: RydbergParams
    model: LindbladModel
    grid: TimeGrid
    fields: tuple
    objective: Objective
    basis: object
    zeta_A: float
    zeta_B: float


def scenario(kind, params=None, n_steps=None, t_f=None, weight=None, phi=np.pi):
    """Build a preset.

    Parameters
    ----------
    kind : str
        ``"gate-simulation"``, ``"decoherence-suppression"`` or
        ``"passive-environment"`` (aliases ``"I"``, ``"II"``, ``"III"``).
    params : RydbergParams, optional
    n_steps : int, optional
        Defaults to ``t_f / params.dt``.
    t_f : float, optional
        Overrides the preset horizon.
    weight : float, optional
        Overrides ``params.weight`` for both fields.
    phi : float
        Phase-gate angle for the gate-simulation preset.
    """
    kind = ALIASES.get(kind, kind)
    if kind not in SCENARIOS:
        raise InvalidScenarioError(f"unknown scenario {kind!r}; choose one of {sorted(SCENARIOS)}")
    params = params or RydbergParams()
    preset = SCENARIOS[kind]
    t_f = preset["t_f"] if t_f is None else float(t_f)
    if n_steps is None:
        n_steps = int(round(t_f / params.dt))
    grid = TimeGrid(t_f, n_steps)
    basis = build_gell_mann_basis(4)
    w = params.weight if weight is None else weight
    pump = guess_pulse(ShapeFunction("blackman-paper", g=params.g, **PUMP_SHAPE), params.e_peak, grid, "omega_p_rad_per_ns", w)
    stokes = guess_pulse(
        ShapeFunction("blackman-paper", g=params.g, **STOKES_SHAPE), params.e_peak, grid, "omega_s_rad_per_ns", w
    )
    if kind == "gate-simulation":
        target = gate_target(phase_gate(phi), basis)
    elif kind == "decoherence-suppression":
        target = decoherence_suppression_target(t_f, free_hamiltonian(params), basis)
    else:
        target = depolarizing_target(error_probability(t_f, params.tau_i), basis)
    objective = Objective(target, 1.0, name=kind)
    return Scenario(
        kind, params, rydberg_model(params), grid, (pump, stokes), objective, basis, preset["zeta_A"], preset["zeta_B"]
    )


def with_frame(params, frame):
    return replace(params, frame=frame)
