"""Process-matrix optimal control of open quantum systems.

The process (chi) matrix of a Markovian channel is propagated in Lindblad
form over a generalized Gell-Mann basis and optimized with a second-order
Krotov method. A four-level Rydberg-ion preset is included.
"""

from .basis import (
    BasisChange,
    OperatorBasis,
    basis_change,
    build_gell_mann_basis,
    build_logical_basis,
    build_structure_tensor,
    lift_operator,
)
from .dynamics import (
    LindbladModel,
    ProcessMatrix,
    ProcessPropagator,
    Trajectory,
    apply_process,
    build_generator,
    initial_process,
    propagate,
    propagate_choi,
    to_choi,
    validate_against_state_equation,
)
from .errors import *  # noqa: F401,F403
from .fields import ControlField, ShapeFunction, TimeGrid, blackman_shape, field_cost, guess_pulse, pulse_spectrum
from .krotov import KrotovConfig, KrotovRun, compute_A_ansatz, optimize, sigma_schedule
from .objectives import (
    Objective,
    costate_boundary,
    decoherence_suppression_target,
    depolarizing_closed_form,
    depolarizing_target,
    error_probability,
    fidelity,
    gate_target,
    total_objective,
)
from .rydberg import RydbergParams, rydberg_hamiltonian, rydberg_jumps, rydberg_model, scenario

__version__ = "0.1.0"
