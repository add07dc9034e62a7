r"""Process-matrix dynamics in Lindblad form.

The process matrix obeys

.. math::

    \dot\chi = -i[\mathsf H, \chi]
        + \sum_a \gamma_a \big(\mathsf L_a \chi \mathsf L_a^\dagger
        - \tfrac12 \{\mathsf L_a^\dagger \mathsf L_a, \chi\}\big)
        \equiv -i\,\mathbb K \chi,

with lifted operators :math:`\mathsf Y_{mn} = \mathrm{Tr}[C_m^\dagger Y C_n]`
and :math:`\hbar = 1`.

Vectorization is row-major (numpy ``ravel``): ``vec(A X B) = kron(A, B.T) vec(X)``,
so left multiplication is ``A (x) I`` and right multiplication ``I (x) B^T``.
This one convention is used for both the process generator and the
density-matrix oracle.

Time stepping uses a generator that is constant on each interval, with the
fields sampled at the interval midpoint, and applies the exact exponential of
that generator through ``scipy.sparse.linalg.expm_multiply``. A ``frame``
Hamiltonian (for example the optical-scale ``-omega_0 |1><1|`` term of a
rotating frame) must commute with the rest of the generator. Its factor is
applied in closed form, so it never enters the exponential of the rest.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import expm_multiply

from .basis import BasisChange, OperatorBasis, basis_change, build_logical_basis, lift_operator
from .errors import DimensionError, InvalidGridError, NumericError

__all__ = [
    "ProcessMatrix",
    "LindbladModel",
    "GeneratorSnapshot",
    "Trajectory",
    "ProcessPropagator",
    "OracleReport",
    "initial_process",
    "build_generator",
    "propagate",
    "apply_process",
    "validate_against_state_equation",
    "to_choi",
    "propagate_choi",
    "trace_distance",
    "random_density_matrix",
]

HERMITIAN_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ProcessMatrix:
    """Process matrix ``chi`` expressed in ``basis``."""

    basis: OperatorBasis
    matrix: np.ndarray

    def __post_init__(self):
        n2 = self.basis.size
        if self.matrix.shape != (n2, n2):
            raise DimensionError(f"process matrix must be {n2}x{n2}, got {self.matrix.shape}")

    @property
    def trace(self):
        return complex(np.trace(self.matrix))

    def hermiticity_error(self):
        return float(np.abs(self.matrix - self.matrix.conj().T).max())

    def min_eigenvalue(self):
        h = 0.5 * (self.matrix + self.matrix.conj().T)
        return float(np.linalg.eigvalsh(h)[0])

    def violations(self, herm_tol=1e-10, psd_tol=1e-8, trace_tol=1e-8):
        """List of broken invariants (empty when the matrix is a valid process)."""
        out = []
        if self.hermiticity_error() > herm_tol:
            out.append(f"not Hermitian (max deviation {self.hermiticity_error():.3e})")
        if self.min_eigenvalue() < -psd_tol:
            out.append(f"not PSD (min eigenvalue {self.min_eigenvalue():.3e})")
        if abs(self.trace - self.basis.dim) > trace_tol:
            out.append(f"trace {self.trace:.12g} != {self.basis.dim}")
        return out

    def is_valid(self, **tols):
        return not self.violations(**tols)


def _hermitian(m, name):
    m = np.asarray(m, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {m.shape}")
    if np.abs(m - m.conj().T).max() > HERMITIAN_TOL:
        raise ValueError(f"{name} is not Hermitian")
    return m


@dataclass(frozen=True, eq=False)
class LindbladModel:
    """Markovian open-system model with linear field coupling.

    ``H(t) = drift + frame + sum_m eps_m(t) controls[m]`` and dissipator
    ``sum_a rate_a D[L_a]``. Energies are angular frequencies (rad/ns).

    ``frame`` is optional. When given, it must commute with ``drift`` and every
    control, and every jump operator must be an eigen-operator of ``[frame, .]``.
    Under those conditions its propagator factors out exactly.
    """

    dim: int
    drift: np.ndarray
    controls: tuple = ()
    jumps: tuple = ()
    frame: Optional[np.ndarray] = None
    control_names: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "drift", _hermitian(self.drift, "drift"))
        if self.drift.shape != (self.dim, self.dim):
            raise DimensionError(f"drift must be {self.dim}x{self.dim}")
        ctrls = tuple(_hermitian(h, f"control {m}") for m, h in enumerate(self.controls))
        for h in ctrls:
            if h.shape != (self.dim, self.dim):
                raise DimensionError("control operator shape does not match model dimension")
        object.__setattr__(self, "controls", ctrls)
        jumps = []
        for op, rate in self.jumps:
            op = np.asarray(op, dtype=np.complex128)
            if op.shape != (self.dim, self.dim):
                raise DimensionError("jump operator shape does not match model dimension")
            if not rate >= 0:
                raise ValueError(f"jump rate must be nonnegative, got {rate}")
            jumps.append((op, float(rate)))
        object.__setattr__(self, "jumps", tuple(jumps))
        if not self.control_names:
            object.__setattr__(self, "control_names", tuple(f"eps{m}" for m in range(len(ctrls))))
        if self.frame is not None:
            fr = _hermitian(self.frame, "frame")
            scale = max(1.0, float(np.abs(fr).max()))
            for h in (self.drift,) + ctrls:
                if np.abs(fr @ h - h @ fr).max() > 1e-12 * scale:
                    raise ValueError("frame Hamiltonian must commute with drift and controls")
            for op, _ in self.jumps:
                c = fr @ op - op @ fr
                # c must be proportional to op
                k = np.vdot(op, c) / max(np.vdot(op, op).real, 1e-300)
                if np.abs(c - k * op).max() > 1e-12 * scale:
                    raise ValueError("jump operators must be eigen-operators of the frame commutator")
            object.__setattr__(self, "frame", fr)

    @property
    def n_controls(self):
        return len(self.controls)

    def hamiltonian(self, fields=()):
        h = self.drift.copy()
        if self.frame is not None:
            h = h + self.frame
        for eps, hm in zip(np.atleast_1d(fields), self.controls):
            h = h + eps * hm
        return h


@dataclass(frozen=True, eq=False)
class GeneratorSnapshot:
    """Vectorized generator ``K`` at fixed field values: ``d vec(chi)/dt = -i K vec(chi)``."""

    matrix: np.ndarray

    @property
    def flow(self):
        return -1j * self.matrix


def _commutator_super(a):
    eye = np.eye(a.shape[0])
    return np.kron(a, eye) - np.kron(eye, a.T)


def _dissipator_super(l):
    eye = np.eye(l.shape[0])
    ldl = l.conj().T @ l
    return np.kron(l, l.conj()) - 0.5 * np.kron(ldl, eye) - 0.5 * np.kron(eye, ldl.T)


def _check_fields(fields, n_controls, n_steps):
    fields = np.asarray(fields, dtype=float)
    if fields.ndim == 1 and n_controls == 1:
        fields = fields[None, :]
    if fields.size == 0 and n_controls == 0:
        fields = np.zeros((0, n_steps))
    if fields.shape != (n_controls, n_steps):
        raise DimensionError(f"fields must have shape ({n_controls}, {n_steps}), got {fields.shape}")
    if not np.all(np.isfinite(fields)):
        raise NumericError("non-finite field values")
    return fields


def field_array(fields):
    """Accept an ``(M, n)`` array or a sequence of objects with ``.samples``."""
    if hasattr(fields, "samples"):
        return np.atleast_2d(fields.samples)
    if isinstance(fields, (list, tuple)) and fields and hasattr(fields[0], "samples"):
        return np.array([f.samples for f in fields], dtype=float)
    return np.asarray(fields, dtype=float)


class ProcessPropagator:
    """Lifted generator pieces of ``model`` in ``basis``, plus single-step maps.

    ``K(eps) = K_drift + sum_m eps_m K_m`` (+ the frame part, applied in closed form).
    When ``transform`` is given, every lifted operator ``Z`` is replaced by
    ``S^dag Z S``, which yields the generator of the Choi density matrix.
    """

    def __init__(self, model, basis, transform=None):
        if model.dim != basis.dim:
            raise DimensionError(f"model dimension {model.dim} != basis dimension {basis.dim}")
        self.model = model
        self.basis = basis
        s = None if transform is None else transform.matrix

        def lift(op):
            y = lift_operator(op, basis)
            return y if s is None else s.conj().T @ y @ s

        self.lifted_drift = lift(model.drift)
        self.lifted_controls = tuple(lift(h) for h in model.controls)
        self.lifted_jumps = tuple((lift(op), rate) for op, rate in model.jumps)
        self.lifted_frame = None if model.frame is None else lift(model.frame)

        k0 = _commutator_super(self.lifted_drift).astype(np.complex128)
        for lj, rate in self.lifted_jumps:
            if rate:
                k0 = k0 + 1j * rate * _dissipator_super(lj)
        self.k_drift = k0
        self.k_drift_adj = np.ascontiguousarray(k0.conj().T)
        self.k_controls = tuple(_commutator_super(hm) for hm in self.lifted_controls)
        self._frame_cache = {}
        self.n2 = basis.size

    # -- generator -------------------------------------------------------
    def generator(self, eps=(), include_frame=True):
        k = self.k_drift.copy()
        for e, km in zip(np.atleast_1d(eps), self.k_controls):
            k += e * km
        if include_frame and self.lifted_frame is not None:
            k += _commutator_super(self.lifted_frame)
        return k

    def snapshot(self, eps=()):
        return GeneratorSnapshot(self.generator(eps))

    def _frame_unitary(self, dt):
        w = self._frame_cache.get(dt)
        if w is None:
            evals, vecs = np.linalg.eigh(self.lifted_frame)
            w = (vecs * np.exp(-1j * evals * dt)) @ vecs.conj().T
            self._frame_cache[dt] = w
        return w

    # -- single steps ----------------------------------------------------
    def step(self, vec, eps, dt):
        """Advance ``vec(chi)`` by ``dt`` under fields ``eps`` held constant."""
        out = expm_multiply(-1j * dt * self.generator(eps, include_frame=False), vec)
        if self.lifted_frame is not None:
            w = self._frame_unitary(dt)
            m = out.reshape(self.n2, self.n2)
            out = (w @ m @ w.conj().T).ravel()
        return out

    def step_adjoint(self, vec, eps, dt):
        """Map ``Lambda(t + dt)`` to ``Lambda(t)`` for ``dLambda/dt = -i K^dag Lambda``.

        The control parts of ``K`` are Hermitian, so only the drift part is conjugated.
        """
        k = self.k_drift_adj.copy()
        for e, km in zip(np.atleast_1d(eps), self.k_controls):
            k += e * km
        out = expm_multiply(1j * dt * k, vec)
        if self.lifted_frame is not None:
            w = self._frame_unitary(dt)
            m = out.reshape(self.n2, self.n2)
            out = (w.conj().T @ m @ w).ravel()
        return out

    def control_action(self, m, vec):
        """``(dK/d eps_m) vec`` computed as the lifted commutator."""
        h = self.lifted_controls[m]
        x = vec.reshape(self.n2, self.n2)
        return (h @ x - x @ h).ravel()

    # -- trajectories ----------------------------------------------------
    def propagate(self, fields, grid, initial, direction="forward"):
        n = grid.n_steps
        if n < 1:
            raise InvalidGridError("time grid has no steps")
        fields = _check_fields(field_array(fields), self.model.n_controls, n)
        init = np.asarray(getattr(initial, "matrix", initial), dtype=np.complex128)
        if init.shape != (self.n2, self.n2):
            raise DimensionError(f"initial matrix must be {self.n2}x{self.n2}, got {init.shape}")
        dt = grid.dt
        states = np.empty((n + 1, self.n2 * self.n2), dtype=np.complex128)
        if direction == "forward":
            states[0] = init.ravel()
            for k in range(n):
                states[k + 1] = self.step(states[k], fields[:, k], dt)
        elif direction == "backward-adjoint":
            states[n] = init.ravel()
            for k in range(n - 1, -1, -1):
                states[k] = self.step_adjoint(states[k + 1], fields[:, k], dt)
        else:
            raise ValueError(f"unknown direction {direction!r}")
        return Trajectory(grid, states.reshape(n + 1, self.n2, self.n2), direction, self.basis)


@dataclass(eq=False)
class Trajectory:
    """Matrices at every grid point ``t_0 .. t_n`` (process or costate)."""

    grid: object
    states: np.ndarray
    direction: str
    basis: OperatorBasis

    def __len__(self):
        return self.states.shape[0]

    @property
    def final(self):
        return self.states[-1]

    def process(self, k):
        return ProcessMatrix(self.basis, self.states[k])

    def diagnostics(self, target=None):
        """Per-grid-point trace, minimum eigenvalue and (optionally) fidelity."""
        from .objectives import fidelity

        rows = []
        for k, chi in enumerate(self.states):
            h = 0.5 * (chi + chi.conj().T)
            row = {
                "t_ns": float(self.grid.points[k]),
                "trace": float(np.trace(chi).real),
                "min_eig": float(np.linalg.eigvalsh(h)[0]),
                "herm_err": float(np.abs(chi - chi.conj().T).max()),
            }
            if target is not None:
                row["fidelity"] = float(-fidelity(chi, target, 1.0)) if np.abs(chi).max() > 0 else 0.0
            rows.append(row)
        return rows

    def write_csv(self, path, target=None):
        rows = self.diagnostics(target)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(list(rows[0].keys()))
            for row in rows:
                writer.writerow([repr(float(v)) for v in row.values()])


def initial_process(basis):
    """Identity process: ``N`` at ``(N^2, N^2)`` for the Gell-Mann basis."""
    from .objectives import kraus_process

    return ProcessMatrix(basis, kraus_process([np.eye(basis.dim)], basis))


def build_generator(model, fields, basis):
    return ProcessPropagator(model, basis).snapshot(fields)


def propagate(model, fields, grid, direction="forward", initial=None, basis=None, propagator=None):
    """Propagate a process matrix forward, or a costate backward, through ``grid``."""
    if propagator is None:
        if basis is None:
            basis = getattr(initial, "basis", None)
        if basis is None:
            raise ValueError("a basis is required")
        propagator = ProcessPropagator(model, basis)
    if initial is None:
        if direction != "forward":
            raise ValueError("backward propagation needs an initial costate")
        initial = initial_process(propagator.basis)
    return propagator.propagate(fields, grid, initial, direction)


def apply_process(chi, rho, basis=None):
    """``sum_{lm} chi_lm C_l rho C_m^dag``."""
    if basis is None:
        basis = chi.basis
    mat = np.asarray(getattr(chi, "matrix", chi))
    rho = np.asarray(rho)
    if rho.shape != (basis.dim, basis.dim) or mat.shape != (basis.size, basis.size):
        raise DimensionError("process/state dimensions do not match the basis")
    c = basis.elements
    return np.einsum("lm,lij,jk,mqk->iq", mat, c, rho, c.conj(), optimize=True)


def to_choi(chi, change=None):
    """Choi density matrix ``S^dag chi S / N`` in the logical basis."""
    if change is None:
        change = basis_change(chi.basis, build_logical_basis(chi.basis.dim))
    mat = np.asarray(getattr(chi, "matrix", chi))
    return change.apply(mat) / change.source.dim


def propagate_choi(model, fields, grid, basis):
    """Propagate the Choi density matrix under the transformed generator.

    Lifted operators are conjugated into the logical basis,
    ``Z~ = S^dag Z S``, and the same Lindblad-form generator is assembled
    from them.
    """
    change = basis_change(basis, build_logical_basis(basis.dim))
    prop = ProcessPropagator(model, basis, transform=change)
    rho0 = to_choi(initial_process(basis), change)
    return prop.propagate(fields, grid, rho0, "forward")


# -- density-matrix oracle ------------------------------------------------


def density_liouvillian(model, eps=()):
    """Row-major Liouvillian of the state equation at fixed fields."""
    h = model.hamiltonian(eps)
    out = -1j * _commutator_super(h)
    for op, rate in model.jumps:
        if rate:
            out = out + rate * _dissipator_super(op)
    return out


def random_density_matrix(dim, rng):
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def trace_distance(a, b):
    d = a - b
    return 0.5 * float(np.abs(np.linalg.eigvalsh(0.5 * (d + d.conj().T))).sum())


@dataclass
class OracleReport:
    max_trace_distance: float
    per_sample: list
    tolerance: float
    n_samples: int
    n_points: int
    purity_drift: float = 0.0
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = bool(self.max_trace_distance < self.tolerance)

    def to_dict(self):
        return {
            "max_trace_distance": self.max_trace_distance,
            "per_sample": list(self.per_sample),
            "tolerance": self.tolerance,
            "n_samples": self.n_samples,
            "n_points": self.n_points,
            "purity_drift": self.purity_drift,
            "passed": self.passed,
        }


def validate_against_state_equation(
    model, fields, grid, samples=10, basis=None, seed=0, tolerance=1e-6, trajectory=None
):
    """Compare ``apply_process(chi(t_k), rho)`` with direct state integration.

    The state route exponentiates the ``N^2 x N^2`` Liouvillian of each interval
    with ``scipy.linalg.expm``. It shares the fields and grid with the process
    route but none of the lifting machinery.
    """
    if basis is None:
        from .basis import build_gell_mann_basis

        basis = build_gell_mann_basis(model.dim)
    fields = _check_fields(field_array(fields), model.n_controls, grid.n_steps)
    if trajectory is None:
        trajectory = propagate(model, fields, grid, basis=basis)
    steps = [scipy.linalg.expm(density_liouvillian(model, fields[:, k]) * grid.dt) for k in range(grid.n_steps)]
    rng = np.random.default_rng(seed)
    per_sample = []
    purity_drift = 0.0
    for _ in range(samples):
        rho0 = random_density_matrix(model.dim, rng)
        v = rho0.ravel()
        worst = trace_distance(apply_process(trajectory.states[0], rho0, basis), rho0)
        p0 = float(np.vdot(v, v).real)
        for k in range(grid.n_steps):
            v = steps[k] @ v
            rho = v.reshape(model.dim, model.dim)
            worst = max(worst, trace_distance(apply_process(trajectory.states[k + 1], rho0, basis), rho))
            purity_drift = max(purity_drift, abs(float(np.vdot(v, v).real) - p0))
        per_sample.append(worst)
    return OracleReport(
        max(per_sample) if per_sample else 0.0,
        per_sample,
        tolerance,
        samples,
        grid.n_steps + 1,
        purity_drift,
    )
