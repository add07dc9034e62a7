r"""Second-order Krotov iteration over process matrices.

One iteration does three things:

1. Backward sweep. The terminal costate ``Lambda(t_f)`` is propagated
   backward with ``K^dag`` at the current fields.
2. Forward sweep. The fields are updated step by step, sequentially:

   .. math::

       \epsilon_m^{new} = \epsilon_m^{old} + \frac{f_m}{w_m}\Big\{
           \mathrm{Im}\langle\Lambda|\partial_m\mathbb K|\chi^{new}\rangle
           + \frac{\sigma}{2}\,\mathrm{Im}\langle\Delta\chi|\partial_m\mathbb K|\chi^{new}\rangle\Big\}

   Every quantity is taken at the interval midpoint. ``chi^new`` there is a
   half step from the left grid point under the trial field; ``Lambda`` is
   a half adjoint step back from the right grid point under the old field
   (``midpoint="average"`` uses the mean of the two grid values instead).
   The implicit dependence on ``chi^new`` is resolved by a safeguarded
   secant iteration.
3. Acceptance. The iteration is kept when ``J^{new} <= F^{old}``, with the
   reference fields equal to the previous fields.

The schedule is ``sigma(t) = -Abar exp(zeta_B (t_f - t))`` with
``Abar = max(zeta_A, 2A + zeta_A)``. ``A`` comes from the ansatz

.. math::

    A = \frac{\Delta F + 2\,\mathrm{Re}\langle\Delta\chi_f|\Lambda_f\rangle}{\langle\Delta\chi_f|\Delta\chi_f\rangle}

evaluated on the previous iteration.
"""

from __future__ import annotations

import csv
import json
import logging
import queue
import threading
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .dynamics import ProcessPropagator, Trajectory, field_array, initial_process
from .errors import ConfigError, DegenerateInputError, NonmonotonicAbort, StepFailure
from .objectives import inner

__all__ = [
    "KrotovConfig",
    "IterationRecord",
    "KrotovRun",
    "backward_sweep",
    "sigma_schedule",
    "compute_A_ansatz",
    "update_sweep",
    "optimize",
    "load_checkpoint",
    "write_convergence_csv",
]

log = logging.getLogger(__name__)

CHECKPOINT_SCHEMA = "procctl-checkpoint/1"


@dataclass(frozen=True)
class KrotovConfig:
    """Iteration controls.

    ``A_override`` is the fixed ``Abar`` used once ansatz-based retries are
    exhausted. Without it, ``Abar`` is escalated ``escalation_limit`` times by
    ``escalation_factor`` before giving up.
    """

    max_iters: int = 6000
    j_tolerance: float = 1e-10
    zeta_A: float = 0.0
    zeta_B: float = 0.0
    A_override: Optional[float] = None
    retry_limit: int = 3
    escalation_limit: int = 4
    escalation_factor: float = 10.0
    checkpoint_every: int = 100
    fixed_point_tol: float = 1e-10
    fixed_point_max: int = 50
    costate_midpoint: str = "half-step"

    def __post_init__(self):
        if self.zeta_A < 0 or self.zeta_B < 0:
            raise ConfigError("zeta_A and zeta_B must be nonnegative")
        if self.retry_limit < 0 or self.max_iters < 0:
            raise ConfigError("retry_limit and max_iters must be nonnegative")
        if self.A_override is not None and self.A_override < 0:
            raise ConfigError("A_override must be nonnegative")
        if self.costate_midpoint not in ("half-step", "average"):
            raise ConfigError(f"costate_midpoint must be 'half-step' or 'average', got {self.costate_midpoint!r}")


@dataclass
class IterationRecord:
    n: int
    J: float
    F: float
    J_f: float
    A_n: float
    retries: int
    Abar: float = 0.0
    accepted: bool = True
    fixed_point_passes: int = 0

    def row(self):
        return [self.n, self.J, self.F, self.J_f, self.A_n, self.retries]


@dataclass(eq=False)
class KrotovRun:
    """State of an optimization after the last accepted iteration."""

    iteration: int
    fields: np.ndarray
    forward: Trajectory
    backward: Optional[Trajectory]
    A_n: float
    records: list = field(default_factory=list)
    rejected: list = field(default_factory=list)
    converged: bool = False

    @property
    def F(self):
        return self.records[-1].F

    @property
    def J(self):
        return self.records[-1].J

    def J_sequence(self):
        return np.array([r.J for r in self.records])


def sigma_schedule(t, t_f, Abar, zeta_B=0.0):
    """``-Abar exp(zeta_B (t_f - t))``."""
    return -Abar * np.exp(zeta_B * (t_f - np.asarray(t, dtype=float)))


def compute_A_ansatz(dF, dchi_f, lambda_f, zeta_A=0.0):
    """Return ``(A, Abar)`` from the change of one iteration.

    ``dchi_f`` is the change of the terminal process and ``lambda_f`` the
    terminal costate of the earlier fields. Zero change gives ``(0, zeta_A)``.
    """
    dchi_f = np.asarray(dchi_f)
    nrm = inner(dchi_f, dchi_f).real
    if nrm == 0.0:
        return 0.0, zeta_A
    a = (dF + 2.0 * inner(dchi_f, lambda_f).real) / nrm
    return a, max(zeta_A, 2.0 * a + zeta_A)


def backward_sweep(propagator, fields, grid, chi_f, objective):
    """Costate trajectory from ``objective.costate(chi_f)``, backward under ``K^dag``."""
    lam_f = objective.costate(chi_f)
    return propagator.propagate(fields, grid, lam_f, "backward-adjoint")


def _half_step(prop, vec, eps, dt):
    return prop.step(vec, eps, 0.5 * dt)


def _residual(prop, chi_k, eps, eps_old, lam_mid, mid_old, sigma_k, scale_k, dt):
    """``eps_old + (f/w) g(eps) - eps`` for one interval."""
    mid = _half_step(prop, chi_k, eps, dt)
    grad = np.empty(len(eps))
    for m in range(len(eps)):
        dk = prop.control_action(m, mid)
        g = np.vdot(lam_mid, dk).imag
        if sigma_k is not None:
            g += 0.5 * sigma_k * np.vdot(mid - mid_old, dk).imag
        grad[m] = g
    return eps_old + scale_k * grad - eps


def _solve_step(resid, eps, tol, max_passes, k):
    """Solve ``resid(eps) = 0``; returns ``(eps, residual evaluations)``.

    Broyden updates of the inverse Jacobian start from ``-I``, which makes the
    first step the plain fixed-point step. A step that fails to shrink the
    residual triggers a finite-difference Jacobian and a Newton step from the
    last accepted point.
    """
    r = resid(eps)
    evals = 1
    m = len(eps)
    h_inv = -np.eye(m)
    fresh = False
    while True:
        if not np.all(np.isfinite(r)):
            raise StepFailure(f"non-finite field update at step {k}")
        change = np.abs(r).max()
        if change < tol:
            return eps + r, evals
        if evals >= max_passes:
            raise StepFailure(
                f"field update at step {k} did not converge in {max_passes} passes "
                f"(last change {change:.3e}); the grid is likely too coarse for these weights"
            )
        d = -h_inv @ r
        trial = eps + d
        r_t = resid(trial)
        evals += 1
        if np.all(np.isfinite(r_t)) and (np.linalg.norm(r_t) < np.linalg.norm(r) or fresh):
            dr = r_t - r
            hdr = h_inv @ dr
            denom = d @ hdr
            if denom != 0:
                h_inv = h_inv + np.outer(d - hdr, d @ h_inv) / denom
            eps, r = trial, r_t
            fresh = False
            continue
        jac = np.empty((m, m))
        for j in range(m):
            h = 1e-7 * max(1.0, abs(eps[j]))
            e2 = eps.copy()
            e2[j] += h
            jac[:, j] = (resid(e2) - r) / h
        evals += m
        h_inv = np.linalg.pinv(jac)
        fresh = True


def update_sweep(
    propagator, grid, fields, forward, backward, sigma, shapes, weights, tol=1e-10, max_passes=50, midpoint="half-step"
):
    """Sequential field update; returns ``(new_fields, new_forward, max_passes_used)``.

    Parameters
    ----------
    propagator : ProcessPropagator
    grid : TimeGrid
    fields : ndarray, shape (M, n)
        Current fields, which are also the reference.
    forward, backward : Trajectory
        Process and costate trajectories at ``fields``.
    sigma : ndarray of shape (n,), or None
        Second-order schedule on the midpoints. ``None`` selects the
        first-order update and skips the old-state half steps.
    shapes, weights : ndarray
        ``f_m`` on the midpoints, shape (M, n), and ``w_m``, shape (M,).
    midpoint : {"half-step", "average"}
        How the costate is carried to the interval midpoint.
    """
    fields = np.asarray(fields, dtype=float)
    m_ctrl, n = fields.shape
    dt = grid.dt
    n2 = propagator.n2
    old = forward.states.reshape(n + 1, n2 * n2)
    lam = backward.states.reshape(n + 1, n2 * n2)
    scale = np.zeros_like(shapes)
    free = shapes > 0
    scale[free] = (shapes / weights[:, None])[free]
    new_fields = fields.copy()
    states = np.empty_like(old)
    states[0] = old[0]
    worst = 0

    def sigma_k(k):
        return None if sigma is None else sigma[k]

    for k in range(n):
        eps_old = fields[:, k]
        if midpoint == "average":
            lam_mid = 0.5 * (lam[k] + lam[k + 1])
        else:
            lam_mid = propagator.step_adjoint(lam[k + 1], eps_old, 0.5 * dt)
        mid_old = None if sigma is None else _half_step(propagator, old[k], eps_old, dt)
        if not np.any(scale[:, k]):
            eps = eps_old.copy()
        else:
            eps, passes = _solve_step(
                lambda e: _residual(propagator, states[k], e, eps_old, lam_mid, mid_old, sigma_k(k), scale[:, k], dt),
                eps_old.copy(),
                tol,
                max_passes,
                k,
            )
            worst = max(worst, passes)
        new_fields[:, k] = eps
        states[k + 1] = propagator.step(states[k], eps, dt)
    traj = Trajectory(grid, states.reshape(n + 1, n2, n2), "forward", forward.basis)
    return new_fields, traj, worst


def _field_cost(new, ref, shapes, weights, dt):
    dev = new - ref
    free = shapes > 0
    if np.any(dev[~free] != 0):
        from .errors import PinnedPointViolation

        raise PinnedPointViolation("field deviates from reference where its shape is zero")
    out = 0.0
    for m in range(new.shape[0]):
        f = free[m]
        out += weights[m] * dt * float(np.sum(dev[m, f] ** 2 / shapes[m, f]))
    return out


class _CheckpointWriter:
    """Writes checkpoints from a background thread through a bounded queue."""

    def __init__(self, maxsize=2):
        self._q = queue.Queue(maxsize=maxsize)
        self._t = threading.Thread(target=self._run, daemon=True)
        self._err = None
        self._t.start()

    def _run(self):
        while True:
            item = self._q.get()
            if item is None:
                return
            path, payload = item
            try:
                tmp = f"{path}.tmp"
                with open(tmp, "w") as fh:
                    json.dump(payload, fh)
                import os

                os.replace(tmp, path)
            except Exception as exc:  # reported on close
                self._err = exc

    def submit(self, path, payload):
        self._q.put((path, payload))

    def close(self):
        self._q.put(None)
        self._t.join()
        if self._err is not None:
            raise self._err


def _checkpoint_payload(run, config, meta):
    return {
        "schema": CHECKPOINT_SCHEMA,
        "iteration": run.iteration,
        "fields": run.fields.tolist(),
        "A_n": run.A_n,
        "records": [asdict(r) for r in run.records],
        "rejected": [asdict(r) for r in run.rejected],
        "config": asdict(config),
        "meta": meta or {},
    }


def load_checkpoint(path):
    """Read a checkpoint; raises ``ConfigError`` when it is unreadable."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(data, dict) or data.get("schema") != CHECKPOINT_SCHEMA:
        raise ConfigError(f"{path} is not a {CHECKPOINT_SCHEMA} checkpoint")
    try:
        data["fields"] = np.array(data["fields"], dtype=float)
        data["records"] = [IterationRecord(**r) for r in data["records"]]
        data["rejected"] = [IterationRecord(**r) for r in data["rejected"]]
        data["A_n"] = float(data["A_n"])
        data["iteration"] = int(data["iteration"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed checkpoint {path}: {exc}") from exc
    return data


def optimize(
    model,
    grid,
    guess,
    objective,
    config=None,
    basis=None,
    propagator=None,
    checkpoint_path=None,
    resume=None,
    meta=None,
    callback=None,
):
    """Run the Krotov loop.

    Parameters
    ----------
    model : LindbladModel
    grid : TimeGrid
    guess : sequence of ControlField
        Initial fields, with their shapes and weights.
    objective : Objective
    config : KrotovConfig
    basis : OperatorBasis, optional
        Defaults to the target's basis or the Gell-Mann basis.
    checkpoint_path : str, optional
        Written every ``config.checkpoint_every`` accepted iterations and on exit.
    resume : dict or str, optional
        Checkpoint (path or :func:`load_checkpoint` output) to continue from.
    callback : callable, optional
        Called with each accepted :class:`IterationRecord`.

    Returns
    -------
    KrotovRun
    """
    config = config or KrotovConfig()
    if propagator is None:
        if basis is None:
            from .basis import build_gell_mann_basis

            basis = build_gell_mann_basis(model.dim)
        propagator = ProcessPropagator(model, basis)
    basis = propagator.basis
    shapes = np.array([f.shape.on_grid(grid) for f in guess], dtype=float)
    weights = np.array([f.weight for f in guess], dtype=float)
    chi0 = initial_process(basis).matrix

    if resume is not None:
        ck = load_checkpoint(resume) if isinstance(resume, str) else resume
        fields = np.array(ck["fields"], dtype=float)
        if fields.shape != shapes.shape:
            raise ConfigError("checkpoint fields do not match the grid and field count")
        forward = propagator.propagate(fields, grid, chi0)
        run = KrotovRun(ck["iteration"], fields, forward, None, ck["A_n"], list(ck["records"]), list(ck["rejected"]))
    else:
        fields = field_array(list(guess)).astype(float)
        forward = propagator.propagate(fields, grid, chi0)
        f0 = objective.value(forward.final)
        run = KrotovRun(0, fields, forward, None, 0.0, [IterationRecord(0, f0, f0, 0.0, 0.0, 0)])

    writer = _CheckpointWriter() if checkpoint_path else None
    written = None
    mid_t = grid.midpoints
    try:
        while run.iteration < config.max_iters and not run.converged:
            _iterate(run, propagator, grid, objective, config, shapes, weights, mid_t)
            if callback is not None:
                callback(run.records[-1])
            if writer and config.checkpoint_every and run.iteration % config.checkpoint_every == 0:
                writer.submit(checkpoint_path, _checkpoint_payload(run, config, meta))
                written = run.iteration
    finally:
        if writer:
            if written != run.iteration:
                writer.submit(checkpoint_path, _checkpoint_payload(run, config, meta))
            writer.close()
    return run


def _iterate(run, prop, grid, objective, config, shapes, weights, mid_t):
    fields = run.fields
    chi_f = run.forward.final
    f_old = run.records[-1].F
    backward = backward_sweep(prop, fields, grid, chi_f, objective)
    lam_f = backward.states[-1]
    a_use = run.A_n
    retries = 0
    escalations = 0
    abar = max(config.zeta_A, 2.0 * a_use + config.zeta_A)
    while True:
        sigma = sigma_schedule(mid_t, grid.t_f, abar, config.zeta_B)
        new_fields, fwd, passes = update_sweep(
            prop,
            grid,
            fields,
            run.forward,
            backward,
            sigma,
            shapes,
            weights,
            config.fixed_point_tol,
            config.fixed_point_max,
            config.costate_midpoint,
        )
        f_new = objective.value(fwd.final)
        j_f = _field_cost(new_fields, fields, shapes, weights, grid.dt)
        j_new = f_new + j_f
        a_new, _ = compute_A_ansatz(f_new - f_old, fwd.final - chi_f, lam_f, config.zeta_A)
        rec = IterationRecord(run.iteration + 1, j_new, f_new, j_f, a_new, retries, abar, True, passes)
        if j_new - f_old <= config.j_tolerance:
            break
        rec.accepted = False
        run.rejected.append(rec)
        log.info("iteration %d rejected (dJ = %.3e, Abar = %.3e)", rec.n, j_new - f_old, abar)
        if retries < config.retry_limit:
            abar = max(config.zeta_A, 2.0 * a_new + config.zeta_A, abar)
        elif config.A_override is not None and abar < config.A_override:
            abar = config.A_override
        elif escalations < config.escalation_limit:
            escalations += 1
            abar = max(abar, config.zeta_A, 1.0) * config.escalation_factor
        else:
            raise NonmonotonicAbort(
                f"iteration {rec.n}: J rose by {j_new - f_old:.3e} after {retries} retries "
                f"and {escalations} escalations (last Abar {abar:.3e})",
                run.records + run.rejected,
            )
        retries += 1
    j_prev = run.records[-1].J
    run.iteration += 1
    run.fields = new_fields
    run.forward = fwd
    run.backward = backward
    run.A_n = a_new
    run.records.append(rec)
    if abs(j_new - j_prev) < config.j_tolerance:
        run.converged = True
    log.debug("n=%d J=%.10f F=%.10f Abar=%.3e passes=%d", rec.n, j_new, f_new, abar, passes)


def write_convergence_csv(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "J", "F", "J_f", "A_n", "retries"])
        for r in records:
            w.writerow([r.n, repr(float(r.J)), repr(float(r.F)), repr(float(r.J_f)), repr(float(r.A_n)), r.retries])
