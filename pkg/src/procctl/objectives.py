r"""Terminal fidelity, its costate, the total objective and target processes.

The fidelity is the negative normalized Hilbert-Schmidt overlap

.. math::

    F(\chi) = -w_0\,\frac{\mathrm{Re}\,\langle\chi|\Xi\rangle}
                      {\sqrt{\langle\chi|\chi\rangle\langle\Xi|\Xi\rangle}},
    \qquad \langle A|B\rangle = \mathrm{Tr}[A^\dagger B].

For Hermitian ``chi`` and ``Xi`` the overlap is already real, so taking the
real part changes nothing on physical inputs. It makes ``F`` a real function
on all complex matrices, which is what the costate is the gradient of:
``F(chi + delta) - F(chi) = -2 Re<delta|Lambda> + O(delta^2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .basis import build_gell_mann_basis
from .errors import DegenerateInputError, DomainError, InvalidTargetError

__all__ = [
    "Objective",
    "inner",
    "fidelity",
    "costate_boundary",
    "gate_target",
    "phase_gate",
    "decoherence_suppression_target",
    "depolarizing_operators",
    "depolarizing_target",
    "depolarizing_closed_form",
    "error_probability",
    "total_objective",
    "kraus_process",
]


def inner(a, b):
    """``Tr[a^dag b]`` for square matrices (or flattened vectors)."""
    return complex(np.vdot(np.asarray(a).ravel(), np.asarray(b).ravel()))


def _mat(x):
    return np.asarray(getattr(x, "matrix", x))


@dataclass(frozen=True, eq=False)
class Objective:
    """Terminal target and weight.

    ``kind="normalized"`` is the normalized overlap above.
    ``kind="linear"`` is the convex surrogate ``-w0 Re<chi|Xi>``, whose
    second-order term vanishes.
    """

    target: np.ndarray
    w0: float = 1.0
    kind: str = "normalized"
    name: str = ""

    def __post_init__(self):
        if not self.w0 >= 0:
            raise ValueError(f"w0 must be nonnegative, got {self.w0}")
        if self.kind not in ("normalized", "linear"):
            raise ValueError(f"unknown objective kind {self.kind!r}")
        object.__setattr__(self, "target", np.asarray(_mat(self.target), dtype=np.complex128))

    def value(self, chi):
        if self.kind == "linear":
            return -self.w0 * inner(_mat(chi), self.target).real
        return fidelity(chi, self.target, self.w0)

    def costate(self, chi):
        if self.kind == "linear":
            return 0.5 * self.w0 * self.target.copy()
        return costate_boundary(chi, self.target, self.w0)


def fidelity(chi, target, w0=1.0):
    """``-w0 Re<chi|Xi> / sqrt(<chi|chi><Xi|Xi>)``, in ``[-w0, 0]`` for PSD inputs."""
    x, t = _mat(chi), _mat(target)
    b = inner(x, x).real
    c = inner(t, t).real
    if b <= 0 or c <= 0:
        raise DegenerateInputError("fidelity of a zero-norm matrix is undefined")
    return float(-w0 * inner(x, t).real / np.sqrt(b * c))


def costate_boundary(chi_f, target, w0=1.0):
    """Terminal costate ``Lambda = (w0/2) [Xi/sqrt(bc) - Re(a) chi/sqrt(b^3 c)]``.

    Here ``a = <chi|Xi>``, ``b = <chi|chi>`` and ``c = <Xi|Xi>``. It satisfies
    ``2 Re<chi_f|Lambda> = 0`` exactly.
    """
    x, t = _mat(chi_f), _mat(target)
    b = inner(x, x).real
    c = inner(t, t).real
    if b <= 0 or c <= 0:
        raise DegenerateInputError("costate of a zero-norm matrix is undefined")
    a = inner(x, t).real
    return 0.5 * w0 * (t / np.sqrt(b * c) - a * x / np.sqrt(b**3 * c))


def kraus_process(kraus_ops, basis):
    """``chi = sum_K a_K a_K^dag`` with ``a_K[l] = Tr[C_l^dag K]``."""
    chi = np.zeros((basis.size, basis.size), dtype=np.complex128)
    for k in kraus_ops:
        a = basis.coefficients(k)
        # traces of diagonal elements leave ~1e-17 residue where the exact value is 0
        a.real[np.abs(a.real) < 1e-15 * max(1.0, np.abs(a).max())] = 0.0
        a.imag[np.abs(a.imag) < 1e-15 * max(1.0, np.abs(a).max())] = 0.0
        chi += np.outer(a, a.conj())
    return chi


def gate_target(u, basis, tol=1e-10):
    """Rank-one process of the unitary ``u``."""
    u = np.asarray(u, dtype=np.complex128)
    if u.shape != (basis.dim, basis.dim):
        raise InvalidTargetError(f"gate must be {basis.dim}x{basis.dim}, got {u.shape}")
    if np.abs(u.conj().T @ u - np.eye(basis.dim)).max() > tol:
        raise InvalidTargetError("target gate is not unitary")
    return kraus_process([u], basis)


def phase_gate(phi, dim=4, level=1):
    """``diag(1, .., e^{i phi}, .., 1)`` with the phase on ``level``."""
    d = np.ones(dim, dtype=np.complex128)
    d[level] = np.exp(1j * phi)
    return np.diag(d)


def decoherence_suppression_target(t_f, h_s, basis):
    """Process of the free evolution ``exp(-i H_S t_f)`` for a diagonal ``H_S``."""
    h_s = np.asarray(h_s)
    if np.abs(h_s - np.diag(np.diag(h_s))).max() > 0:
        raise InvalidTargetError("free Hamiltonian must be diagonal")
    u = np.diag(np.exp(-1j * np.diag(h_s).real * t_f))
    return gate_target(u, basis)


def error_probability(t, tau_i=35.0):
    """``(1 - exp(-6 t / tau_i)) / 2``."""
    if np.any(np.asarray(t) < 0):
        raise DomainError("time must be nonnegative")
    p = 0.5 * (1.0 - np.exp(-6.0 * np.asarray(t, dtype=float) / tau_i))
    return float(p) if np.ndim(t) == 0 else p


def depolarizing_operators(dim=4, levels=(1, 2)):
    """Pauli-like operators on ``levels``, the identity on every other level."""
    a, b = levels
    rest = np.eye(dim, dtype=np.complex128)
    rest[a, a] = rest[b, b] = 0
    s1 = rest.copy()
    s1[a, b] = s1[b, a] = 1
    s2 = rest.copy()
    s2[a, b], s2[b, a] = -1j, 1j
    s3 = rest.copy()
    s3[a, a], s3[b, b] = 1, -1
    return s1, s2, s3


def depolarizing_target(p, basis, check_closed_form=True):
    """Kraus-built process of ``(1-p) rho + (p/3) sum_a s_a rho s_a``.

    For the 4-level Gell-Mann basis the result is also compared against the
    closed-form matrix; a mismatch above 1e-10 raises ``AssertionError``.
    """
    if not 0 <= p <= 1:
        raise DomainError(f"error probability must be in [0, 1], got {p}")
    ops = [np.sqrt(1 - p) * np.eye(basis.dim)]
    ops += [np.sqrt(p / 3) * s for s in depolarizing_operators(basis.dim)]
    chi = kraus_process(ops, basis)
    if check_closed_form and basis.dim == 4 and basis.kind == "generalized-gell-mann":
        ref = depolarizing_closed_form(p, basis.ordering)
        err = np.abs(chi - ref).max()
        assert err < 1e-10, f"Kraus and closed-form depolarizing targets differ by {err:.3e}"
    return chi


# (alpha, beta, multiplier) in 1-based product-ordering indices, grouped by prefactor
_CLOSED_FORM = (
    (lambda p: p / 6, ((7, 7, 2), (1, 1, 1), (6, 6, 3), (11, 11, 1), (10, 10, 2), (1, 7, 2), (1, 10, 2))),
    (lambda p: -np.sqrt(6) * p / 9, ((7, 11, 1), (1, 11, 1), (10, 11, 1), (6, 16, -3))),
    (lambda p: np.sqrt(2) * p / 3, ((7, 16, 1), (1, 16, 1), (6, 11, -1), (10, 16, 1))),
    (lambda p: np.sqrt(3) * p / 9, ((1, 6, 1), (6, 7, 1), (11, 16, -3), (6, 10, 1))),
)


def depolarizing_closed_form(p, ordering="product"):
    """Closed-form 16x16 depolarizing target, each listed term plus its transpose.

    The table is written in the product ordering; other orderings are reached
    through the basis change between the two Gell-Mann enumerations.
    """
    t = np.zeros((16, 16))
    t[15, 15] += (4 - 3 * p) / 2
    for coef, terms in _CLOSED_FORM:
        for a, b, m in terms:
            t[a - 1, b - 1] += coef(p) * m
    t = (t + t.T).astype(np.complex128)
    if ordering == "product":
        return t
    from .basis import basis_change

    change = basis_change(build_gell_mann_basis(4, "product"), build_gell_mann_basis(4, ordering))
    return change.apply(t)


def total_objective(chi_f, fields, objective):
    """``J = F(chi_f) + J_f``."""
    from .fields import field_cost

    return objective.value(chi_f) + field_cost(fields)
