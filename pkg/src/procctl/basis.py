"""Orthonormal operator bases, the structure tensor and Liouville-space lifting.

Two Gell-Mann orderings are available:

``"blocks"`` (default)
    symmetric off-diagonal matrices for ``j < k`` in lexicographic order,
    then the antisymmetric ones in the same order, then the ``N - 1``
    diagonal matrices, then ``I / sqrt(N)``.

``"product"``
    the Bertlmann-Krammer enumeration over ``(j, k)`` in row-major order:
    ``j > k`` symmetric, ``j < k`` antisymmetric, ``j == k < N`` diagonal and
    ``(N, N)`` the identity.  The closed-form depolarizing target is written
    in these indices.

All elements are normalized so that ``Tr[C_a^dag C_b] = delta_ab``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import product

import numpy as np

from .errors import DimensionError, InvalidDimensionError

__all__ = [
    "OperatorBasis",
    "BasisChange",
    "build_gell_mann_basis",
    "build_logical_basis",
    "build_structure_tensor",
    "lift_operator",
    "basis_change",
]

GELL_MANN = "generalized-gell-mann"
LOGICAL = "logical"


def _unit(i, j, dim):
    m = np.zeros((dim, dim), dtype=np.complex128)
    m[i, j] = 1.0
    return m


def _symmetric(j, k, dim):
    return (_unit(j, k, dim) + _unit(k, j, dim)) / np.sqrt(2)


def _antisymmetric(j, k, dim):
    return (-1j * _unit(j, k, dim) + 1j * _unit(k, j, dim)) / np.sqrt(2)


def _diagonal(l, dim):
    # l = 1 .. dim-1: diag(1, ..., 1, -l, 0, ...) with l ones, normalized
    d = np.zeros(dim)
    d[:l] = 1.0
    d[l] = -l
    return np.diag(d / np.sqrt(l * (l + 1))).astype(np.complex128)


@dataclass(frozen=True, eq=False)
class OperatorBasis:
    """Ordered orthonormal operator basis ``{C_a}`` of an ``N``-level system.

    Attributes
    ----------
    dim : int
        Hilbert-space dimension ``N``.
    elements : ndarray, shape (N**2, N, N)
        The basis matrices.
    kind : str
        ``"generalized-gell-mann"`` or ``"logical"``.
    ordering : str
        ``"blocks"``/``"product"`` for Gell-Mann, ``"row-major"`` for logical.
    labels : tuple of str
        Human-readable name of each element.
    """

    dim: int
    elements: np.ndarray
    kind: str
    ordering: str
    labels: tuple = field(default=())

    def __post_init__(self):
        self.elements.setflags(write=False)

    @property
    def size(self):
        return self.dim * self.dim

    @cached_property
    def structure_tensor(self):
        return build_structure_tensor(self)

    def gram(self):
        c = self.elements
        return np.einsum("aji,bji->ab", c.conj(), c)

    def coefficients(self, op):
        """Expansion coefficients ``Tr[C_a^dag op]``."""
        op = np.asarray(op)
        if op.shape != (self.dim, self.dim):
            raise DimensionError(f"expected {self.dim}x{self.dim} operator, got {op.shape}")
        return np.einsum("aji,ji->a", self.elements.conj(), op)

    def to_dict(self):
        return {
            "dim": self.dim,
            "kind": self.kind,
            "ordering": self.ordering,
            "labels": list(self.labels),
            "elements": [{"re": c.real.tolist(), "im": c.imag.tolist()} for c in self.elements],
        }


StructureTensor = np.ndarray
"""Array ``F[l, a, m] = Tr[C_a^dag C_l C_m]`` of shape ``(N**2, N**2, N**2)``."""


@dataclass(frozen=True, eq=False)
class BasisChange:
    """Unitary ``S[a, b] = Tr[C_a^dag C'_b]`` between two bases of equal dimension.

    A process matrix transforms as ``chi' = S^dag chi S``.
    """

    source: OperatorBasis
    target: OperatorBasis
    matrix: np.ndarray

    def apply(self, chi):
        s = self.matrix
        return s.conj().T @ chi @ s

    def inverse(self, chi):
        s = self.matrix
        return s @ chi @ s.conj().T


def build_gell_mann_basis(dim, ordering="blocks"):
    """Normalized generalized Gell-Mann basis with ``I / sqrt(dim)`` last.

    >>> b = build_gell_mann_basis(2)
    >>> b.labels
    ('S01', 'A01', 'D1', 'I')
    """
    if int(dim) != dim or dim < 2:
        raise InvalidDimensionError(f"dimension must be an integer >= 2, got {dim!r}")
    dim = int(dim)
    if ordering == "blocks":
        pairs = [(j, k) for j in range(dim) for k in range(j + 1, dim)]
        mats = [_symmetric(j, k, dim) for j, k in pairs]
        labels = [f"S{j}{k}" for j, k in pairs]
        mats += [_antisymmetric(j, k, dim) for j, k in pairs]
        labels += [f"A{j}{k}" for j, k in pairs]
        mats += [_diagonal(l, dim) for l in range(1, dim)]
        labels += [f"D{l}" for l in range(1, dim)]
    elif ordering == "product":
        mats, labels = [], []
        for j, k in product(range(dim), repeat=2):
            if j > k:
                mats.append(_symmetric(k, j, dim))
                labels.append(f"S{k}{j}")
            elif j < k:
                mats.append(_antisymmetric(j, k, dim))
                labels.append(f"A{j}{k}")
            elif j < dim - 1:
                mats.append(_diagonal(j + 1, dim))
                labels.append(f"D{j + 1}")
        # the (dim, dim) slot is the identity and is appended below
    else:
        raise ValueError(f"unknown Gell-Mann ordering {ordering!r}")
    mats.append(np.eye(dim, dtype=np.complex128) / np.sqrt(dim))
    labels.append("I")
    return OperatorBasis(dim, np.array(mats), GELL_MANN, ordering, tuple(labels))


def build_logical_basis(dim):
    """Matrix units ``|i><j|`` in row-major ``(i, j)`` order."""
    if int(dim) != dim or dim < 2:
        raise InvalidDimensionError(f"dimension must be an integer >= 2, got {dim!r}")
    dim = int(dim)
    mats = np.array([_unit(i, j, dim) for i, j in product(range(dim), repeat=2)])
    labels = tuple(f"|{i}><{j}|" for i, j in product(range(dim), repeat=2))
    return OperatorBasis(dim, mats, LOGICAL, "row-major", labels)


def build_structure_tensor(basis):
    """Dense rank-3 tensor ``F[l, a, m] = Tr[C_a^dag C_l C_m]``.

    The first axis selects ``F_l``; the remaining two are its matrix indices.
    """
    c = basis.elements
    return np.einsum("aji,ljk,mki->lam", c.conj(), c, c, optimize=True)


def lift_operator(op, basis):
    """Liouville representation ``Y[m, n] = Tr[C_m^dag op C_n]``.

    This is the matrix of left multiplication by ``op`` in the basis, so the
    lift is multiplicative and maps Hermitian operators to Hermitian ones.
    """
    op = np.asarray(op, dtype=np.complex128)
    if op.shape != (basis.dim, basis.dim):
        raise DimensionError(f"expected {basis.dim}x{basis.dim} operator, got {op.shape}")
    c = basis.elements
    return np.einsum("mji,jk,nki->mn", c.conj(), op, c, optimize=True)


def basis_change(source, target):
    if source.dim != target.dim:
        raise DimensionError(f"basis dimensions differ: {source.dim} vs {target.dim}")
    s = np.einsum("aji,bji->ab", source.elements.conj(), target.elements)
    return BasisChange(source, target, s)
