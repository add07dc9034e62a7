"""Time grids, shaped control fields, field cost and pulse spectra.

States live on grid points ``t_k = k dt`` and fields on interval midpoints
``t_{k+1/2}``. The field cost uses the midpoint rule on the same staggering.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import DimensionError, DomainError, InvalidGridError, PinnedPointViolation

__all__ = [
    "TimeGrid",
    "ShapeFunction",
    "ControlField",
    "blackman_shape",
    "guess_pulse",
    "field_cost",
    "pulse_spectrum",
    "write_pulse_csv",
    "write_spectrum_csv",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on ``[0, t_f]`` (ns) with ``n_steps`` intervals."""

    t_f: float
    n_steps: int

    def __post_init__(self):
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise InvalidGridError(f"n_steps must be an integer >= 2, got {self.n_steps!r}")
        if not (np.isfinite(self.t_f) and self.t_f > 0):
            raise InvalidGridError(f"t_f must be positive, got {self.t_f!r}")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "t_f", float(self.t_f))

    @property
    def dt(self):
        return self.t_f / self.n_steps

    @property
    def points(self):
        return np.arange(self.n_steps + 1) * self.dt

    @property
    def midpoints(self):
        return (np.arange(self.n_steps) + 0.5) * self.dt


def blackman_shape(t, t_f, g=0.16, k=4, l=8):
    """``[1 - g - cos(k pi t/t_f) + g cos(l pi t/t_f)] / 2``, for ``0 <= t <= t_f``.

    Accepts scalars or arrays. Rounding residue below zero is clipped.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > t_f) or not np.all(np.isfinite(t_arr)):
        raise DomainError(f"shape time outside [0, {t_f}]")
    x = np.pi * t_arr / t_f
    val = 0.5 * (1.0 - g - np.cos(k * x) + g * np.cos(l * x))
    val = np.where((val < 0) & (val > -1e-12), 0.0, val)
    return float(val) if np.ndim(t) == 0 else val


@dataclass(frozen=True)
class ShapeFunction:
    """Update shape ``f(t)`` in ``[0, 1]``.

    ``kind`` is ``"blackman-paper"`` (uses ``g, k, l``), ``"constant"`` (value 1)
    or ``"custom-samples"`` (``samples`` given on the midpoints).
    """

    kind: str = "blackman-paper"
    g: float = 0.16
    k: int = 4
    l: int = 8
    samples: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in ("blackman-paper", "constant", "custom-samples"):
            raise ValueError(f"unknown shape kind {self.kind!r}")
        if self.kind == "custom-samples":
            if self.samples is None:
                raise ValueError("custom-samples shape needs samples")
            s = np.asarray(self.samples, dtype=float)
            if np.any(s < 0) or not np.all(np.isfinite(s)):
                raise ValueError("shape samples must be finite and nonnegative")
            object.__setattr__(self, "samples", tuple(s.tolist()))

    def evaluate(self, t, t_f):
        if self.kind == "blackman-paper":
            return blackman_shape(t, t_f, self.g, self.k, self.l)
        if self.kind == "constant":
            return np.ones_like(np.asarray(t, dtype=float))
        raise ValueError("custom-samples shape can only be sampled on its grid")

    def on_grid(self, grid):
        if self.kind == "custom-samples":
            s = np.asarray(self.samples)
            if s.size != grid.n_steps:
                raise DimensionError(f"shape has {s.size} samples, grid has {grid.n_steps} steps")
            return s
        return np.asarray(self.evaluate(grid.midpoints, grid.t_f), dtype=float)

    def to_dict(self):
        d = {"kind": self.kind}
        if self.kind == "blackman-paper":
            d.update(g=self.g, k=self.k, l=self.l)
        elif self.kind == "custom-samples":
            d["samples"] = list(self.samples)
        return d


@dataclass(frozen=True, eq=False)
class ControlField:
    """Field samples on the midpoints of ``grid`` plus its cost data.

    Attributes
    ----------
    name : str
    samples : ndarray, shape (n_steps,)
        Field values in rad/ns.
    shape : ShapeFunction
    weight : float
        Cost weight ``w_m > 0``.
    reference : ndarray
        Reference samples ``eps_ref``; defaults to ``samples``.
    grid : TimeGrid
    """

    name: str
    samples: np.ndarray
    shape: ShapeFunction
    weight: float
    grid: TimeGrid
    reference: Optional[np.ndarray] = None

    def __post_init__(self):
        s = np.array(self.samples, dtype=float)
        if s.shape != (self.grid.n_steps,):
            raise DimensionError(f"field {self.name!r} needs {self.grid.n_steps} samples, got {s.shape}")
        if not self.weight > 0:
            raise ValueError(f"field weight must be positive, got {self.weight}")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        ref = s if self.reference is None else np.array(self.reference, dtype=float)
        if ref.shape != s.shape:
            raise DimensionError("reference and samples differ in length")
        ref.setflags(write=False)
        object.__setattr__(self, "reference", ref)

    @property
    def shape_samples(self):
        return self.shape.on_grid(self.grid)

    def with_samples(self, samples, reference=None):
        return replace(self, samples=samples, reference=self.reference if reference is None else reference)


def guess_pulse(shape, peak, grid, name="field", weight=1.0):
    """``eps(t_{k+1/2}) = peak * f(t_{k+1/2})``."""
    if not peak >= 0:
        raise ValueError(f"peak must be nonnegative, got {peak}")
    return ControlField(name, peak * shape.on_grid(grid), shape, weight, grid)


def field_cost(fields, grid=None):
    """``sum_m w_m int (eps_m - eps_ref_m)^2 / f_m dt`` by the midpoint rule.

    Points where ``f_m = 0`` are pinned: any deviation there raises
    :class:`PinnedPointViolation`.
    """
    if isinstance(fields, ControlField):
        fields = [fields]
    total = 0.0
    for fm in fields:
        g = fm.grid if grid is None else grid
        dev = fm.samples - fm.reference
        f = fm.shape.on_grid(g)
        pinned = f <= 0
        if np.any(dev[pinned] != 0):
            raise PinnedPointViolation(f"field {fm.name!r} deviates from reference where its shape is zero")
        free = ~pinned
        total += fm.weight * g.dt * float(np.sum(dev[free] ** 2 / f[free]))
    return total


def pulse_spectrum(field_or_samples, grid, window=None):
    """Centered DFT magnitude of midpoint samples.

    Returns ``(omega, magnitude)`` with ``omega`` in rad/ns, negative to positive.
    ``window`` may be ``None``, ``"hann"`` or ``"blackman"``.
    """
    x = np.asarray(getattr(field_or_samples, "samples", field_or_samples), dtype=float)
    if x.size < 2:
        raise InvalidGridError("spectrum needs at least two samples")
    if window == "hann":
        x = x * np.hanning(x.size)
    elif window == "blackman":
        x = x * np.blackman(x.size)
    elif window is not None:
        raise ValueError(f"unknown window {window!r}")
    spec = np.fft.fftshift(np.fft.fft(x)) * grid.dt
    omega = 2 * np.pi * np.fft.fftshift(np.fft.fftfreq(x.size, d=grid.dt))
    return omega, np.abs(spec)


def write_pulse_csv(path, fields, grid=None):
    if isinstance(fields, ControlField):
        fields = [fields]
    g = fields[0].grid if grid is None else grid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_ns"] + [f.name for f in fields])
        for k, t in enumerate(g.midpoints):
            w.writerow([repr(float(t))] + [repr(float(f.samples[k])) for f in fields])


def write_spectrum_csv(path, omega, magnitude):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["omega_rad_per_ns", "magnitude"])
        for o, m in zip(omega, magnitude):
            w.writerow([repr(float(o)), repr(float(m))])
