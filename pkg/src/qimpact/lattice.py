"""Spatial lattice, wavefunction containers and impact-oscillator potentials.

Hard walls are Dirichlet boundaries: a hard-wall grid ends exactly at the wall
and the first/last grid points are boundary nodes where psi vanishes.  The
soft wall is a smooth potential whose curvature is a logistic step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.special import erfc, spence

from .errors import InvalidGrid, PacketClipped, ResonantForcing, WrongVariant

#: returned by :func:`potential_value` on the far side of a hard wall
WALL = math.inf


class Variant(str, Enum):
    HARD = "hard"
    FORCED_HARD = "forced_hard"
    SOFT = "soft"


@dataclass(frozen=True)
class Grid:
    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise InvalidGrid(f"need at least 3 points, got n={self.n}")
        if not (math.isfinite(self.x_min) and math.isfinite(self.x_max)):
            raise InvalidGrid("grid bounds must be finite")
        if not self.x_max > self.x_min:
            raise InvalidGrid(f"x_max={self.x_max} must exceed x_min={self.x_min}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "x_min", float(self.x_min))
        object.__setattr__(self, "x_max", float(self.x_max))

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n - 1)

    @property
    def x(self) -> np.ndarray:
        return self.x_min + np.arange(self.n) * self.dx

    def to_dict(self) -> dict:
        return {"x_min": self.x_min, "x_max": self.x_max, "n": self.n}


def build_grid(x_min: float, x_max: float, n: int) -> Grid:
    return Grid(x_min, x_max, n)


@dataclass(frozen=True, eq=False)
class WaveState:
    grid: Grid
    psi: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        psi = np.array(self.psi, dtype=complex)
        if psi.shape != (self.grid.n,):
            raise ValueError(f"psi has shape {psi.shape}, grid has {self.grid.n} points")
        psi.setflags(write=False)
        object.__setattr__(self, "psi", psi)

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    def norm2(self) -> float:
        return float(np.sum(self.density) * self.grid.dx)

    def with_psi(self, psi, t=None) -> "WaveState":
        return WaveState(self.grid, psi, self.t if t is None else t)


@dataclass(frozen=True)
class PotentialSpec:
    """Hard-wall, forced hard-wall or soft sigmoid-wall oscillator.

    ``x_w = inf`` removes the wall (plain harmonic oscillator).  ``phase`` shifts
    the forcing: the hard-wall forcing is ``x*A_f*sin(w t + phase)``, the soft-wall
    forcing ``x*A_f*cos(w t + phase)``.
    """

    variant: Variant = Variant.HARD
    k: float = 1.0
    m: float = 1.0
    hbar: float = 1.0
    x_w: float = math.inf
    A_f: float = 0.0
    omega_f: float = 0.0
    A: float = 0.0
    c: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if not (self.k > 0 and self.m > 0 and self.hbar > 0):
            raise ValueError("k, m and hbar must be positive")
        if self.variant is Variant.SOFT and not (self.A > 0 and self.c > 0):
            raise ValueError("soft wall needs A > 0 and c > 0")
        if self.variant is Variant.SOFT and not math.isfinite(self.x_w):
            raise ValueError("soft wall needs a finite x_w")

    @property
    def omega0(self) -> float:
        return math.sqrt(self.k / self.m)

    @property
    def is_hard(self) -> bool:
        return self.variant is not Variant.SOFT

    @property
    def forced(self) -> bool:
        return self.A_f != 0.0 and (self.variant is not Variant.HARD)

    def forcing(self, t):
        """Coefficient f(t) of the linear term x*f(t)."""
        if not self.forced:
            return 0.0 * np.asarray(t, dtype=float)
        arg = self.omega_f * np.asarray(t, dtype=float) + self.phase
        trig = np.cos if self.variant is Variant.SOFT else np.sin
        return self.A_f * trig(arg)

    def static(self) -> "PotentialSpec":
        """The same oscillator with the forcing switched off."""
        return replace(self, A_f=0.0)

    def to_dict(self) -> dict:
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d["variant"] = self.variant.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PotentialSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown potential fields: {sorted(unknown)}")
        return cls(**{k: (float(v) if k != "variant" else v) for k, v in d.items()})


def _softplus_integral(u):
    """Antiderivative of log(1+e^u) vanishing at -inf, i.e. -Li2(-e^u)."""
    u = np.asarray(u, dtype=float)
    neg = -spence(1.0 + np.exp(np.minimum(u, 0.0)))
    pos = 0.5 * u**2 + math.pi**2 / 6 + spence(1.0 + np.exp(-np.maximum(u, 0.0)))
    return np.where(u <= 0, neg, pos)


def _soft_static(spec: PotentialSpec, x):
    kA = spec.k * spec.A
    u = spec.c * (x - spec.x_w)
    u0 = -spec.c * spec.x_w
    wall = (kA / spec.c**2) * (_softplus_integral(u) - _softplus_integral(u0))
    return 0.5 * spec.k * x**2 + wall


def potential_value(spec: PotentialSpec, x, t: float = 0.0):
    """V(x, t); hard walls give ``WALL`` (inf) for x >= x_w."""
    x = np.asarray(x, dtype=float)
    f = spec.forcing(t)
    if spec.variant is Variant.SOFT:
        v = _soft_static(spec, x) + x * f
    else:
        v = np.where(x < spec.x_w, 0.5 * spec.k * x**2 + x * f, WALL)
    return v[()] if v.ndim == 0 else v


def potential_gradient(spec: PotentialSpec, x, t: float = 0.0):
    """dV/dx including the forcing term (hard walls: smooth part only)."""
    x = np.asarray(x, dtype=float)
    g = spec.k * x + spec.forcing(t)
    if spec.variant is Variant.SOFT:
        g = g + (spec.k * spec.A / spec.c) * np.logaddexp(0.0, spec.c * (x - spec.x_w))
    return g[()] if np.ndim(g) == 0 else g


def soft_derivatives(spec: PotentialSpec, x):
    """(V'', V''') of the soft wall."""
    if spec.variant is not Variant.SOFT:
        raise WrongVariant(f"soft_derivatives needs the soft variant, got {spec.variant.value}")
    x = np.asarray(x, dtype=float)
    u = spec.c * (x - spec.x_w)
    s = 0.5 * (1.0 + np.tanh(0.5 * u))  # logistic, overflow-free
    kA = spec.k * spec.A
    d2 = kA * s + spec.k
    d3 = kA * spec.c * s * (1.0 - s)
    if d2.ndim == 0:
        return float(d2), float(d3)
    return d2, d3


def gaussian_packet(grid: Grid, mean: float, variance: float, momentum: float = 0.0,
                    hbar: float = 1.0, t: float = 0.0) -> WaveState:
    """Gaussian packet whose density is N(mean, variance), boosted by momentum."""
    if not variance > 0:
        raise ValueError("variance must be positive")
    if not grid.x_min < mean < grid.x_max:
        raise PacketClipped(f"mean {mean} outside ({grid.x_min}, {grid.x_max})")
    sd = math.sqrt(variance)
    tail = 0.5 * (erfc((mean - grid.x_min) / (sd * math.sqrt(2)))
                  + erfc((grid.x_max - mean) / (sd * math.sqrt(2))))
    if tail > 1e-8:
        raise PacketClipped(f"tail mass {tail:.3g} outside the grid")
    x = grid.x
    psi = np.exp(-((x - mean) ** 2) / (4 * variance) + 1j * momentum * x / hbar)
    psi[0] = psi[-1] = 0.0
    psi /= math.sqrt(np.sum(np.abs(psi) ** 2) * grid.dx)
    return WaveState(grid, psi, t)


def grazing_amplitude(x_w: float, m: float, omega0: float, omega_f: float) -> float:
    """Forcing amplitude at which the forced harmonic packet just reaches x_w."""
    if omega_f == omega0:
        raise ResonantForcing("grazing amplitude undefined at resonance")
    return x_w * m * omega0 * abs(omega_f - omega0)


def wall_grid(spec: PotentialSpec, x_min: float, n: int, x_max: float | None = None) -> Grid:
    """Grid ending on the hard wall (or at x_max when the wall is absent/soft)."""
    if spec.is_hard and math.isfinite(spec.x_w):
        return Grid(x_min, spec.x_w, n)
    if x_max is None:
        raise InvalidGrid("x_max required without a hard wall")
    return Grid(x_min, x_max, n)


def check_wall(spec: PotentialSpec, grid: Grid) -> None:
    """Hard walls must sit on the last grid point or beyond the grid."""
    if spec.is_hard and spec.x_w < grid.x_max - 1e-12 * max(1.0, abs(grid.x_max)):
        raise InvalidGrid(
            f"hard wall at {spec.x_w} lies inside the grid (x_max={grid.x_max}); "
            "end the grid at the wall")
