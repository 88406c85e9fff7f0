"""Observables extracted from wave states: entropy, Wigner function,
moments and stroboscopic densities."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import TooFewSamples
from .lattice import Grid, WaveState


@dataclass(frozen=True, eq=False)
class TimeSeries:
    values: np.ndarray
    dt_sample: float
    t0: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or len(v) < 2:
            raise ValueError("a time series needs at least 2 samples")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt_sample * np.arange(len(self.values))

    def tail(self, start: int) -> "TimeSeries":
        return TimeSeries(self.values[start:], self.dt_sample, self.t0 + start * self.dt_sample)

    def decimate(self, stride: int) -> "TimeSeries":
        return TimeSeries(self.values[::stride], self.dt_sample * stride, self.t0)


@dataclass(frozen=True, eq=False)
class WignerField:
    x_grid: Grid
    p: np.ndarray
    w: np.ndarray   # shape (len(p), x_grid.n)

    @property
    def dp(self) -> float:
        return float(self.p[1] - self.p[0])

    def total(self) -> float:
        return float(self.w.sum() * self.x_grid.dx * self.dp)


def entropy_of_density(rho: np.ndarray, dx: float) -> float:
    rho = np.asarray(rho, dtype=float)
    safe = np.where(rho < 1e-300, 1.0, rho)
    return float(-np.sum(np.where(rho < 1e-300, 0.0, rho * np.log(safe))) * dx)


def entropy(psi: WaveState) -> float:
    """Differential entropy -sum rho ln rho dx of the position density (nats)."""
    return entropy_of_density(psi.density, psi.grid.dx)


def entropy_series(densities: np.ndarray, dx: float, dt_sample: float, t0: float = 0.0) -> TimeSeries:
    rho = np.asarray(densities, dtype=float)
    safe = np.where(rho < 1e-300, 1.0, rho)
    s = -np.sum(np.where(rho < 1e-300, 0.0, rho * np.log(safe)), axis=1) * dx
    return TimeSeries(s, dt_sample, t0)


def wigner(psi: WaveState, n_p: int | None = None, hbar: float = 1.0) -> WignerField:
    """W(x,p) by FFT over the separation y (sampled on the grid spacing).

    The momentum lattice has ``n_p`` points covering |p| < pi*hbar/(2 dx); the
    default is twice the correlation length, so the transform is zero-padded.
    """
    g = psi.grid
    n = g.n
    if n_p is None:
        n_p = 1 << int(math.ceil(math.log2(2 * (2 * n - 1))))
    J = min(n - 1, (n_p - 1) // 2)
    a = psi.psi
    pad = np.zeros(n + 2 * J, dtype=complex)
    pad[J:J + n] = a
    idx = np.arange(n)[:, None] + J
    js = np.arange(-J, J + 1)[None, :]
    corr = np.conj(pad[idx + js]) * pad[idx - js]          # (n, 2J+1)
    buf = np.zeros((n, n_p), dtype=complex)
    buf[:, js[0] % n_p] = corr
    w = np.fft.fftshift(np.fft.ifft(buf, axis=1) * n_p, axes=1) * g.dx / (math.pi * hbar)
    k = np.arange(n_p) - n_p // 2
    p = math.pi * hbar * k / (n_p * g.dx)
    imag = np.abs(w.imag).max()
    if imag > 1e-10 * max(1.0, np.abs(w.real).max()):
        raise ArithmeticError(f"Wigner function has imaginary residue {imag:.3g}")
    return WignerField(g, p, np.ascontiguousarray(w.real.T))


# 8th-order centred first derivative
_D1 = np.array([4 / 5, -1 / 5, 4 / 105, -1 / 280])


def _derivative(f: np.ndarray, dx: float) -> np.ndarray:
    out = np.zeros_like(f)
    n = len(f)
    pad = np.zeros(n + 8, dtype=f.dtype)
    pad[4:4 + n] = f
    for k, c in enumerate(_D1, start=1):
        out += c * (pad[4 + k:4 + k + n] - pad[4 - k:4 - k + n])
    return out / dx


def expectations(psi: WaveState, hbar: float = 1.0):
    """(<x>, <p>, <x^2>, <p^2>) by quadrature on the grid."""
    g = psi.grid
    x = g.x
    rho = psi.density
    a = psi.psi
    d = _derivative(a, g.dx)
    ex = float(np.sum(x * rho) * g.dx)
    ex2 = float(np.sum(x**2 * rho) * g.dx)
    ep = float(np.real(np.sum(np.conj(a) * (-1j * hbar) * d)) * g.dx)
    ep2 = float(hbar**2 * np.sum(np.abs(d) ** 2) * g.dx)
    return ex, ep, ex2, ep2


def stroboscopic_density(states, n_skip: int = 0, dx: float | None = None) -> np.ndarray:
    """Average density over snapshots taken once per forcing period.

    ``states`` is a sequence of WaveStates or an array of densities (then dx
    is required).  The first ``n_skip`` snapshots are discarded.
    """
    if len(states) and isinstance(states[0], WaveState):
        dx = states[0].grid.dx
        rho = np.array([s.density for s in states[n_skip:]])
    else:
        rho = np.asarray(states, dtype=float)[n_skip:]
    if rho.shape[0] < 16:
        raise TooFewSamples(f"{rho.shape[0]} snapshots retained, need 16")
    avg = np.sort(rho, axis=0).sum(axis=0) / rho.shape[0]
    return avg / (avg.sum() * dx)
