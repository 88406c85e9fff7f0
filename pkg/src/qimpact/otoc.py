"""Out-of-time-order correlators C_T(t) = -<[x(t), p]^2> in a truncated eigenbasis.

With X the position matrix and A = [H, X] (A_km = (E_k - E_m) x_km), the
momentum matrix is p = i m A / hbar and

    b(t) = -i [x(t), p] = (m/hbar) [X(t), A],   X(t)_nk = x_nk e^{i(E_n-E_k)t/hbar},

so that c_n(t) = sum_m |b_nm(t)|^2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .diagnostics import linear_fit, power_law_fit
from .errors import IndexOutOfBasis, ThermalTailUncaptured
from .lattice import PotentialSpec
from .spectral import EigenBasis, cached_eigensolve, otoc_domain, position_matrix

#: rows this close to the truncation edge are unreliable
EDGE = 3


@dataclass(frozen=True, eq=False)
class OtocCurve:
    times: np.ndarray
    values: np.ndarray
    beta: float
    n_states: int
    n_thermal: int = 0


@dataclass(frozen=True, eq=False)
class GrowthFit:
    x_w: float
    beta: float
    exponent: float
    stderr: float
    t_start: float
    t_end: float
    loglog_residual: float
    semilog_residual: float
    periodic: bool
    converged: bool = True
    truncation_change: float = float("nan")


class OtocKernel:
    """Precomputed matrices for repeated OTOC evaluation on one basis."""

    def __init__(self, basis: EigenBasis, mass: float = 1.0, hbar: float = 1.0):
        self.energies = basis.energies
        self.x = position_matrix(basis)
        ediff = self.energies[:, None] - self.energies[None, :]
        self.a = self.x * ediff
        self.mass = mass
        self.hbar = hbar

    @property
    def n_states(self) -> int:
        return len(self.energies)

    def momentum_matrix(self) -> np.ndarray:
        return 1j * self.mass * self.a / self.hbar

    def rows(self, n_rows: int, times) -> np.ndarray:
        """c_n(t) for n < n_rows; shape (len(times), n_rows)."""
        if n_rows > self.n_states:
            raise IndexOutOfBasis(f"{n_rows} rows requested from a {self.n_states}-state basis")
        out = np.empty((len(times), n_rows))
        pref = self.mass / self.hbar
        for i, t in enumerate(np.asarray(times, dtype=float)):
            ph = np.exp(1j * self.energies * t / self.hbar)
            xt = (ph[:, None] * self.x) * ph.conj()[None, :]
            b = xt[:n_rows] @ self.a - self.a[:n_rows] @ xt
            out[i] = pref**2 * np.sum(np.abs(b) ** 2, axis=1)
        return out


def microcanonical_otoc(basis: EigenBasis, n: int, times, mass: float = 1.0,
                        hbar: float = 1.0, kernel: OtocKernel | None = None):
    """c_n(t) for a single eigenstate.

    Returns ``(values, reliable)``; ``reliable`` is False within EDGE states of
    the truncation edge.
    """
    if not 0 <= n < basis.n_states:
        raise IndexOutOfBasis(f"state {n} outside a {basis.n_states}-state basis")
    k = kernel or OtocKernel(basis, mass, hbar)
    vals = k.rows(n + 1, times)[:, n]
    return vals, n < basis.n_states - EDGE


def thermal_weights(energies: np.ndarray, beta: float, n_thermal: int | None = None,
                    tail: float = 1e-8) -> np.ndarray:
    e = energies - energies[0]
    if n_thermal is None:
        w_all = np.exp(-beta * e)
        w_all /= w_all.sum()
        above = np.flatnonzero(w_all < tail)
        if above.size == 0:
            raise ThermalTailUncaptured(f"beta={beta}: Boltzmann tail not captured by the basis")
        n_thermal = int(above[0])
    w = np.exp(-beta * e[:n_thermal])
    z = w.sum()
    if n_thermal >= len(e) or math.exp(-beta * e[n_thermal]) / z >= tail:
        raise ThermalTailUncaptured(
            f"beta={beta}: weight of state {n_thermal} not below {tail}")
    return w / z


def thermal_otoc(basis: EigenBasis, beta: float, times, n_thermal: int | None = None,
                 mass: float = 1.0, hbar: float = 1.0,
                 kernel: OtocKernel | None = None) -> OtocCurve:
    """Boltzmann average of c_n(t) over the lowest n_thermal states."""
    w = thermal_weights(basis.energies, beta, n_thermal)
    if len(w) > basis.n_states - EDGE:
        raise ThermalTailUncaptured("thermal window reaches the truncation edge")
    k = kernel or OtocKernel(basis, mass, hbar)
    c = k.rows(len(w), times)
    return OtocCurve(np.asarray(times, dtype=float), c @ w, beta, basis.n_states, len(w))


def growth_window(curve: OtocCurve, t_start: float) -> tuple[int, int]:
    """Indices [i0, i1] from t_start to the first local maximum after it."""
    t, v = curve.times, curve.values
    i0 = int(np.searchsorted(t, t_start))
    for i in range(i0 + 1, len(v) - 1):
        if v[i] >= v[i - 1] and v[i] > v[i + 1]:
            return i0, i
    return i0, len(v) - 1


def fit_growth(curve: OtocCurve, t_start: float, x_w: float = math.inf,
               periodic_tol: float = 1e-3) -> GrowthFit:
    """Power-law fit of the early OTOC growth, with an exponential fit for contrast.

    A curve that never rises above its t=0 value is flagged periodic and not fitted.
    """
    v0 = curve.values[0]
    nan = float("nan")
    if curve.values.max() <= v0 * (1.0 + periodic_tol):
        return GrowthFit(x_w, curve.beta, nan, nan, float(curve.times[np.searchsorted(curve.times, t_start)]),
                         nan, nan, nan, True)
    i0, i1 = growth_window(curve, t_start)
    t = curve.times[i0:i1 + 1]
    v = curve.values[i0:i1 + 1]
    if len(t) < 4:
        return GrowthFit(x_w, curve.beta, nan, nan, t_start, float(curve.times[i1]), nan, nan, True)
    slope, err = power_law_fit(t, v)
    _, _, res_ll = linear_fit(np.log(t), np.log(v))
    _, _, res_sl = linear_fit(t, np.log(v))
    return GrowthFit(x_w, curve.beta, slope, err, float(t[0]), float(t[-1]), res_ll, res_sl, False)


def otoc_basis(spec: PotentialSpec, n_states: int, cache_dir=None) -> EigenBasis:
    grid = otoc_domain(spec, n_states)
    return cached_eigensolve(spec.static(), grid, n_states, cache_dir)


def otoc_point(spec: PotentialSpec, betas, times, t_start: float, n_states: int = 300,
               check_truncation: bool = True, cache_dir=None):
    """Thermal curves and growth fits for one wall position; returns (curves, fits).

    With ``check_truncation`` each curve is recomputed with 50% more states;
    a relative change above 1% on the fit window marks the fit unconverged.
    """
    times = np.asarray(times, dtype=float)
    basis = otoc_basis(spec, n_states, cache_dir)
    kern = OtocKernel(basis, spec.m, spec.hbar)
    if check_truncation:
        bb = otoc_basis(spec, int(round(1.5 * n_states)), cache_dir)
        big = OtocKernel(bb, spec.m, spec.hbar)
    curves, fits = [], []
    for beta in betas:
        curve = thermal_otoc(basis, float(beta), times, mass=spec.m, hbar=spec.hbar, kernel=kern)
        fit = fit_growth(curve, t_start, spec.x_w)
        if check_truncation:
            ref = thermal_otoc(bb, float(beta), times, curve.n_thermal, spec.m, spec.hbar, big)
            i0 = int(np.searchsorted(times, t_start))
            i1 = len(times) - 1 if math.isnan(fit.t_end) else int(np.searchsorted(times, fit.t_end))
            sl = slice(i0, i1 + 1)
            change = float(np.max(np.abs(ref.values[sl] - curve.values[sl])
                                  / np.abs(ref.values[sl]).clip(1e-300)))
            fit = replace(fit, truncation_change=change, converged=change < 0.01)
        curves.append(curve)
        fits.append(fit)
    return curves, fits


def otoc_growth_scan(specs, betas, t_start: float, t_max: float, n_times: int = 400,
                     n_states: int = 300, check_truncation: bool = True,
                     cache_dir=None) -> list[GrowthFit]:
    """Early-growth exponent of C_T(t) for every (spec, beta) pair."""
    times = np.linspace(0.0, t_max, n_times)
    rows = []
    for spec in specs:
        rows += otoc_point(spec, betas, times, t_start, n_states, check_truncation, cache_dir)[1]
    return rows
