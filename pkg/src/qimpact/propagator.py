"""Time evolution of wave states.

Static Hamiltonians are propagated exactly in an eigenbasis.  Forced
Hamiltonians H(t) = H_static + f(t) x use the fourth-order optimized
commutator-free exponential propagator (CFET-4): a product of three
exponentials of weighted Hamiltonian samples at Gauss-like nodes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import BasisTruncation, KrylovStall, NormDrift
from .lattice import PotentialSpec, WaveState
from .spectral import DEFAULT_ORDER, EigenBasis, GridHamiltonian, grid_hamiltonian


@dataclass(frozen=True)
class CfetCoefficients:
    x1: float
    x2: float
    x3: float
    g1: float
    g2: float
    g3: float
    g4: float
    g5: float

    @property
    def nodes(self) -> tuple[float, float, float]:
        return (self.x1, self.x2, self.x3)

    def weights(self) -> np.ndarray:
        """3x3 matrix: row e holds the node weights of exponential e (applied first = row 0)."""
        g1, g2, g3, g4, g5 = self.g1, self.g2, self.g3, self.g4, self.g5
        # the rightmost factor of U acts first
        return np.array([[g3, g2, g1], [g4, g5, g4], [g1, g2, g3]])


def _cfet4() -> CfetCoefficients:
    r = math.sqrt(3.0 / 20.0)
    s = (10.0 / 87.0) * math.sqrt(5.0 / 3.0)
    return CfetCoefficients(0.5 - r, 0.5, 0.5 + r,
                            37.0 / 240.0 - s, -1.0 / 30.0, 37.0 / 240.0 + s,
                            -11.0 / 360.0, 23.0 / 45.0)


CFET4 = _cfet4()


def lanczos_expm(matvec, v: np.ndarray, tau: complex, tol: float = 1e-12,
                 max_dim: int = 128) -> np.ndarray:
    """exp(tau*H) v for Hermitian H given as a matvec, by Lanczos.

    Grows the Krylov space until the a-posteriori error estimate
    |beta_m [exp(tau T_m)]_{m,0}| drops below ``tol`` (relative to |v|).
    """
    beta0 = np.linalg.norm(v)
    if beta0 == 0.0:
        return np.zeros_like(v)
    n = v.shape[0]
    dim = min(max_dim, n)
    V = np.empty((dim + 1, n), dtype=complex)
    alpha = np.zeros(dim)
    beta = np.zeros(dim)
    V[0] = v / beta0
    for j in range(dim):
        w = matvec(V[j])
        alpha[j] = np.vdot(V[j], w).real
        w = w - alpha[j] * V[j]
        if j > 0:
            w = w - beta[j - 1] * V[j - 1]
        # full reorthogonalisation keeps the small basis clean
        w = w - V[: j + 1].T @ (V[: j + 1].conj() @ w)
        beta[j] = np.linalg.norm(w)
        k = j + 1
        if k >= 4 or beta[j] < tol:
            ev, evec = sla.eigh_tridiagonal(alpha[:k], beta[: k - 1])
            coef = evec @ (np.exp(tau * ev) * evec[0])
            err = beta[j] * abs(coef[-1])
            if err < tol or beta[j] < 1e-14:
                return beta0 * (coef @ V[:k])
        if beta[j] == 0.0:
            break
        V[j + 1] = w / beta[j]
    raise KrylovStall(f"Lanczos exponential did not converge within {dim} vectors")


class ForcedPropagator:
    """CFET-4 stepping of a wave state on the grid."""

    def __init__(self, spec: PotentialSpec, grid, order: int = DEFAULT_ORDER,
                 coeffs: CfetCoefficients = CFET4, krylov_tol: float = 1e-12):
        self.spec = spec
        self.ham: GridHamiltonian = grid_hamiltonian(spec, grid, order)
        self.h0 = self.ham.sparse_static()
        self.x = self.ham.x_int
        self.coeffs = coeffs
        self.krylov_tol = krylov_tol

    def _exp(self, psi, a: float, b: float, dt: float):
        """exp(-i dt (a H0 + b x)/hbar) psi."""
        h0, x = self.h0, self.x

        def matvec(u):
            return a * (h0 @ u) + b * (x * u)

        return lanczos_expm(matvec, psi, -1j * dt / self.spec.hbar, self.krylov_tol)

    def step_interior(self, psi: np.ndarray, t: float, dt: float) -> np.ndarray:
        f = np.array([self.spec.forcing(t + xj * dt) for xj in self.coeffs.nodes])
        for row in self.coeffs.weights():
            psi = self._exp(psi, row.sum(), float(row @ f), dt)
        return psi


def cfet4_step(spec: PotentialSpec, psi: WaveState, dt: float,
               propagator: ForcedPropagator | None = None) -> WaveState:
    """One CFET-4 step of length dt."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    prop = propagator or ForcedPropagator(spec, psi.grid)
    n_in = psi.norm2()
    out = np.zeros(psi.grid.n, dtype=complex)
    out[1:-1] = prop.step_interior(psi.psi[1:-1], psi.t, dt)
    n_out = float(np.sum(np.abs(out) ** 2) * psi.grid.dx)
    drift = abs(n_out - n_in) / n_in
    if drift >= 1e-9:
        raise NormDrift(f"norm drift {drift:.3g} in one step")
    out *= math.sqrt(n_in / n_out)
    return WaveState(psi.grid, out, psi.t + dt)


def evolve(spec: PotentialSpec, psi0: WaveState, t_end: float, dt: float,
           sample_stride: int = 1, order: int = DEFAULT_ORDER) -> list[WaveState]:
    """Repeated CFET-4 steps from psi0.t to psi0.t + t_end; returns every
    ``sample_stride``-th state (the initial state included)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    n_steps = int(round(t_end / dt))
    prop = ForcedPropagator(spec, psi0.grid, order)
    out = [psi0]
    state = psi0
    for i in range(1, n_steps + 1):
        state = cfet4_step(spec, WaveState(state.grid, state.psi, psi0.t + (i - 1) * dt), dt, prop)
        if i % sample_stride == 0:
            out.append(state)
    drift = abs(out[-1].norm2() - psi0.norm2())
    if drift >= 1e-7:
        raise NormDrift(f"accumulated norm drift {drift:.3g}")
    return out


def evolve_static(basis: EigenBasis, psi0: WaveState, times, hbar: float = 1.0,
                  min_capture: float = 1.0 - 1e-6) -> list[WaveState]:
    """Exact evolution psi(t) = sum_n c_n exp(-i E_n t/hbar) |n> within the basis."""
    c = basis.coefficients(psi0.psi)
    captured = float(np.sum(np.abs(c) ** 2))
    if captured < min_capture:
        raise BasisTruncation(f"basis captures only {captured:.8f} of the state")
    out = []
    for t in np.asarray(times, dtype=float):
        ct = c * np.exp(-1j * basis.energies * (t - psi0.t) / hbar)
        out.append(WaveState(psi0.grid, basis.synthesize(ct), float(t)))
    return out


class PeriodicPropagator:
    """CFET-4 propagation of a periodically forced oscillator in an eigenbasis.

    H(t) is periodic with the forcing period T, so with dt = T/steps the step
    propagators repeat every period.  The products over each of ``n_sub``
    equal slices of one period are built once as dense matrices in the
    truncated eigenbasis of the static Hamiltonian; long runs then cost one
    small matrix-vector product per slice.
    """

    def __init__(self, spec: PotentialSpec, basis: EigenBasis, steps_per_period: int = 256,
                 n_sub: int = 64, coeffs: CfetCoefficients = CFET4):
        if steps_per_period % n_sub:
            raise ValueError("steps_per_period must be a multiple of n_sub")
        self.spec = spec
        self.basis = basis
        self.period = 2.0 * math.pi / spec.omega_f
        self.n_sub = n_sub
        self.dt = self.period / steps_per_period
        from .spectral import position_matrix

        e = basis.energies
        xm = position_matrix(basis)
        hb = spec.hbar
        per_sub = steps_per_period // n_sub
        w = coeffs.weights()
        self.slices = []
        for s in range(n_sub):
            u = np.eye(len(e), dtype=complex)
            for j in range(per_sub):
                t = (s * per_sub + j) * self.dt
                f = np.array([spec.forcing(t + xj * self.dt) for xj in coeffs.nodes])
                for row in w:
                    a, b = row.sum(), float(row @ f)
                    ev, vec = np.linalg.eigh(a * np.diag(e) + b * xm)
                    u = (vec * np.exp(-1j * self.dt * ev / hb)) @ (vec.conj().T @ u)
            self.slices.append(u)

    def run(self, c0: np.ndarray, n_periods: int):
        """Basis coefficients at t = j*T/n_sub, j = 0..n_periods*n_sub."""
        out = np.empty((n_periods * self.n_sub + 1, len(c0)), dtype=complex)
        out[0] = c = np.asarray(c0, dtype=complex)
        k = 1
        for _ in range(n_periods):
            for u in self.slices:
                c = u @ c
                out[k] = c
                k += 1
        return out
