"""Stationary eigenproblem on the lattice.

The kinetic term is a symmetric central-difference stencil of configurable
order (2 gives the classic 3-point Laplacian).  Dirichlet boundaries at both
grid ends are imposed with odd-reflection ghost points, which keeps the
Hamiltonian real symmetric and banded.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigvals_banded, solve_banded

from .errors import NoConvergence, TooManyStates
from .lattice import Grid, PotentialSpec, check_wall, potential_value

DEFAULT_ORDER = 8


def laplacian_stencil(order: int) -> np.ndarray:
    """Coefficients c_0..c_m of the order-``order`` central second difference."""
    if order < 2 or order % 2:
        raise ValueError("stencil order must be an even integer >= 2")
    m = order // 2
    c = np.zeros(m + 1)
    for k in range(1, m + 1):
        c[k] = 2.0 * (-1) ** (k + 1) * math.factorial(m) ** 2 / (
            k**2 * math.factorial(m - k) * math.factorial(m + k))
    c[0] = -2.0 * c[1:].sum()
    return c


def kinetic_bands(n_int: int, dx: float, order: int, hbar: float, mass: float) -> np.ndarray:
    """Lower band storage (scipy ``eig_banded`` layout) of -hbar^2/2m d2/dx2."""
    c = laplacian_stencil(order)
    m = len(c) - 1
    pref = -hbar**2 / (2.0 * mass * dx**2)
    bands = np.zeros((m + 1, n_int))
    for d in range(m + 1):
        bands[d, : n_int - d] = pref * c[d]
    # odd-reflection ghosts: M[i,j] -= c[i+j] (left) and c[2N+2-i-j] (right),
    # interior indices i, j = 1..N
    for d in range(m + 1):
        for col in range(n_int - d):
            i, j = col + d + 1, col + 1
            s = i + j
            if s <= m:
                bands[d, col] -= pref * c[s]
            s = 2 * n_int + 2 - i - j
            if s <= m:
                bands[d, col] -= pref * c[s]
    return bands


@dataclass(frozen=True, eq=False)
class GridHamiltonian:
    """H(t) = H_static + f(t) x restricted to the interior grid nodes."""

    spec: PotentialSpec
    grid: Grid
    order: int
    bands: np.ndarray          # lower band storage of H_static
    x_int: np.ndarray

    @property
    def n_int(self) -> int:
        return self.grid.n - 2

    def sparse_static(self) -> sp.csr_matrix:
        m = self.bands.shape[0] - 1
        diags = [self.bands[0]]
        offsets = [0]
        for d in range(1, m + 1):
            diags += [self.bands[d, : self.n_int - d]] * 2
            offsets += [-d, d]
        return sp.diags(diags, offsets, shape=(self.n_int, self.n_int), format="csr")

    def dense_static(self) -> np.ndarray:
        return self.sparse_static().toarray()


def grid_hamiltonian(spec: PotentialSpec, grid: Grid, order: int = DEFAULT_ORDER) -> GridHamiltonian:
    check_wall(spec, grid)
    x_int = grid.x[1:-1]
    bands = kinetic_bands(grid.n - 2, grid.dx, order, spec.hbar, spec.m)
    v = potential_value(spec.static(), x_int, 0.0)
    if not np.all(np.isfinite(v)):
        raise ValueError("static potential is not finite on the interior nodes")
    bands[0] += v
    return GridHamiltonian(spec, grid, order, bands, x_int)


@dataclass(frozen=True, eq=False)
class EigenBasis:
    grid: Grid
    energies: np.ndarray       # ascending
    states: np.ndarray         # (n_states, grid.n), real, sum |phi|^2 dx = 1

    @property
    def n_states(self) -> int:
        return len(self.energies)

    def coefficients(self, psi) -> np.ndarray:
        return self.states @ np.asarray(psi) * self.grid.dx

    def synthesize(self, coeffs) -> np.ndarray:
        return np.asarray(coeffs) @ self.states

    def save(self, path) -> None:
        np.savez(path, energies=self.energies, states=self.states,
                 grid=np.array([self.grid.x_min, self.grid.x_max, self.grid.n]))

    @classmethod
    def load(cls, path) -> "EigenBasis":
        with np.load(path) as f:
            g = f["grid"]
            return cls(Grid(g[0], g[1], int(g[2])), f["energies"], f["states"])


def eigensolve(spec: PotentialSpec, grid: Grid, n_states: int,
               order: int = DEFAULT_ORDER) -> EigenBasis:
    """Lowest ``n_states`` eigenpairs of the static (unforced) Hamiltonian."""
    if n_states < 1 or n_states > grid.n // 4:
        raise TooManyStates(f"n_states={n_states} exceeds n/4={grid.n // 4}")
    h = grid_hamiltonian(spec, grid, order)
    w = eigvals_banded(h.bands, lower=True, select="i", select_range=(0, n_states - 1),
                       check_finite=False)
    v = _inverse_iteration(h.bands, w) / math.sqrt(grid.dx)
    # deterministic sign: last clearly nonzero sample positive (Hermite convention)
    for j in range(v.shape[1]):
        col = v[:, j]
        last = np.flatnonzero(np.abs(col) > 1e-3 * np.abs(col).max())[-1]
        if col[last] < 0:
            v[:, j] = -col
    states = np.zeros((n_states, grid.n))
    states[:, 1:-1] = v.T
    return EigenBasis(grid, w, states)


def _inverse_iteration(bands: np.ndarray, energies: np.ndarray, sweeps: int = 3) -> np.ndarray:
    """Eigenvectors of a symmetric banded matrix for known eigenvalues."""
    m, n = bands.shape[0] - 1, bands.shape[1]
    full = np.zeros((2 * m + 1, n))
    full[m:] = bands
    for d in range(1, m + 1):
        full[m - d, d:] = bands[d, : n - d]
    rng = np.random.default_rng(12345)
    start = rng.standard_normal(n)
    vecs = np.empty((n, len(energies)))
    for j, e in enumerate(energies):
        shifted = full.copy()
        shifted[m] -= e + 1e-13 * max(1.0, abs(e))
        v = start.copy()
        for _ in range(sweeps):
            v = solve_banded((m, m), shifted, v, check_finite=False)
            v /= np.linalg.norm(v)
        # clean residual overlap with neighbours (eigenvalues are simple here)
        for i in range(max(0, j - 3), j):
            v -= (vecs[:, i] @ v) * vecs[:, i]
        vecs[:, j] = v / np.linalg.norm(v)
    return vecs


def position_matrix(basis: EigenBasis) -> np.ndarray:
    """x_nm = sum_i phi_n(x_i) x_i phi_m(x_i) dx, exactly symmetric."""
    phi = basis.states
    xm = (phi * basis.grid.x) @ phi.T * basis.grid.dx
    return 0.5 * (xm + xm.T)


def numerov_verify(spec: PotentialSpec, grid: Grid, E_approx: float, tol: float = 1e-10,
                   max_iter: int = 200, max_shift: float | None = None) -> float:
    """Refine an eigenvalue by Numerov shooting with Cooley's energy correction.

    Dirichlet conditions at both grid ends.  Deep in a classically forbidden
    region the wavefunction is set to zero once its WKB decay passes e^-40.
    ``max_shift`` bounds how far the iteration may wander from ``E_approx``.
    """
    check_wall(spec, grid)
    x = grid.x
    h = grid.dx
    v = np.empty_like(x)
    v[1:-1] = potential_value(spec.static(), x[1:-1], 0.0)
    v[0] = v[-1] = v[1:-1].max()
    scale = 2.0 * spec.m / spec.hbar**2
    E = float(E_approx)
    for _ in range(max_iter):
        g = scale * (v - E)
        w = 1.0 - h**2 * g / 12.0
        allowed = np.flatnonzero(v[1:-1] < E) + 1
        if allowed.size == 0:
            raise NoConvergence(f"energy {E} lies below the potential minimum")
        mi = int(allowed[0])
        kappa = np.sqrt(np.maximum(g, 0.0)) * h
        lo, hi = _wkb_cut(kappa, mi, int(allowed[-1]))
        mi = min(max(mi, lo + 2), hi - 2)
        y = np.zeros(grid.n)
        y[lo + 1] = 1e-20 * w[lo + 1]
        for i in range(lo + 1, mi + 1):
            y[i + 1] = 2 * y[i] - y[i - 1] + h**2 * g[i] * y[i] / w[i]
        yl = y
        yr = np.zeros(grid.n)
        yr[hi - 1] = 1e-20 * w[hi - 1]
        for i in range(hi - 1, mi - 1, -1):
            yr[i - 1] = 2 * yr[i] - yr[i + 1] + h**2 * g[i] * yr[i] / w[i]
        if yl[mi] == 0 or yr[mi] == 0:
            raise NoConvergence("node at the matching point")
        yr = yr * (yl[mi] / yr[mi])
        yy = np.concatenate([yl[:mi], yr[mi:]])
        psi = yy / w
        nrm = np.sum(psi[lo:hi + 1] ** 2)
        # Cooley correction from the defect of the Numerov relation at mi
        defect = (-(yl[mi - 1] - 2 * yy[mi] + yr[mi + 1]) / h**2 / scale
                  + (v[mi] - E) * psi[mi])
        dE = defect * psi[mi] / nrm
        E += dE
        if not math.isfinite(E):
            raise NoConvergence("energy diverged")
        if max_shift is not None and abs(E - E_approx) > max_shift:
            raise NoConvergence(f"iteration left the bracket around {E_approx}")
        if abs(dE) < tol:
            return E
    raise NoConvergence(f"no convergence after {max_iter} iterations (E={E})")


def _wkb_cut(kappa_h, left_tp: int, right_tp: int, depth: float = 40.0):
    n = len(kappa_h)
    lo = 0
    acc = 0.0
    for i in range(left_tp, 0, -1):
        acc += kappa_h[i]
        if acc > depth:
            lo = i
            break
    hi = n - 1
    acc = 0.0
    for i in range(right_tp, n - 1):
        acc += kappa_h[i]
        if acc > depth:
            hi = i
            break
    return lo, hi


def basis_key(spec: PotentialSpec, grid: Grid, n_states: int, order: int = DEFAULT_ORDER) -> str:
    payload = json.dumps({"spec": spec.static().to_dict(), "grid": grid.to_dict(),
                          "n_states": n_states, "order": order}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:20]


def cached_eigensolve(spec: PotentialSpec, grid: Grid, n_states: int, cache_dir=None,
                      order: int = DEFAULT_ORDER) -> EigenBasis:
    if cache_dir is None:
        return eigensolve(spec, grid, n_states, order)
    path = Path(cache_dir) / f"basis-{basis_key(spec, grid, n_states, order)}.npz"
    if path.exists():
        return EigenBasis.load(path)
    basis = eigensolve(spec, grid, n_states, order)
    path.parent.mkdir(parents=True, exist_ok=True)
    basis.save(path)
    return basis


def otoc_domain(spec: PotentialSpec, n_states: int, points_per_wavelength: float = 12.0,
                margin: float = 1.5) -> Grid:
    """Grid sized for a basis of ``n_states`` levels (used for OTOC bases)."""
    hw = spec.hbar * spec.omega0
    e_max = hw * (n_states + 0.5)
    if spec.is_hard and math.isfinite(spec.x_w):
        # walled levels are sparser than harmonic ones: at most twice the spacing
        e_max = hw * (2 * n_states + 1.5)
    reach = margin * math.sqrt(2.0 * e_max / spec.k)
    left = min(-reach, spec.x_w - reach) if not spec.is_hard else -reach
    if spec.is_hard and math.isfinite(spec.x_w):
        right = spec.x_w
        left = min(left, spec.x_w - reach)
    elif spec.is_hard:
        right = reach
    else:
        right = max(reach, spec.x_w + reach / math.sqrt(1.0 + spec.A))
    v_max = e_max
    p_max = math.sqrt(2.0 * spec.m * v_max)
    wavelength = 2.0 * math.pi * spec.hbar / p_max
    dx = wavelength / points_per_wavelength
    n = int(math.ceil((right - left) / dx)) + 1
    return Grid(left, right, max(n, 4 * n_states + 4))
