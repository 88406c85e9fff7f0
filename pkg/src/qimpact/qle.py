"""Semiclassical quantum Langevin dynamics of the forced soft-impact oscillator.

The mean position and momentum (X, P) and the memory force z obey

    dX/dt = P/m,   dP/dt = -V'(X,t) + f(t) + z + Q,   dz/dt = -Gamma P/tau_c - z/tau_c,

with f an Ornstein-Uhlenbeck force and Q = -V'''(X) sigma_xx / 2 the lowest
quantum correction.  The second moments follow the linearised (Gaussian)
hierarchy with the curvature V''(X) held fixed over each step, which is
integrated exactly: Sigma' = M Sigma M^T with det M = 1, so the moment
determinant is conserved to rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .diagnostics import zero_one_test
from .errors import MomentBlowup, StepTooLarge, TooFewCrossings, WrongVariant
from .lattice import PotentialSpec, Variant, potential_value, soft_derivatives
from .observables import TimeSeries


@dataclass(frozen=True)
class NoiseModel:
    kT: float = 0.0
    Gamma: float = 0.0
    tau_c: float = 1.0
    n_components: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.kT < 0 or self.Gamma < 0:
            raise ValueError("kT and Gamma must be non-negative")
        if not self.tau_c > 0:
            raise ValueError("tau_c must be positive")
        if self.n_components < 1:
            raise ValueError("need at least one noise component")

    @property
    def variance(self) -> float:
        """Stationary variance of the summed force f."""
        return self.Gamma * self.kT / self.tau_c

    def ou_coefficients(self, dt: float) -> tuple[float, float]:
        """(decay, kick) with eta' = decay*eta + kick*N(0,1) per component."""
        if not dt < self.tau_c / 10:
            raise StepTooLarge(f"dt={dt} not below tau_c/10={self.tau_c / 10}")
        decay = math.exp(-dt / self.tau_c)
        var_i = self.variance / self.n_components
        return decay, math.sqrt(var_i * (1.0 - decay * decay))


@dataclass(frozen=True, eq=False)
class QleState:
    X: float
    P: float
    z: float
    sigma_xx: float
    sigma_xp: float
    sigma_pp: float
    etas: np.ndarray = field(default_factory=lambda: np.zeros(1))
    t: float = 0.0

    @classmethod
    def initial(cls, spec: PotentialSpec, noise: NoiseModel, X0: float = 0.0,
                P0: float = 0.0, t: float = 0.0) -> "QleState":
        """Minimum-uncertainty moments of the bare oscillator, quiet bath."""
        w0 = spec.omega0
        return cls(X0, P0, 0.0, spec.hbar / (2 * spec.m * w0), 0.0,
                   spec.hbar * spec.m * w0 / 2, np.zeros(noise.n_components), t)

    @property
    def determinant(self) -> float:
        return self.sigma_xx * self.sigma_pp - self.sigma_xp**2

    def as_array(self) -> np.ndarray:
        return np.array([self.X, self.P, self.z, self.sigma_xx, self.sigma_xp, self.sigma_pp])


def ou_update(etas: np.ndarray, noise: NoiseModel, dt: float, rng: np.random.Generator) -> np.ndarray:
    """Exact Ornstein-Uhlenbeck transition of every noise component."""
    decay, kick = noise.ou_coefficients(dt)
    etas = np.asarray(etas, dtype=float)
    return decay * etas + kick * rng.standard_normal(etas.shape)


def semiclassical_energy(state: QleState, spec: PotentialSpec) -> float:
    """P^2/2m + V(X) + sigma_pp/2m + V''(X) sigma_xx/2; conserved without bath and forcing."""
    d2, _ = soft_derivatives(spec, state.X)
    return float(state.P**2 / (2 * spec.m) + potential_value(spec.static(), state.X)
                 + state.sigma_pp / (2 * spec.m) + 0.5 * d2 * state.sigma_xx)


def quantum_correction(X, sigma_xx, spec: PotentialSpec):
    """Q = -V'''(X) sigma_xx / 2."""
    if spec.variant is not Variant.SOFT:
        raise WrongVariant("the quantum correction is defined for the soft wall")
    return -0.5 * soft_derivatives(spec, X)[1] * sigma_xx


# --- compiled kernels --------------------------------------------------------
# params: k, m, kA, c, x_w, A_f, omega_f, phase, Gamma, tau_c, sigma_max

@numba.njit(cache=True)
def _softplus(u):
    if u > 0:
        return u + math.log1p(math.exp(-u))
    return math.log1p(math.exp(u))


@numba.njit(cache=True)
def _logistic(u):
    return 0.5 * (1.0 + math.tanh(0.5 * u))


@numba.njit(cache=True)
def _force(X, t, f, z, sxx, prm):
    k, m, kA, c, x_w, A_f, w_f, ph = prm[0], prm[1], prm[2], prm[3], prm[4], prm[5], prm[6], prm[7]
    u = c * (X - x_w)
    s = _logistic(u)
    dV = k * X + (kA / c) * _softplus(u) + A_f * math.cos(w_f * t + ph)
    Q = -0.5 * kA * c * s * (1.0 - s) * sxx
    return -dV + f + z + Q


@numba.njit(cache=True)
def _step(y, t, f0, f1, dt, prm):
    """One stochastic Heun step of y = (X, P, z, sxx, sxp, spp) in place."""
    m, kA, c, x_w, G, tc = prm[1], prm[2], prm[3], prm[4], prm[8], prm[9]
    X, P, z, sxx, sxp, spp = y[0], y[1], y[2], y[3], y[4], y[5]
    aX = P / m
    aP = _force(X, t, f0, z, sxx, prm)
    az = -(G * P + z) / tc
    Xs = X + dt * aX
    Ps = P + dt * aP
    zs = z + dt * az
    # moments: exact linear flow with V'' frozen at the predictor midpoint
    v2 = prm[0] + kA * _logistic(c * (0.5 * (X + Xs) - x_w))
    w2 = v2 / m
    if w2 > 0:
        w = math.sqrt(w2)
        cs, sn = math.cos(w * dt), math.sin(w * dt)
        a, b, cc, d = cs, sn / (m * w), -m * w * sn, cs
    elif w2 < 0:
        w = math.sqrt(-w2)
        ch, sh = math.cosh(w * dt), math.sinh(w * dt)
        a, b, cc, d = ch, sh / (m * w), m * w * sh, ch
    else:
        a, b, cc, d = 1.0, dt / m, 0.0, 1.0
    nxx = a * a * sxx + 2 * a * b * sxp + b * b * spp
    nxp = a * cc * sxx + (a * d + b * cc) * sxp + b * d * spp
    npp = cc * cc * sxx + 2 * cc * d * sxp + d * d * spp
    bX = Ps / m
    bP = _force(Xs, t + dt, f1, zs, nxx, prm)
    bz = -(G * Ps + zs) / tc
    y[0] = X + 0.5 * dt * (aX + bX)
    y[1] = P + 0.5 * dt * (aP + bP)
    y[2] = z + 0.5 * dt * (az + bz)
    y[3], y[4], y[5] = nxx, nxp, npp


@numba.njit(cache=True)
def _integrate(y, eta, t0, offset, dt, n_steps, normals, decay, kick, prm, stride, out):
    """Advance y and the OU components n_steps; every ``stride`` steps the state
    is written to ``out`` (row 0 is the initial state).  Returns -1 on success
    or the step index at which sigma_xx exceeded prm[10]."""
    nc = eta.shape[0]
    for j in range(6):
        out[0, j] = y[j]
    f0 = 0.0
    for i in range(nc):
        f0 += eta[i]
    row = 1
    for s in range(n_steps):
        f1 = 0.0
        for i in range(nc):
            eta[i] = decay * eta[i] + kick * normals[s, i]
            f1 += eta[i]
        _step(y, t0 + (offset + s) * dt, f0, f1, dt, prm)
        f0 = f1
        if not y[3] < prm[10]:
            return s
        if (s + 1) % stride == 0:
            for j in range(6):
                out[row, j] = y[j]
            row += 1
    return -1


@numba.njit(cache=True)
def _shadow(y, ys, eta, t0, offset, dt, n_steps, normals, decay, kick, prm, renorm, delta0, skip):
    """Benettin pair sharing one noise path; returns (sum of logs, count, status)."""
    nc = eta.shape[0]
    f0 = 0.0
    for i in range(nc):
        f0 += eta[i]
    acc = 0.0
    cnt = 0
    for s in range(n_steps):
        f1 = 0.0
        for i in range(nc):
            eta[i] = decay * eta[i] + kick * normals[s, i]
            f1 += eta[i]
        t = t0 + (offset + s) * dt
        _step(y, t, f0, f1, dt, prm)
        _step(ys, t, f0, f1, dt, prm)
        f0 = f1
        if not (y[3] < prm[10] and ys[3] < prm[10]):
            return acc, cnt, s
        if (s + 1) % renorm == 0:
            d = math.sqrt((ys[0] - y[0]) ** 2 + (ys[1] - y[1]) ** 2 + (ys[2] - y[2]) ** 2)
            if s >= skip:
                acc += math.log(d / delta0)
                cnt += 1
            r = delta0 / d
            for j in range(6):
                ys[j] = y[j] + (ys[j] - y[j]) * r
    return acc, cnt, -1


# --- python interface --------------------------------------------------------

def _params(spec: PotentialSpec, noise: NoiseModel, sigma_max: float) -> np.ndarray:
    if spec.variant is not Variant.SOFT:
        raise WrongVariant("QLE dynamics use the soft-wall potential")
    return np.array([spec.k, spec.m, spec.k * spec.A, spec.c, spec.x_w, spec.A_f,
                     spec.omega_f, spec.phase, noise.Gamma, noise.tau_c, sigma_max])


def _check_dt(spec: PotentialSpec, noise: NoiseModel, dt: float) -> None:
    lim = noise.tau_c
    if spec.A_f != 0 and spec.omega_f > 0:
        lim = min(lim, 2 * math.pi / spec.omega_f)
    if not 0 < dt <= lim / 100:
        raise StepTooLarge(f"dt={dt} exceeds min(tau_c, T_f)/100={lim / 100}")


def default_sigma_max(spec: PotentialSpec) -> float:
    """Moment blow-up threshold: the square of a generous domain scale."""
    scale = 10.0 * (1.0 + abs(spec.x_w) + spec.A_f / spec.k)
    return scale * scale


def qle_step(state: QleState, spec: PotentialSpec, noise: NoiseModel, dt: float,
             rng: np.random.Generator, sigma_max: float | None = None) -> QleState:
    """One stochastic Heun step."""
    traj = simulate(state, spec, noise, dt, 1, rng, stride=1, sigma_max=sigma_max)
    return traj.final


@dataclass(frozen=True, eq=False)
class QleTrajectory:
    t: np.ndarray
    y: np.ndarray       # columns X, P, z, sigma_xx, sigma_xp, sigma_pp
    final: QleState

    @property
    def X(self) -> np.ndarray:
        return self.y[:, 0]

    @property
    def P(self) -> np.ndarray:
        return self.y[:, 1]


def simulate(state: QleState, spec: PotentialSpec, noise: NoiseModel, dt: float,
             n_steps: int, rng: np.random.Generator, stride: int = 1,
             sigma_max: float | None = None, chunk: int = 1 << 18) -> QleTrajectory:
    """Integrate ``n_steps`` steps, recording every ``stride``-th state."""
    _check_dt(spec, noise, dt)
    decay, kick = noise.ou_coefficients(dt)
    prm = _params(spec, noise, sigma_max or default_sigma_max(spec))
    y = state.as_array()
    eta = np.array(state.etas, dtype=float).copy()
    if eta.shape != (noise.n_components,):
        raise ValueError("state carries the wrong number of noise components")
    n_rec = n_steps // stride
    out = np.empty((n_rec + 1, 6))
    out[0] = y
    row, done = 0, 0
    t0 = state.t
    while done < n_steps:
        # chunks are whole multiples of the stride so recording stays aligned
        n = min(n_steps - done, max(stride, chunk // stride * stride))
        normals = rng.standard_normal((n, noise.n_components))
        buf = np.empty((n // stride + 1, 6))
        status = _integrate(y, eta, t0, done, dt, n, normals, decay, kick, prm, stride, buf)
        if status >= 0:
            raise MomentBlowup(f"sigma_xx exceeded {prm[10]:.3g} at t={t0 + (done + status) * dt:.6g}")
        k = n // stride
        out[row + 1: row + 1 + k] = buf[1: 1 + k]
        row += k
        done += n
    t = t0 + dt * stride * np.arange(n_rec + 1)
    final = QleState(*y, etas=eta, t=t0 + n_steps * dt)
    return QleTrajectory(t, out, final)


def realization_rng(seed: int, *index: int) -> np.random.Generator:
    """Independent stream for one realization, fixed by (seed, index...)."""
    return np.random.default_rng([seed, *index])


def lyapunov_one(spec: PotentialSpec, noise: NoiseModel, T: float, dt: float,
                 rng: np.random.Generator, delta0: float = 1e-8, renorm_time: float = 1.0,
                 transient: float = 0.2, state: QleState | None = None,
                 sigma_max: float | None = None, chunk: int = 1 << 18) -> float:
    """Largest exponent of one noise realization from a shadow pair."""
    _check_dt(spec, noise, dt)
    decay, kick = noise.ou_coefficients(dt)
    prm = _params(spec, noise, sigma_max or default_sigma_max(spec))
    st = state or QleState.initial(spec, noise)
    y = st.as_array()
    ys = y.copy()
    ys[0] += delta0
    eta = np.array(st.etas, dtype=float).copy()
    renorm = max(1, int(round(renorm_time / dt)))
    n_steps = int(round(T / dt)) // renorm * renorm
    skip = int(transient * n_steps)
    acc, cnt, done = 0.0, 0, 0
    step_chunk = max(renorm, chunk // renorm * renorm)
    while done < n_steps:
        n = min(step_chunk, n_steps - done)
        normals = rng.standard_normal((n, noise.n_components))
        a, c, status = _shadow(y, ys, eta, st.t, done, dt, n, normals, decay, kick,
                               prm, renorm, delta0, skip - done)
        if status >= 0:
            raise MomentBlowup(f"sigma_xx blew up at t={st.t + (done + status) * dt:.6g}")
        acc += a
        cnt += c
        done += n
    return acc / (cnt * renorm * dt)


def lyapunov_shadow(spec: PotentialSpec, noise: NoiseModel, x_w: float | None = None,
                    n_realizations: int = 100, T: float = 500.0, dt: float = 1e-3,
                    seed: int = 0, index: int = 0, **kw) -> tuple[float, float, np.ndarray]:
    """(mean, std, per-realization values) of the largest exponent.

    Realization r draws its noise from the stream (seed, index, r)."""
    if n_realizations < 2:
        raise ValueError("need at least two realizations")
    if x_w is not None:
        spec = _with_wall(spec, x_w)
    lam = np.array([lyapunov_one(spec, noise, T, dt, realization_rng(seed, index, r), **kw)
                    for r in range(n_realizations)])
    return float(lam.mean()), float(lam.std(ddof=1)), lam


def poincare_section(t, X, P, transient: float = 0.2, direction: str = "down",
                     min_crossings: int = 50) -> np.ndarray:
    """X at sign changes of P, linearly interpolated, after a transient fraction.

    ``direction='down'`` keeps P: + -> - (maxima of X); ``'up'`` the reverse."""
    X = np.asarray(X, dtype=float)
    P = np.asarray(P, dtype=float)
    start = int(transient * len(P))
    p0, p1 = P[start:-1], P[start + 1:]
    if direction == "down":
        idx = np.flatnonzero((p0 > 0) & (p1 <= 0))
    elif direction == "up":
        idx = np.flatnonzero((p0 < 0) & (p1 >= 0))
    else:
        raise ValueError("direction must be 'down' or 'up'")
    if len(idx) < min_crossings:
        raise TooFewCrossings(f"{len(idx)} section crossings, need {min_crossings}")
    i = idx + start
    frac = P[i] / (P[i] - P[i + 1])
    return X[i] + frac * (X[i + 1] - X[i])


def strobe(traj: QleTrajectory, period: float, transient: float = 0.2, m: float = 1.0) -> np.ndarray:
    """X once per forcing period, by cubic Hermite interpolation (dX/dt = P/m)."""
    t = traj.t
    span = t[-1] - t[0]
    k0 = int(math.ceil(transient * span / period))
    ts = t[0] + period * np.arange(k0, int(span / period) + 1)
    ts = ts[ts <= t[-1]]
    h = t[1] - t[0]
    i = np.minimum(((ts - t[0]) / h).astype(int), len(t) - 2)
    u = (ts - t[i]) / h
    x0, x1 = traj.X[i], traj.X[i + 1]
    d0, d1 = traj.P[i] * h / m, traj.P[i + 1] * h / m
    return ((2 * u**3 - 3 * u**2 + 1) * x0 + (u**3 - 2 * u**2 + u) * d0
            + (-2 * u**3 + 3 * u**2) * x1 + (u**3 - u**2) * d1)


def _with_wall(spec: PotentialSpec, x_w: float) -> PotentialSpec:
    from dataclasses import replace
    return replace(spec, x_w=float(x_w))


@dataclass(frozen=True, eq=False)
class BifurcationPoint:
    x_w: float
    section: np.ndarray
    mean_lambda: float
    std_lambda: float
    K_median: float


def bifurcation_point(spec: PotentialSpec, noise: NoiseModel, x_w: float, index: int,
                      T_long: float, T_lyap: float, n_realizations: int, dt: float = 1e-3,
                      seed: int = 0, record_dt: float = 0.02, **kw) -> BifurcationPoint:
    """Section, 0-1 result and exponent statistics at one wall position.

    The long trajectory uses stream (seed, index, 2**31 - 1); the 0-1 test runs on
    stroboscopic X samples."""
    s = _with_wall(spec, x_w)
    stride = max(1, int(round(record_dt / dt)))
    n_steps = int(round(T_long / dt)) // stride * stride
    traj = simulate(QleState.initial(s, noise), s, noise, dt, n_steps,
                    realization_rng(seed, index, 2**31 - 1), stride)
    try:
        sec = poincare_section(traj.t, traj.X, traj.P)
    except TooFewCrossings:
        sec = np.empty(0)
    period = 2 * math.pi / s.omega_f
    phi = strobe(traj, period, m=s.m)
    K = zero_one_test(TimeSeries(phi, period), seed=seed).K_median if len(phi) >= 2000 else float("nan")
    mean, std, _ = lyapunov_shadow(s, noise, None, n_realizations, T_lyap, dt, seed, index, **kw)
    return BifurcationPoint(float(x_w), sec, mean, std, K)


def bifurcation_scan(x_w_values, spec: PotentialSpec, noise: NoiseModel, T_long: float = 20000.0,
                     T_lyap: float = 500.0, n_realizations: int = 100, dt: float = 1e-3,
                     seed: int = 0, **kw) -> list[BifurcationPoint]:
    xs = np.asarray(x_w_values, dtype=float)
    if xs.size == 0:
        raise ValueError("empty x_w range")
    return [bifurcation_point(spec, noise, x, i, T_long, T_lyap, n_realizations, dt, seed, **kw)
            for i, x in enumerate(xs)]


def scan_values(start: float, stop: float, step: float) -> np.ndarray:
    """Inclusive grid start, start+step, ... <= stop (rounded to the step's decimals)."""
    if not step > 0:
        raise ValueError("step must be positive")
    if stop < start:
        raise ValueError("empty x_w range")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return np.round(start + step * np.arange(n), 12)
