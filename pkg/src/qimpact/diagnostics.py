"""Time-series diagnostics used to separate regular, strange nonchaotic and
chaotic dynamics."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateEmbedding, NonPositiveData, TooFewPeaks, TooShort
from .observables import TimeSeries

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


@dataclass(frozen=True, eq=False)
class Spectrum:
    freqs: np.ndarray
    amps: np.ndarray


@dataclass(frozen=True, eq=False)
class ZeroOneResult:
    K_values: np.ndarray
    K_median: float
    mode: str
    c_values: np.ndarray


@dataclass(frozen=True, eq=False)
class FtleDistribution:
    window_length: int
    exponents: np.ndarray
    positive_fraction: float


@dataclass(frozen=True, eq=False)
class SpectralDistribution:
    sigma: np.ndarray
    counts: np.ndarray
    exponent: float
    stderr: float
    n_peaks: int


def power_spectrum(series: TimeSeries, window: str = "hann") -> Spectrum:
    """|DFT| of the mean-removed, tapered series (one-sided)."""
    v = series.values
    if len(v) < 64:
        raise TooShort(f"power spectrum needs >= 64 samples, got {len(v)}")
    if window == "hann":
        w = np.hanning(len(v))
    elif window in ("none", "boxcar", None):
        w = np.ones(len(v))
    else:
        raise ValueError(f"unknown taper {window!r}")
    amps = np.abs(np.fft.rfft((v - v.mean()) * w)) * 2.0 / w.sum()
    freqs = np.fft.rfftfreq(len(v), series.dt_sample)
    return Spectrum(freqs, amps)


def find_peaks(amps: np.ndarray) -> np.ndarray:
    """Indices of strict interior local maxima."""
    a = np.asarray(amps)
    return np.flatnonzero((a[1:-1] > a[:-2]) & (a[1:-1] > a[2:])) + 1


def spectral_distribution(spec: Spectrum, sigma_grid=None, lo_pct: float = 20.0,
                          hi_pct: float = 90.0, n_sigma: int = 40) -> SpectralDistribution:
    """Peak-count function N(sigma) and its power-law exponent.

    The fit uses thresholds between the ``lo_pct`` and ``hi_pct`` percentiles
    of the peak amplitudes.
    """
    peaks = spec.amps[find_peaks(spec.amps)]
    peaks = peaks[peaks > 0]
    if len(peaks) < 20:
        raise TooFewPeaks(f"only {len(peaks)} spectral peaks")
    if sigma_grid is None:
        lo, hi = np.percentile(peaks, [lo_pct, hi_pct])
        sigma_grid = np.geomspace(lo, hi, n_sigma)
    sigma = np.asarray(sigma_grid, dtype=float)
    srt = np.sort(peaks)
    counts = len(srt) - np.searchsorted(srt, sigma, side="right")
    ok = counts > 0
    slope, err = power_law_fit(sigma[ok], counts[ok])
    return SpectralDistribution(sigma, counts, slope, err, len(peaks))


def power_law_fit(xs, ys) -> tuple[float, float]:
    """Least-squares slope of ln y against ln x and its standard error."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if len(x) < 4 or len(x) != len(y):
        raise ValueError("power_law_fit needs at least 4 paired points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise NonPositiveData("power-law fit needs strictly positive data")
    return linear_fit(np.log(x), np.log(y))[:2]


def linear_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """(slope, slope standard error, residual RMS) of an OLS line."""
    n = len(x)
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = np.sum((x - xm) * (y - ym)) / sxx
    resid = y - ym - slope * (x - xm)
    dof = max(n - 2, 1)
    stderr = math.sqrt(np.sum(resid**2) / dof / sxx)
    return float(slope), stderr, float(math.sqrt(np.mean(resid**2)))


def _msd(z: np.ndarray, ncut: int) -> np.ndarray:
    """M(n) = mean_j |z_{j+n} - z_j|^2 for n = 1..ncut, via FFT autocorrelation."""
    N = len(z)
    a2 = np.abs(z) ** 2
    csum = np.concatenate([[0.0], np.cumsum(a2)])
    L = 1 << int(math.ceil(math.log2(2 * N)))
    fz = np.fft.fft(z, L)
    acf = np.fft.ifft(fz * np.conj(fz))[: ncut + 1]   # sum_j z_{j+n} conj(z_j)
    n = np.arange(1, ncut + 1)
    tail = csum[N] - csum[n]          # sum_{j>=n} |z_j|^2
    head = csum[N - n]                # sum_{j<N-n} |z_j|^2
    return (tail + head - 2.0 * acf[1:].real) / (N - n)


def zero_one_c_values(mode: str, n_c: int, seed: int) -> np.ndarray:
    if mode == "standard":
        rng = np.random.default_rng(seed)
        return rng.uniform(math.pi / 5, 4 * math.pi / 5, n_c)
    if mode == "modified":
        k = np.arange(1, n_c + 1)
        return math.pi / 5 + (3 * math.pi / 5) * np.mod(k * GOLDEN, 1.0)
    raise ValueError(f"unknown 0-1 test mode {mode!r}")


def zero_one_test(series: TimeSeries, mode: str = "standard", n_c: int = 100,
                  seed: int = 0, noise: float = 1e-2) -> ZeroOneResult:
    """Correlation-method 0-1 test for chaos.

    In ``modified`` mode the c values are fixed golden-ratio multiples and
    uniform noise of half-width ``0.5*noise*std(phi)`` is added to D_c.
    """
    phi = series.values
    N = len(phi)
    if N < 2000:
        raise TooShort(f"0-1 test needs >= 2000 samples, got {N}")
    ncut = N // 10
    cs = zero_one_c_values(mode, n_c, seed)
    n = np.arange(1, ncut + 1)
    j = np.arange(1, N + 1)
    mean2 = phi.mean() ** 2
    rng = np.random.default_rng([seed, 1])
    amp = 0.5 * noise * phi.std()
    K = np.empty(n_c)
    for i, c in enumerate(cs):
        z = np.cumsum(phi * np.exp(1j * j * c))
        D = _msd(z, ncut) - mean2 * (1.0 - np.cos(n * c)) / (1.0 - math.cos(c))
        if mode == "modified":
            D = D + amp * rng.uniform(-1.0, 1.0, ncut)
        K[i] = np.corrcoef(n, D)[0, 1]
    return ZeroOneResult(K, float(np.median(K)), mode, cs)


def autocorrelation_delay(values: np.ndarray, max_lag: int | None = None) -> int:
    """Embedding delay: first zero crossing of the autocorrelation, else its
    first local minimum (at least 1)."""
    v = values - values.mean()
    N = len(v)
    L = 1 << int(math.ceil(math.log2(2 * N)))
    f = np.fft.rfft(v, L)
    acf = np.fft.irfft(f * np.conj(f), L)[:N]
    acf /= acf[0]
    max_lag = max_lag or N // 4
    for k in range(1, max_lag):
        if acf[k] <= 0.0:
            return k
    for k in range(1, max_lag):
        if acf[k] < acf[k - 1] and acf[k] <= acf[k + 1]:
            return k
    return 1


def mean_period(values: np.ndarray) -> float:
    """Mean period in samples, from the power-weighted mean frequency."""
    v = values - values.mean()
    p = np.abs(np.fft.rfft(v)) ** 2
    f = np.fft.rfftfreq(len(v))
    fm = np.sum(f[1:] * p[1:]) / np.sum(p[1:])
    return 1.0 / fm if fm > 0 else float(len(v))


def embed(values: np.ndarray, embed_dim: int, delay: int) -> np.ndarray:
    n = len(values) - (embed_dim - 1) * delay
    return np.column_stack([values[i * delay: i * delay + n] for i in range(embed_dim)])


def nearest_neighbours(points: np.ndarray, usable: int, theiler: int) -> tuple[np.ndarray, np.ndarray]:
    """Nearest neighbour of each of the first ``usable`` points among the
    first ``usable`` points, excluding |i - j| <= theiler."""
    tree = cKDTree(points[:usable])
    k = min(usable, 2 * theiler + 16)
    dist, idx = tree.query(points[:usable], k=k)
    dist = np.atleast_2d(dist)
    idx = np.atleast_2d(idx)
    ref = np.arange(usable)[:, None]
    valid = np.abs(idx - ref) > theiler
    first = np.argmax(valid, axis=1)
    found = valid[np.arange(usable), first]
    nn = idx[np.arange(usable), first]
    d0 = dist[np.arange(usable), first]
    for i in np.flatnonzero(~found):
        dd = np.linalg.norm(points[:usable] - points[i], axis=1)
        dd[max(0, i - theiler): i + theiler + 1] = np.inf
        nn[i] = int(np.argmin(dd))
        d0[i] = dd[nn[i]]
    return nn, d0


def finite_time_lyapunov(series: TimeSeries, embed_dim: int = 5, delay: int | None = None,
                         window: int | None = None, theiler: int | None = None) -> FtleDistribution:
    """Distribution of finite-time exponents from nearest-neighbour divergence
    in a delay embedding: ln(d(window)/d(0)) / (window * dt) per reference point."""
    v = series.values
    if delay is None:
        delay = autocorrelation_delay(v)
    if window is None:
        window = max(1, int(round(mean_period(v))))
    if len(v) < embed_dim * delay + 10 * window:
        raise TooShort("series too short for the requested embedding and window")
    if theiler is None:
        theiler = int(math.ceil(mean_period(v)))
    pts = embed(v, embed_dim, delay)
    usable = len(pts) - window
    nn, d0 = nearest_neighbours(pts, usable, theiler)
    zero = d0 == 0
    if zero.mean() > 0.5:
        raise DegenerateEmbedding("more than half of the neighbour distances vanish")
    keep = ~zero
    i = np.flatnonzero(keep)
    dW = np.linalg.norm(pts[i + window] - pts[nn[keep] + window], axis=1)
    ok = dW > 0
    lam = np.log(dW[ok] / d0[keep][ok]) / (window * series.dt_sample)
    return FtleDistribution(window, lam, float(np.mean(lam > 0)))


def divergence_curve(series: TimeSeries, embed_dim: int = 5, delay: int | None = None,
                     horizon: int = 100, theiler: int | None = None) -> np.ndarray:
    """Mean log nearest-neighbour separation <ln d_i(k)> for k = 0..horizon."""
    v = series.values
    if delay is None:
        delay = autocorrelation_delay(v)
    if theiler is None:
        theiler = int(math.ceil(mean_period(v)))
    pts = embed(v, embed_dim, delay)
    usable = len(pts) - horizon
    if usable < 10:
        raise TooShort("series too short for the divergence horizon")
    nn, d0 = nearest_neighbours(pts, usable, theiler)
    keep = d0 > 0
    i = np.flatnonzero(keep)
    j = nn[keep]
    curve = np.empty(horizon + 1)
    for k in range(horizon + 1):
        d = np.linalg.norm(pts[i + k] - pts[j + k], axis=1)
        curve[k] = np.mean(np.log(np.maximum(d, 1e-300)))
    return curve


def largest_lyapunov(series: TimeSeries, embed_dim: int = 5, delay: int | None = None,
                     horizon: int | None = None, theiler: int | None = None) -> float:
    """Whole-series largest exponent: OLS slope of the mean log divergence
    curve over ``horizon`` samples (default one mean period)."""
    v = series.values
    if horizon is None:
        horizon = max(2, int(round(mean_period(v))))
    curve = divergence_curve(series, embed_dim, delay, horizon, theiler)
    k = np.arange(horizon + 1) * series.dt_sample
    return linear_fit(k, curve)[0]


def count_peaks(spec: Spectrum, rel: float, floor: float = 0.0) -> int:
    """Peaks whose amplitude exceeds ``rel`` times the largest peak and ``floor``."""
    pk = spec.amps[find_peaks(spec.amps)]
    if pk.size == 0 or pk.max() <= floor:
        return 0
    return int(np.sum((pk >= rel * pk.max()) & (pk > floor)))
