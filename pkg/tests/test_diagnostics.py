import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qimpact.diagnostics import (Spectrum, autocorrelation_delay, count_peaks, embed, find_peaks,
                                 finite_time_lyapunov, largest_lyapunov, linear_fit, mean_period,
                                 power_law_fit, power_spectrum, spectral_distribution,
                                 zero_one_c_values, zero_one_test, _msd)
from qimpact.errors import NonPositiveData, TooFewPeaks, TooShort
from qimpact.observables import TimeSeries


def logistic(n, x0=0.3):
    x = np.empty(n)
    x[0] = x0
    for i in range(1, n):
        x[i] = 4 * x[i - 1] * (1 - x[i - 1])
    return x


def henon_x(n):
    x, y = 0.1, 0.1
    out = np.empty(n + 1000)
    for i in range(n + 1000):
        x, y = 1 - 1.4 * x * x + y, 0.3 * x
        out[i] = x
    return out[1000:]


def test_power_spectrum_recovers_sine_amplitude():
    dt = 0.05
    t = np.arange(4096) * dt
    f0 = 40 / (4096 * dt)
    sp = power_spectrum(TimeSeries(2.5 * np.sin(2 * np.pi * f0 * t) + 7.0, dt))
    i = np.argmax(sp.amps)
    assert sp.freqs[i] == pytest.approx(f0)
    assert sp.amps[i] == pytest.approx(2.5, rel=1e-3)
    with pytest.raises(TooShort):
        power_spectrum(TimeSeries(np.ones(10), 1.0))


def test_find_and_count_peaks():
    amps = np.array([0, 1, 0, 5, 0, 0.2, 0, 0.04, 0])
    np.testing.assert_array_equal(find_peaks(amps), [1, 3, 5, 7])
    sp = Spectrum(np.arange(9.0), amps)
    assert count_peaks(sp, 0.1) == 2
    assert count_peaks(sp, 0.01) == 3
    assert count_peaks(sp, 0.005) == 4
    assert count_peaks(sp, 0.01, floor=10.0) == 0


def test_spectral_distribution_pareto_exponent():
    rng = np.random.default_rng(0)
    a = np.zeros(6001)
    a[1::2] = rng.pareto(2.0, 3000) + 1
    sd = spectral_distribution(Spectrum(np.arange(6001.0), a))
    assert sd.exponent == pytest.approx(-2.0, abs=0.1)
    assert sd.n_peaks == 3000
    assert np.all(np.diff(sd.counts) <= 0)
    with pytest.raises(TooFewPeaks):
        spectral_distribution(Spectrum(np.arange(7.0), np.array([0, 1, 0, 1, 0, 1, 0.0])))


def test_power_law_fit_exact():
    x = np.geomspace(1, 100, 20)
    slope, err = power_law_fit(x, 3 * x**-1.7)
    assert slope == pytest.approx(-1.7) and err < 1e-12
    with pytest.raises(NonPositiveData):
        power_law_fit(x, -x)
    s, e, r = linear_fit(np.arange(5.0), 2 * np.arange(5.0) + 1)
    assert (s, r) == pytest.approx((2.0, 0.0))


def test_msd_matches_direct_sum(rng):
    z = rng.normal(size=300) + 1j * rng.normal(size=300)
    direct = [np.mean(np.abs(z[n:] - z[:-n]) ** 2) for n in range(1, 31)]
    np.testing.assert_allclose(_msd(z, 30), direct, rtol=1e-10)


def test_c_values_ranges():
    for mode in ("standard", "modified"):
        c = zero_one_c_values(mode, 100, 3)
        assert np.all((c > math.pi / 5) & (c < 4 * math.pi / 5))
    np.testing.assert_array_equal(zero_one_c_values("modified", 10, 1), zero_one_c_values("modified", 10, 2))
    with pytest.raises(ValueError):
        zero_one_c_values("other", 10, 0)


@pytest.mark.parametrize("mode", ["standard", "modified"])
def test_zero_one_regular_vs_chaotic(mode):
    t = np.arange(20000) * 0.1
    assert zero_one_test(TimeSeries(logistic(20000), 1.0), mode).K_median > 0.95
    assert abs(zero_one_test(TimeSeries(np.sin(t), 0.1), mode).K_median) < 0.05
    qp = np.sin(t) + np.sin(math.sqrt(2) * t)
    assert abs(zero_one_test(TimeSeries(qp, 0.1), mode).K_median) < 0.05


def test_zero_one_deterministic_and_needs_length():
    s = TimeSeries(logistic(3000), 1.0)
    a = zero_one_test(s, "modified", seed=5)
    b = zero_one_test(s, "modified", seed=5)
    np.testing.assert_array_equal(a.K_values, b.K_values)
    with pytest.raises(TooShort):
        zero_one_test(TimeSeries(np.ones(100), 1.0))


def test_largest_lyapunov_logistic_and_henon():
    assert largest_lyapunov(TimeSeries(logistic(20000), 1.0), 2, 1, 4, 1) == pytest.approx(math.log(2), abs=0.02)
    assert largest_lyapunov(TimeSeries(henon_x(20000), 1.0), 2, 1, 5, 1) == pytest.approx(0.419, abs=0.03)


def test_ftle_chaotic_series_mostly_positive():
    d = finite_time_lyapunov(TimeSeries(logistic(20000), 1.0), 2, 1, window=1, theiler=1)
    assert d.positive_fraction > 0.8
    assert np.median(d.exponents) > 0.3


def test_delay_and_period_of_sine():
    t = np.arange(10000)
    v = np.sin(2 * np.pi * t / 40)
    assert autocorrelation_delay(v) in (10, 11)
    assert mean_period(v) == pytest.approx(40, rel=0.01)
    assert embed(np.arange(10.0), 3, 2).shape == (6, 3)


@settings(max_examples=15, deadline=None)
@given(scale=st.floats(0.1, 100.0), shift=st.floats(-50, 50))
def test_zero_one_scale_and_shift(scale, shift):
    x = logistic(2500)
    a = zero_one_test(TimeSeries(x, 1.0), seed=1).K_median
    assert zero_one_test(TimeSeries(scale * x, 1.0), seed=1).K_median == pytest.approx(a, abs=1e-9)
    # the mean term is removed only asymptotically
    b = zero_one_test(TimeSeries(scale * x + shift, 1.0), seed=1).K_median
    assert b == pytest.approx(a, abs=0.02)
