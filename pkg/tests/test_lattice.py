import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qimpact.errors import InvalidGrid, PacketClipped, ResonantForcing
from qimpact.lattice import (Grid, PotentialSpec, Variant, WaveState, build_grid, check_wall,
                             gaussian_packet, grazing_amplitude, potential_gradient,
                             potential_value, soft_derivatives, wall_grid)


def test_grid_spacing_and_endpoints():
    g = build_grid(-2.0, 3.0, 11)
    assert g.dx == pytest.approx(0.5)
    assert g.x[0] == -2.0 and g.x[-1] == pytest.approx(3.0)


@pytest.mark.parametrize("args", [(0.0, 1.0, 2), (1.0, 1.0, 10), (0.0, math.inf, 10)])
def test_grid_rejects_bad_input(args):
    with pytest.raises(InvalidGrid):
        build_grid(*args)


def test_wall_grid_ends_on_wall():
    spec = PotentialSpec("hard", x_w=5.0)
    g = wall_grid(spec, -10.0, 301)
    assert g.x_max == 5.0
    check_wall(spec, g)
    with pytest.raises(InvalidGrid):
        check_wall(spec, build_grid(-10.0, 10.0, 301))


def test_spec_roundtrip_and_static():
    spec = PotentialSpec("forced_hard", x_w=5.0, A_f=3.0905, omega_f=1.618)
    assert PotentialSpec.from_dict(spec.to_dict()) == spec
    assert spec.forced and not spec.static().forced
    assert spec.variant is Variant.FORCED_HARD
    with pytest.raises(ValueError):
        PotentialSpec.from_dict({"bogus": 1})


def test_soft_spec_validation():
    with pytest.raises(ValueError):
        PotentialSpec("soft", A=0.0, c=10.0, x_w=0.3)
    with pytest.raises(ValueError):
        PotentialSpec("soft", A=10.0, c=10.0)


def test_forcing_phase_convention():
    hard = PotentialSpec("forced_hard", A_f=2.0, omega_f=1.0)
    soft = PotentialSpec("soft", A=10.0, c=10.0, x_w=0.3, A_f=2.0, omega_f=1.0)
    assert hard.forcing(0.0) == pytest.approx(0.0)
    assert soft.forcing(0.0) == pytest.approx(2.0)
    assert PotentialSpec("hard", A_f=2.0, omega_f=1.0).forcing(1.0) == 0.0


def test_harmonic_potential_value():
    spec = PotentialSpec("hard", k=2.0)
    x = np.linspace(-3, 3, 7)
    np.testing.assert_allclose(potential_value(spec, x), x**2)


def test_soft_gradient_matches_finite_difference():
    spec = PotentialSpec("soft", A=10.0, c=10.0, x_w=0.3, A_f=1.5, omega_f=0.8)
    x = np.linspace(-1.0, 1.5, 41)
    h = 1e-6
    fd = (potential_value(spec, x + h, 0.7) - potential_value(spec, x - h, 0.7)) / (2 * h)
    np.testing.assert_allclose(potential_gradient(spec, x, 0.7), fd, rtol=1e-6, atol=1e-6)
    d2, d3 = soft_derivatives(spec, 0.3)
    g = lambda y: float(potential_gradient(spec.static(), y))
    assert d2 == pytest.approx((g(0.3 + h) - g(0.3 - h)) / (2 * h), rel=1e-6)
    d2p, _ = soft_derivatives(spec, 0.3 + h)
    d2m, _ = soft_derivatives(spec, 0.3 - h)
    assert d3 == pytest.approx((d2p - d2m) / (2 * h), rel=1e-5)


def test_soft_wall_large_argument_is_finite():
    spec = PotentialSpec("soft", A=10.0, c=1000.0, x_w=0.3)
    v = potential_value(spec, np.array([-50.0, 50.0]))
    assert np.all(np.isfinite(v))


def test_gaussian_packet_moments(wide_grid):
    psi = gaussian_packet(wide_grid, -1.0, 0.5, momentum=0.7)
    x = wide_grid.x
    rho = psi.density
    dx = wide_grid.dx
    assert psi.norm2() == pytest.approx(1.0, abs=1e-12)
    assert np.sum(x * rho) * dx == pytest.approx(-1.0, abs=1e-10)
    assert np.sum((x + 1.0) ** 2 * rho) * dx == pytest.approx(0.5, abs=1e-10)


def test_gaussian_packet_clipping(wide_grid):
    with pytest.raises(PacketClipped):
        gaussian_packet(wide_grid, 11.0, 1.0)
    with pytest.raises(PacketClipped):
        gaussian_packet(wide_grid, 20.0, 1.0)


def test_wavestate_shape_checked(wide_grid):
    with pytest.raises(ValueError):
        WaveState(wide_grid, np.zeros(3))


def test_grazing_amplitude_reproduces_preset():
    golden = (1 + math.sqrt(5)) / 2
    assert grazing_amplitude(5.0, 1.0, 1.0, golden) == pytest.approx(3.0902, abs=5e-4)
    with pytest.raises(ResonantForcing):
        grazing_amplitude(5.0, 1.0, 1.0, 1.0)


@settings(max_examples=25, deadline=None)
@given(mean=st.floats(-3, 3), var=st.floats(0.1, 2.0))
def test_packet_normalised_property(mean, var):
    g = Grid(-15.0, 15.0, 601)
    assert gaussian_packet(g, mean, var).norm2() == pytest.approx(1.0, abs=1e-12)
