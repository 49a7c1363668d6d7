from decimal import Decimal, localcontext

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from turbmimo.grid import (
    AbsorberWindow,
    ComplexField,
    Grid,
    apply_absorber,
    apply_phase_screen,
    fresnel_propagate,
    inject_transfer_sign_flip,
    make_absorber,
    make_grid,
    propagate_samples,
    transfer_function,
)
from turbmimo.turbulence import PhaseScreen
from turbmimo.validation import gaussian_beam, normalized_overlap, second_moment_radius

LAM = 1550e-9


def random_field(grid, seed):
    r = np.random.default_rng(seed)
    return r.standard_normal((grid.n_points,) * 2) + 1j * r.standard_normal((grid.n_points,) * 2)


def test_default_grid_geometry():
    g = make_grid(128, 2.5e-3)
    assert g.extent == pytest.approx(0.32)
    assert g.freq_spacing == pytest.approx(3.125)


def test_small_grid_nyquist():
    g = Grid(32, 1.0)
    assert g.extent == 32
    assert g.nyquist == pytest.approx(0.5)


@pytest.mark.parametrize("n,dx", [(100, 1e-3), (16, 1e-3), (64, 0.0), (64, -1.0)])
def test_invalid_grid(n, dx):
    with pytest.raises(ValueError):
        Grid(n, dx)


def test_coords_centered(grid128):
    x = grid128.coords
    assert x[64] == 0.0
    assert x[0] == pytest.approx(-0.16)
    assert np.allclose(np.diff(x), 2.5e-3)


def test_transfer_function_dc_is_piston(grid128):
    d = 1234.5
    h = transfer_function(grid128, d, LAM)
    # k0 d = 2 pi d / lambda is ~5e9 rad; reduce the cycle count in 50-digit decimal arithmetic
    with localcontext() as ctx:
        ctx.prec = 50
        cycles = Decimal(d) / Decimal(LAM)
        frac = float(cycles - int(cycles))
    assert abs(h[0, 0] - np.exp(2j * np.pi * frac)) < 1e-12
    assert np.allclose(np.abs(h), 1.0, atol=1e-15)


def test_zero_distance_is_identity(grid128):
    u = random_field(grid128, 1)
    out = propagate_samples(u, grid128, 0.0, LAM)
    assert np.abs(out - u).max() < 1e-12
    assert out is not u


def test_negative_distance_rejected(grid128):
    with pytest.raises(ValueError):
        propagate_samples(random_field(grid128, 1), grid128, -1.0, LAM)


@given(d=st.floats(0.0, 2e4), seed=st.integers(0, 2**31))
def test_power_conserved(grid128, d, seed):
    u = random_field(grid128, seed)
    p0 = np.sum(np.abs(u) ** 2)
    p1 = np.sum(np.abs(propagate_samples(u, grid128, d, LAM)) ** 2)
    assert abs(p1 / p0 - 1) < 1e-10


# distances on a 1/16 m lattice so that d1 + d2 is exact in floating point;
# otherwise the rounding of the sum alone shifts the piston by k0 * ulp(d) ~ 1e-7 rad
@given(k1=st.integers(0, 80000), k2=st.integers(0, 80000), seed=st.integers(0, 2**31))
def test_semigroup(grid128, k1, k2, seed):
    d1, d2 = k1 / 16, k2 / 16
    u = random_field(grid128, seed)
    a = propagate_samples(u, grid128, d1 + d2, LAM)
    b = propagate_samples(propagate_samples(u, grid128, d1, LAM), grid128, d2, LAM)
    assert np.abs(a - b).max() / np.abs(a).max() < 1e-10


def test_broad_gaussian_power_ratio():
    g = Grid(128, 5e-3)
    u = ComplexField(gaussian_beam(g, 0.1, 0.0, LAM), g)
    out = fresnel_propagate(u, 800.0, LAM)
    assert abs(out.power / u.power - 1) < 1e-10


def test_gaussian_waist_at_rayleigh_range():
    g = Grid(256, 1.5e-3)
    w0 = 0.03
    zr = np.pi * w0**2 / LAM
    assert zr == pytest.approx(1824, rel=1e-3)
    out = propagate_samples(gaussian_beam(g, w0, 0.0, LAM), g, zr, LAM)
    assert second_moment_radius(out, g) == pytest.approx(w0 * np.sqrt(2), rel=0.01)
    assert normalized_overlap(out, gaussian_beam(g, w0, zr, LAM)) > 1 - 1e-9


def test_sign_flip_fault_is_visible_in_field_not_waist():
    g = Grid(256, 1.5e-3)
    w0 = 0.03
    zr = np.pi * w0**2 / LAM
    with inject_transfer_sign_flip():
        out = propagate_samples(gaussian_beam(g, w0, 0.0, LAM), g, zr, LAM)
    assert second_moment_radius(out, g) == pytest.approx(w0 * np.sqrt(2), rel=0.01)
    assert normalized_overlap(out, gaussian_beam(g, w0, zr, LAM)) == pytest.approx(0.5, abs=1e-6)
    # the hook restores the correct kernel on exit
    good = propagate_samples(gaussian_beam(g, w0, 0.0, LAM), g, zr, LAM)
    assert normalized_overlap(good, gaussian_beam(g, w0, zr, LAM)) > 1 - 1e-9


def test_phase_screen_zero_and_constant(grid128):
    u = ComplexField(random_field(grid128, 3), grid128)
    zero = PhaseScreen(np.zeros((128, 128)), grid128, 0)
    assert np.array_equal(apply_phase_screen(u, zero).samples, u.samples)
    c = 0.7
    out = apply_phase_screen(u, PhaseScreen(np.full((128, 128), c), grid128, 0))
    assert np.abs(out.samples - np.exp(1j * c) * u.samples).max() < 1e-12
    assert abs(np.vdot(u.samples, out.samples)) / np.vdot(u.samples, u.samples).real == pytest.approx(1.0)


@given(seed=st.integers(0, 2**31))
def test_random_screen_preserves_power(grid128, seed):
    u = ComplexField(random_field(grid128, seed), grid128)
    phi = np.random.default_rng(seed + 1).standard_normal((128, 128)) * 5
    out = apply_phase_screen(u, PhaseScreen(phi, grid128, 0))
    assert abs(out.power - u.power) <= 1e-12 * u.power


def test_phase_screen_grid_mismatch(grid128):
    u = ComplexField(random_field(grid128, 3), grid128)
    with pytest.raises(ValueError):
        apply_phase_screen(u, PhaseScreen(np.zeros((64, 64)), Grid(64, 2.5e-3), 0))


def test_unit_window_absorbs_nothing(grid128):
    u = ComplexField(random_field(grid128, 4), grid128)
    out, absorbed = apply_absorber(u, AbsorberWindow(np.ones((128, 128)), grid128, 0.0))
    assert absorbed == 0.0
    assert np.array_equal(out.samples, u.samples)


def test_absorber_profile_shape(grid128):
    w = make_absorber(grid128, 0.1)
    assert w.profile[64, 64] == 1.0
    assert w.profile.min() >= 0.0 and w.profile.max() <= 1.0
    assert w.profile[0, 64] < 0.05


def test_field_inside_interior_untouched(grid128):
    u = ComplexField(gaussian_beam(grid128, 0.01, 0.0, LAM), grid128)
    _, absorbed = apply_absorber(u, make_absorber(grid128, 0.1))
    assert absorbed <= 1e-12 * u.power


def test_uniform_field_absorbed_power_matches_direct_sum(grid128):
    u = ComplexField(np.ones((128, 128), dtype=complex), grid128)
    w = make_absorber(grid128, 0.1)
    out, absorbed = apply_absorber(u, w)
    direct = 0.0
    for i in range(128):
        for j in range(128):
            direct += (1 - w.profile[i, j] ** 2) * grid128.spacing**2
    assert absorbed == pytest.approx(direct, rel=1e-12)
    assert out.power + absorbed == pytest.approx(u.power, rel=1e-12)
