import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from quantkin.grids import (
    BoundaryLeakWarning,
    GridError,
    SpatialGrid,
    check_boundary,
    make_grids,
    spectral_derivative,
    time_derivative,
    to_momentum,
    to_position,
)


def test_small_grid_spacings():
    xg, pg = make_grids(8, -4.0, 4.0)
    assert xg.dx == 1.0
    assert pg.dp == pytest.approx(2 * np.pi / 8, abs=1e-15)
    np.testing.assert_allclose(pg.p, np.pi / 4 * np.arange(-4, 4), atol=1e-15)
    assert pg.p[0] == pytest.approx(-np.pi)
    assert pg.p[-1] == pytest.approx(3 * np.pi / 4)


def test_standard_grid_spacings():
    xg, pg = make_grids(256, -16.0, 16.0)
    assert xg.dx == 0.125
    assert pg.dp == pytest.approx(0.19635, abs=1e-5)
    assert pg.dp * xg.dx * xg.n == pytest.approx(2 * np.pi)


def test_reversed_domain_rejected():
    with pytest.raises(GridError, match="invalid-domain"):
        make_grids(8, 4.0, -4.0)


@pytest.mark.parametrize("n", [100, 4, 0, 6])
def test_non_power_of_two_rejected(n):
    with pytest.raises(GridError, match="invalid-n"):
        SpatialGrid(n, -1.0, 1.0)


def test_nonpositive_hbar_rejected():
    with pytest.raises(GridError):
        make_grids(8, -1.0, 1.0, hbar=0.0)


def _gaussian(x):
    return (2 * np.pi) ** -0.25 * np.exp(-(x**2) / 4)


def test_gaussian_transform_matches_closed_form():
    xg, pg = make_grids(256, -16.0, 16.0)
    phi = to_momentum(_gaussian(xg.x), xg, pg)

    # the closed form itself, checked by adaptive quadrature at a few momenta
    def oracle(p):
        re = quad(lambda x: _gaussian(x) * np.cos(p * x), -40, 40, epsabs=1e-14)[0]
        return re / np.sqrt(2 * np.pi)

    for p in (0.0, 0.7, -1.9):
        assert oracle(p) == pytest.approx((2 / np.pi) ** 0.25 * np.exp(-(p**2)), abs=1e-12)
    exact = (2 / np.pi) ** 0.25 * np.exp(-(pg.p**2))
    assert np.max(np.abs(phi - exact)) <= 1e-10


def test_shift_multiplies_by_phase():
    xg, pg = make_grids(256, -16.0, 16.0)
    x0 = 1.5
    phi = to_momentum(_gaussian(xg.x), xg, pg)
    shifted = to_momentum(_gaussian(xg.x - x0), xg, pg)
    np.testing.assert_allclose(np.abs(shifted), np.abs(phi), atol=1e-12)
    np.testing.assert_allclose(shifted, phi * np.exp(-1j * pg.p * x0), atol=1e-12)


def test_transform_preserves_norm_and_inverts():
    xg, pg = make_grids(256, -16.0, 16.0)
    psi = _gaussian(xg.x - 2) * np.exp(0.8j * xg.x)
    phi = to_momentum(psi, xg, pg)
    assert np.sum(np.abs(phi) ** 2) * pg.dp == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(to_position(phi, xg, pg), psi, atol=1e-14)


def test_non_finite_input_rejected():
    xg, pg = make_grids(8, -4.0, 4.0)
    with pytest.raises(ValueError):
        to_momentum(np.full(8, np.nan), xg, pg)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.complex_numbers(max_magnitude=1.0, allow_nan=False, allow_infinity=False), min_size=9, max_size=9),
    st.sampled_from([0.5, 1.0, 2.0]),
)
def test_parseval_for_band_limited_fields(coeffs, hbar):
    xg, pg = make_grids(64, -5.0, 7.0, hbar)
    modes = np.arange(-4, 5)
    psi = sum(c * np.exp(2j * np.pi * k * (xg.x - xg.x_min) / xg.length) for c, k in zip(coeffs, modes))
    phi = to_momentum(psi, xg, pg)
    lhs = np.sum(np.abs(psi) ** 2) * xg.dx
    rhs = np.sum(np.abs(phi) ** 2) * pg.dp
    assert rhs == pytest.approx(lhs, rel=1e-12, abs=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False),
       st.integers(min_value=0, max_value=2**32 - 1))
def test_transform_is_linear(a, seed):
    rng = np.random.default_rng(seed)
    xg, pg = make_grids(32, -3.0, 3.0)
    u = rng.normal(size=32) + 1j * rng.normal(size=32)
    v = rng.normal(size=32) + 1j * rng.normal(size=32)
    lhs = to_momentum(a * u + v, xg, pg)
    rhs = a * to_momentum(u, xg, pg) + to_momentum(v, xg, pg)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * (1 + abs(a)))


def test_derivative_of_grid_mode():
    xg, _ = make_grids(64, 0.0, 2 * np.pi)
    k = 5
    wave = np.exp(1j * k * xg.x)
    np.testing.assert_allclose(spectral_derivative(wave, xg.dx, 1), 1j * k * wave, atol=1e-12)
    np.testing.assert_allclose(spectral_derivative(wave, xg.dx, 4), k**4 * wave, atol=1e-9)


def test_second_derivative_against_finite_differences():
    xg, _ = make_grids(256, -16.0, 16.0)
    g = np.exp(-(xg.x**2) / 2)
    spec = spectral_derivative(g, xg.dx, 2)
    fd = (np.roll(g, -1) - 2 * g + np.roll(g, 1)) / xg.dx**2
    centre = xg.n // 2
    assert spec[centre] == pytest.approx(-1.0, abs=1e-12)
    # central differences carry an O(dx^2) error: g''''(0) dx^2 / 12 = 3 dx^2 / 12
    assert abs(fd[centre] - spec[centre]) == pytest.approx(3 * xg.dx**2 / 12, rel=0.02)


@pytest.mark.parametrize("order", [0, 5, 1.5])
def test_derivative_order_out_of_range(order):
    with pytest.raises(GridError, match="order-out-of-range"):
        spectral_derivative(np.zeros(8), 1.0, order)


def test_real_input_gives_real_output():
    x = np.linspace(0, 1, 16, endpoint=False)
    assert np.isrealobj(spectral_derivative(np.sin(2 * np.pi * x), 1 / 16, 3))


def test_time_derivative_exact_for_quadratics():
    t = np.arange(5) * 0.1
    frames = (3 * t**2 - t + 2)[:, None] * np.ones((1, 4))
    np.testing.assert_allclose(time_derivative(frames, 0.1)[:, 0], 6 * t - 1, atol=1e-12)


def test_time_derivative_needs_three_frames():
    with pytest.raises(ValueError, match="insufficient-snapshots"):
        time_derivative(np.zeros((2, 4)), 0.1)


def test_boundary_leak_warns():
    with pytest.warns(BoundaryLeakWarning):
        check_boundary(np.ones(8))
    assert check_boundary(np.r_[0.0, np.ones(6), 0.0]) == 0.0
