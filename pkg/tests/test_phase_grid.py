import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from linbgk.phase_grid import (
    GridMismatchError,
    MaxwellianParams,
    PhaseGrid,
    VelocityGrid,
    build_collision_basis,
    build_spatial_grid,
    build_velocity_grid,
    eval_maxwellian,
    inner_weighted,
    inner_xv,
    inner_xv_weighted,
    norm_equivalence_factor,
    norm_xv,
)


def test_spatial_grid_cell_centres():
    g = build_spatial_grid(4, 1.0)
    assert np.allclose(g.nodes, [0.125, 0.375, 0.625, 0.875], atol=0, rtol=1e-15)
    assert g.spacing == 0.25


def test_spatial_grid_spacing_two_pi():
    assert build_spatial_grid(8, 2 * math.pi).spacing == pytest.approx(math.pi / 4, rel=1e-15)


@pytest.mark.parametrize("n_x,length", [(0, 1.0), (3, 1.0), (8, 0.0), (8, -1.0)])
def test_spatial_grid_rejects_bad_input(n_x, length):
    with pytest.raises(ValueError):
        build_spatial_grid(n_x, length)


def test_velocity_grid_trapezoid_weights():
    g = VelocityGrid(5, -1.0, 1.0)
    assert np.allclose(g.quad_weights, [0.25, 0.5, 0.5, 0.5, 0.25])
    assert g.center == 0.0


def test_velocity_grid_width_follows_temperature():
    g = build_velocity_grid(65, center=0.5, temp=4.0, n_sigma=8)
    assert (g.v_min, g.v_max) == pytest.approx((0.5 - 16, 0.5 + 16))


@pytest.mark.parametrize("rho,u,v,expected", [
    (1.0, 0.0, 0.0, 1 / math.sqrt(2 * math.pi)),
    (2.0, 0.0, 0.0, 2 / math.sqrt(2 * math.pi)),
    (1.0, 1.0, 1.0, 1 / math.sqrt(2 * math.pi)),
])
def test_maxwellian_values(rho, u, v, expected):
    assert eval_maxwellian(MaxwellianParams(rho, u, 1.0), v) == pytest.approx(expected, rel=1e-14)
    assert eval_maxwellian(MaxwellianParams(1.0, 0.0, 1.0), 0.0) == pytest.approx(0.398942, abs=1e-6)


def test_maxwellian_params_reject_nonpositive_temperature_in_range():
    with pytest.raises(ValueError):
        MaxwellianParams(temp=1.0, eps_T=2.0, z_range=(-1.0, 1.0))
    with pytest.raises(ValueError):
        MaxwellianParams(rho=0.0)


def test_sqrt_temperature_derivative_closed_form():
    p = MaxwellianParams(temp=1.0, eps_T=1.0, z_range=(-0.5, 0.5))
    assert p.sqrt_temp_derivative(1) == pytest.approx(0.5)
    assert p.sqrt_temp_derivative(2) == pytest.approx(-0.25)
    assert p.sqrt_temp_derivative(3) == pytest.approx(0.375)


def test_sqrt_temperature_derivative_matches_finite_difference():
    p = MaxwellianParams(temp=2.0, eps_T=0.3)
    h = 1e-3
    fd = (math.sqrt(p.temp_at(h)) - 2 * math.sqrt(p.temp_at(0)) + math.sqrt(p.temp_at(-h))) / h**2
    assert p.sqrt_temp_derivative(2) == pytest.approx(fd, rel=1e-5)


def test_weighted_moments_of_gaussian():
    p = MaxwellianParams()
    g = build_velocity_grid(129)
    v = g.nodes
    one = np.ones_like(v)
    assert inner_weighted(one, one, p, g) == pytest.approx(1.0, abs=1e-8)
    assert inner_weighted(v, v, p, g) == pytest.approx(1.0, abs=1e-8)
    assert abs(inner_weighted(one, v, p, g)) < 1e-12


def test_weighted_inner_checks_grid():
    g = build_velocity_grid(17)
    with pytest.raises(GridMismatchError):
        inner_weighted(np.ones(16), np.ones(16), MaxwellianParams(), g)


def test_flat_inner_product():
    grid = PhaseGrid(build_spatial_grid(8, 3.0), VelocityGrid(9, -2.0, 2.0))
    ones = np.ones(grid.shape)
    assert inner_xv(np.zeros(grid.shape), ones, grid) == 0.0
    assert inner_xv(ones, ones, grid) == pytest.approx(3.0 * 4.0, rel=1e-14)
    with pytest.raises(GridMismatchError):
        inner_xv(np.ones((8, 8)), np.ones((8, 8)), grid)


def test_flat_inner_product_two_ways():
    rng = np.random.default_rng(3)
    grid = PhaseGrid(build_spatial_grid(6, 1.0), VelocityGrid(7, -1.0, 1.0))
    a = rng.standard_normal(grid.shape)
    loops = 0.0
    for i in range(grid.shape[0]):
        for j in range(grid.shape[1]):
            loops += a[i, j] ** 2 * grid.x.spacing * grid.v.quad_weights[j]
    assert inner_xv(a, a, grid) == pytest.approx(loops, rel=1e-13)
    assert norm_xv(a, grid) == pytest.approx(math.sqrt(loops), rel=1e-13)


@given(st.floats(-3, 3), st.floats(0.2, 5.0))
def test_norm_equivalence_bounds(u, temp):
    params = MaxwellianParams(1.0, u, temp)
    vg = build_velocity_grid(33, u, temp, 6)
    grid = PhaseGrid(build_spatial_grid(4, 1.0), vg)
    a = np.cos(np.arange(grid.shape[0] * grid.shape[1])).reshape(grid.shape)
    m = eval_maxwellian(params, vg.nodes)
    weighted = math.sqrt(inner_xv_weighted(a, a, grid, params))
    flat = norm_xv(a, grid)
    assert weighted / math.sqrt(m.max()) <= flat * (1 + 1e-12)
    assert flat <= weighted / math.sqrt(m.min()) * (1 + 1e-12)
    assert norm_equivalence_factor(params, vg) == pytest.approx(math.sqrt(m.max() / m.min()))


def test_basis_matches_hermite_polynomials():
    p = MaxwellianParams()
    g = build_velocity_grid(1025)
    chi = build_collision_basis(p, g).chi
    v = g.nodes
    inner = np.abs(v) <= 4
    assert np.max(np.abs(chi[0] - 1)) < 1e-6
    assert np.max(np.abs(chi[1] - v)[inner]) < 1e-6
    assert np.max(np.abs(chi[2] - (v**2 - 1) / math.sqrt(2))[inner]) < 1e-6


@given(st.floats(0.3, 3.0), st.floats(-2, 2), st.floats(0.25, 4.0))
def test_basis_orthonormal(rho, u, temp):
    p = MaxwellianParams(rho, u, temp)
    g = build_velocity_grid(65, u, temp)
    b = build_collision_basis(p, g, extra_modes=2)
    assert np.max(np.abs(b.gram() - np.eye(5))) < 1e-12


def test_basis_rejects_narrow_grid():
    with pytest.raises(ValueError):
        build_collision_basis(MaxwellianParams(), VelocityGrid(33, -2.0, 2.0))


def test_basis_is_read_only():
    b = build_collision_basis(MaxwellianParams(), build_velocity_grid(33))
    with pytest.raises(ValueError):
        b.chi[0, 0] = 2.0
