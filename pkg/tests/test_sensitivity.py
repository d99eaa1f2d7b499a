import math

import numpy as np
import pytest

from linbgk.collision import build_operator, default_velocity_grid
from linbgk.harness import CollocationProblem, richardson_check
from linbgk.phase_grid import MaxwellianParams, PhaseGrid, build_spatial_grid
from linbgk.sensitivity import (
    SensitivityStack,
    advance_stack,
    fd_weights,
    frame_grid,
    frame_operator,
    frame_sensitivity_convert,
    initial_stack,
    solve_stack,
    temperature_source,
    velocity_source,
)
from linbgk.solver import DistributionField, FrameSpec, SolverConfig, solve, upwind_diff

N_X, N_V = 16, 33


def _setup(perturbation, params, n_x=N_X, n_v=N_V):
    vg = frame_grid(params, perturbation, n_v)
    op = frame_operator(params, perturbation, vg)
    grid = PhaseGrid(build_spatial_grid(n_x, 2 * math.pi), vg)
    data = np.sin(grid.x.nodes)[:, None] * op.basis.chi[3][None, :]
    return grid, op, data


VEL = MaxwellianParams(1.0, 0.5, 1.0, eps_u=0.1)
TEMP = MaxwellianParams(1.0, 0.0, 1.0, eps_T=0.1)


def test_velocity_source_first_order():
    grid, op, data = _setup("velocity", VEL)
    st = initial_stack(data, grid, VEL, "velocity", 2)
    expected = -0.1 * upwind_diff(data, st.speeds, grid.x.spacing)
    assert np.allclose(velocity_source(st, 1), expected, atol=1e-15)


def test_velocity_source_second_order_affine_family():
    grid, op, data = _setup("velocity", VEL)
    h1 = np.cos(grid.x.nodes)[:, None] * op.basis.chi[1][None, :]
    st = SensitivityStack((data, h1, np.zeros_like(data)), grid, VEL, "velocity")
    expected = -2 * 0.1 * upwind_diff(h1, st.speeds, grid.x.spacing)
    assert np.allclose(velocity_source(st, 2), expected, atol=1e-15)


def test_sources_vanish_without_perturbation():
    p = MaxwellianParams(1.0, 0.5, 1.0)
    grid, op, data = _setup("velocity", p)
    st = SensitivityStack((data, data, data, data), grid, p, "velocity")
    for k in (1, 2, 3):
        assert np.all(velocity_source(st, k) == 0)
    q = MaxwellianParams(1.0, 0.0, 1.0)
    grid, op, data = _setup("temperature", q)
    st = SensitivityStack((data, data, data), grid, q, "temperature")
    assert np.all(temperature_source(st, 1) == 0) and np.all(temperature_source(st, 2) == 0)


def test_temperature_source_first_order():
    p = MaxwellianParams(1.0, 0.0, 2.0, eps_T=0.3)
    grid, op, data = _setup("temperature", p)
    st = initial_stack(data, grid, p, "temperature", 1)
    v = grid.v.nodes
    expected = -(0.3 / (2 * math.sqrt(2.0))) * v * upwind_diff(data, st.speeds, grid.x.spacing)
    assert np.allclose(temperature_source(st, 1), expected, atol=1e-14)


def test_source_kind_mismatch():
    grid, op, data = _setup("velocity", VEL)
    st = initial_stack(data, grid, VEL, "velocity", 1)
    with pytest.raises(ValueError):
        temperature_source(st, 1)


def test_order_zero_stack_is_plain_solve():
    grid, op, data = _setup("velocity", VEL)
    cfg = SolverConfig(t_end=1.0)
    s_stack, fin = solve_stack(initial_stack(data, grid, VEL, "velocity", 0), cfg, op)
    s_plain, plain = solve(DistributionField(data, grid, "shifted_g"), cfg, op, FrameSpec.shifted(0.5))
    assert np.array_equal(fin.fields[0], plain.data)
    assert np.allclose(s_stack.norms[0], s_plain.norms[0], rtol=0, atol=0)


def test_uniform_data_gives_zero_sensitivity():
    grid, op, _ = _setup("velocity", VEL)
    data = np.tile(op.basis.chi[3], (grid.shape[0], 1))
    _, fin = solve_stack(initial_stack(data, grid, VEL, "velocity", 2), SolverConfig(t_end=1.0), op)
    assert np.max(np.abs(fin.fields[1])) < 1e-15 and np.max(np.abs(fin.fields[2])) < 1e-15


def test_stack_time_and_validation():
    grid, op, data = _setup("velocity", VEL)
    st = initial_stack(data, grid, VEL, "velocity", 1)
    nxt = advance_stack(st, SolverConfig(), op, 0.01)
    assert nxt.time == pytest.approx(0.01)
    with pytest.raises(ValueError):
        advance_stack(st, SolverConfig(scheme="muscl"), op)
    with pytest.raises(ValueError):
        SensitivityStack((np.zeros((3, 3)),), grid, VEL)
    with pytest.raises(ValueError):
        SensitivityStack((data,), grid, VEL, "pressure")


def test_fd_weights():
    assert np.allclose(fd_weights([-1, 0, 1], 1), [-0.5, 0, 0.5])
    assert np.allclose(fd_weights([-1, 0, 1], 2), [1, -2, 1])
    assert np.allclose(fd_weights([-2, -1, 0, 1, 2], 1), [1 / 12, -2 / 3, 0, 2 / 3, -1 / 12])
    with pytest.raises(ValueError):
        fd_weights([-1, 1], 2)


def test_fd_weights_exact_on_affine_observable():
    w = np.arange(6.0)
    offsets = np.array([-0.1, 0.0, 0.1])
    est = sum(c * (z * w) for c, z in zip(fd_weights(offsets, 1), offsets))
    assert np.allclose(est, w, atol=1e-13)


@pytest.mark.parametrize("perturbation,params", [("velocity", VEL), ("temperature", TEMP)])
def test_direct_hierarchy_matches_collocation(perturbation, params):
    grid, op, data = _setup(perturbation, params)
    prob = CollocationProblem.build(grid, params, perturbation, data, SolverConfig(t_end=2.0), op,
                                    -0.02, 0.02)
    rep = richardson_check(prob, 0.0, 0.02)
    assert 3.5 <= rep.ratio <= 4.5
    assert rep.discrepancy < 1e-5


def test_chain_rule_initialization():
    grid, op, _ = _setup("velocity", VEL)

    def f_i(x, v):
        return np.sin(x) * np.exp(-((v - 0.5) ** 2) / 2) * (v - 0.5)

    st = initial_stack(None, grid, VEL, "velocity", 1, init_sensitivity="chain_rule_from_f", profile=f_i)
    x, v = grid.mesh()
    # g_i(z) = f_i(x, v + u(z)), so h(0) = eps_u * d_v f_i(x, v + u0)
    xi = v
    dv = np.sin(x) * np.exp(-(xi**2) / 2) * (1 - xi**2)
    assert np.allclose(st.fields[0], np.sin(x) * np.exp(-(xi**2) / 2) * xi, atol=1e-14)
    assert np.max(np.abs(st.fields[1] - 0.1 * dv)) < 1e-10


def test_conversion_without_perturbation_is_h():
    p = MaxwellianParams(1.0, 0.5, 1.0)
    grid, op, data = _setup("velocity", p)
    h = np.cos(grid.x.nodes)[:, None] * op.basis.chi[2][None, :]
    st = SensitivityStack((data, h), grid, p, "velocity")
    f_grid = default_velocity_grid(p, "star", N_V)
    assert np.allclose(frame_sensitivity_convert(st, f_grid), h, atol=1e-13)


def test_conversion_for_velocity_independent_field():
    grid, op, _ = _setup("velocity", VEL)
    g = np.tile(np.sin(grid.x.nodes)[:, None], (1, N_V))
    h = np.cos(grid.x.nodes)[:, None] * np.ones(N_V)
    st = SensitivityStack((g, h), grid, VEL, "velocity")
    f_grid = default_velocity_grid(VEL, "star", N_V)
    assert np.allclose(frame_sensitivity_convert(st, f_grid), h, atol=1e-12)


def _conversion_error(n_v):
    params = MaxwellianParams(1.0, 0.5, 1.0, eps_u=0.1)
    grid, op, _ = _setup("velocity", params, n_v=n_v)
    f_grid = default_velocity_grid(params, "star", n_v)
    fgrid = PhaseGrid(grid.x, f_grid)
    x, v_f = fgrid.mesh()

    def f_i(x, v):
        return np.sin(x) * np.exp(-((v - 0.5) ** 2) / 2) * (v - 0.5) ** 3

    cfg = SolverConfig(t_end=0.5, dt=0.005)
    st = initial_stack(None, grid, params, "velocity", 1, init_sensitivity="chain_rule_from_f", profile=f_i)
    _, fin = solve_stack(st, cfg, op, dt=0.005)
    direct = frame_sensitivity_convert(fin, f_grid)
    delta = 1e-2
    outs = []
    for z in (-delta, delta):
        op_z = build_operator(params.at(z), f_grid, "star")
        _, f = solve(DistributionField(f_i(x, v_f), fgrid), cfg, op_z, FrameSpec.original())
        outs.append(f.data)
    fd = (outs[1] - outs[0]) / (2 * delta)
    inner = np.abs(f_grid.nodes - 0.5) <= 5
    return np.max(np.abs(direct - fd)[:, inner]) / np.max(np.abs(fd[:, inner]))


def test_conversion_matches_original_frame_collocation():
    """dz f from the shifted stack vs central differences of original-frame solves.

    The velocity derivative in the conversion is second order, so halving
    the velocity spacing should cut the discrepancy about fourfold.
    """
    coarse, fine = _conversion_error(97), _conversion_error(193)
    assert fine < 1e-2
    assert coarse / fine > 3.0
