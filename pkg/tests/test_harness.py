import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from linbgk.collision import build_operator, default_velocity_grid
from linbgk.harness import (
    CollocationProblem,
    RichardsonReport,
    acoustic_limit_residual,
    acoustic_matrix,
    collision_properties,
    collocation_oracle,
    conservation_drift,
    fit_growth_exponent,
    linearized_moments,
    mms_convergence,
    moments_from_state,
    ratio_bounded,
    richardson_check,
    scaled_frame_residual,
    state_from_moments,
    verify_envelope,
    verify_nonincreasing,
)
from linbgk.phase_grid import MaxwellianParams, PhaseGrid, build_spatial_grid
from linbgk.sensitivity import frame_grid, frame_operator
from linbgk.series import NormSeries
from linbgk.solver import SolverConfig


def _series(times, norms, envelopes=None):
    times = np.asarray(times, dtype=float)
    return NormSeries(times, {0: np.asarray(norms, dtype=float)}, np.zeros((len(times), 3)),
                      envelopes or {})


def test_envelope_zero_solution_passes():
    t = np.linspace(0, 1, 5)
    rep = verify_envelope(_series(t, np.zeros(5), {"lin": 0 * t}), "lin")
    assert rep.passed and rep.max_violation == 0


def test_envelope_negative_control():
    t = np.linspace(0, 1, 11)
    norms = 1 + t
    ok = verify_envelope(_series(t, norms, {"lin": 1 + t}), "lin")
    bad = verify_envelope(_series(t, 2 * norms, {"lin": 1 + t}), "lin")
    assert ok.passed and not bad.passed
    assert bad.max_violation == pytest.approx(2.0, rel=1e-5)
    with pytest.raises(KeyError):
        verify_envelope(_series(t, norms), "missing")


def test_nonincreasing():
    assert verify_nonincreasing(np.array([3.0, 2.0, 2.0, 1.0]))[0]
    ok, worst = verify_nonincreasing(np.array([3.0, 2.0, 2.5]))
    assert not ok and worst == pytest.approx(0.5)


def test_growth_fit_exact_power_law():
    t = np.linspace(1, 50, 200)
    fit = fit_growth_exponent(t, 3 * t**2, (25, 50))
    assert fit.exponent == pytest.approx(2.0, abs=1e-12)
    assert fit.prefactor == pytest.approx(3.0, rel=1e-10)
    assert fit.r2 == pytest.approx(1.0)


def test_growth_fit_affine_approaches_one():
    t = np.logspace(0, 6, 3000)
    exps = [fit_growth_exponent(t, t + 100, (lo, 2 * lo)).exponent for lo in (10, 1e3, 1e5)]
    assert exps[0] < exps[1] < exps[2] < 1.0
    assert exps[2] == pytest.approx(1.0, abs=1e-3)


def test_growth_fit_rejects_tiny_or_sparse_data():
    t = np.linspace(1, 10, 100)
    with pytest.raises(ValueError):
        fit_growth_exponent(t, np.full(100, 1e-13), (5, 10))
    with pytest.raises(ValueError):
        fit_growth_exponent(t[:10], t[:10], (5, 10))


def test_ratio_bounded():
    t = np.linspace(1, 10, 50)
    assert ratio_bounded(t, t**2, 2, (5, 10))[0]
    assert ratio_bounded(t, 0.5 * t**2 + t, 2, (5, 10))[0]  # ratio nonincreasing
    ok, rel = ratio_bounded(t, t**3, 2, (5, 10))
    assert not ok and rel == pytest.approx(2.0, rel=0.05)


def test_conservation_drift():
    s = NormSeries(np.arange(3.0), {0: np.ones(3)},
                   np.array([[1.0, 0.0, 2.0], [1.0, 1e-9, 2.0], [1.0 + 1e-6, 0.0, 2.0]]))
    drift = conservation_drift(s, np.array([1.0, 1.0, 1.0]))
    assert drift == pytest.approx([1e-6, 1e-9, 0.0])


def test_acoustic_matrix_values_and_speeds():
    a = acoustic_matrix(MaxwellianParams(1.0, 0.0, 1.0))
    assert np.array_equal(a, [[0, 1, 0], [1, 0, 1], [0, 2, 0]])
    assert np.allclose(np.sort(np.linalg.eigvals(a).real), [-math.sqrt(3), 0, math.sqrt(3)], atol=1e-14)


@given(st.floats(0.2, 5), st.floats(-3, 3), st.floats(0.2, 5))
def test_acoustic_speeds_shift_with_u(rho, u, temp):
    eig = np.sort(np.linalg.eigvals(acoustic_matrix(MaxwellianParams(rho, u, temp))).real)
    eig0 = np.sort(np.linalg.eigvals(acoustic_matrix(MaxwellianParams(rho, 0.0, temp))).real)
    assert np.allclose(eig, u + eig0, atol=1e-12)
    assert np.allclose(eig, [u - math.sqrt(3 * temp), u, u + math.sqrt(3 * temp)], atol=1e-12)


@given(st.floats(0.2, 5), st.floats(-3, 3), st.floats(0.2, 5))
def test_state_round_trip(rho, u, temp):
    p = MaxwellianParams(rho, u, temp)
    state = np.array([[0.3, -1.2], [0.7, 0.1], [-0.4, 2.0]])
    back = state_from_moments(moments_from_state(*state, p), p).as_array()
    assert np.allclose(back, state, atol=1e-12 * (1 + u * u + temp))


def test_linearized_moments_of_constant_mode():
    p = MaxwellianParams()
    vg = default_velocity_grid(p, "star", 129)
    op = build_operator(p, vg, "star")
    f = np.tile(op.basis.chi[0], (4, 1))
    s = linearized_moments(f, op)
    assert np.allclose(s.rho_t, 1.0, atol=1e-8)
    v, w = vg.nodes, op.weights
    m = np.array([np.sum(f[0] * w), np.sum(v * f[0] * w), np.sum(v * v * f[0] * w)])
    assert np.allclose(s.u_t, m[1], atol=1e-12)
    assert np.allclose(s.T_t, m[2] - m[0], atol=1e-12)
    zero = linearized_moments(np.zeros((4, 129)), op).as_array()
    assert np.all(zero == 0)


def _acoustic_setup():
    p = MaxwellianParams(1.0, 0.5, 1.0)
    vg = default_velocity_grid(p, "star", 33)
    op = build_operator(p, vg, "star")
    grid = PhaseGrid(build_spatial_grid(32, 2 * math.pi), vg)
    return grid, op


def test_acoustic_residual_vanishes_without_gradients():
    grid, op = _acoustic_setup()
    uniform = np.tile(op.basis.chi.sum(axis=0), (grid.shape[0], 1))
    for data in (uniform, np.zeros(grid.shape)):
        res = acoustic_limit_residual(grid, op, data, 1.0, 0.2)
        assert np.max(res.residual) < 1e-12


def test_acoustic_residual_shrinks_with_knudsen():
    grid, op = _acoustic_setup()
    w0 = np.sin(grid.x.nodes)[:, None] * (0.5 * op.basis.chi.sum(axis=0))[None, :]
    coarse = acoustic_limit_residual(grid, op, w0, 1.0, 1.0).mean_relative
    fine = acoustic_limit_residual(grid, op, w0, 0.01, 1.0).mean_relative
    assert fine < 0.5 * coarse


def _oracle_problem(eps_u=0.1, t_end=1.0):
    p = MaxwellianParams(1.0, 0.5, 1.0, eps_u=eps_u)
    vg = frame_grid(p, "velocity", 33)
    op = frame_operator(p, "velocity", vg)
    grid = PhaseGrid(build_spatial_grid(16, 2 * math.pi), vg)
    w0 = np.sin(grid.x.nodes)[:, None] * op.basis.chi[3][None, :]
    return CollocationProblem.build(grid, p, "velocity", w0, SolverConfig(t_end=t_end), op, -0.05, 0.05)


def test_collocation_without_perturbation_is_zero():
    fd = collocation_oracle(_oracle_problem(eps_u=0.0), 0.0, 0.02, n_z=5)
    assert set(fd.derivatives) == {1, 2, 3, 4}
    for order in (1, 2):
        assert max(np.max(np.abs(d)) for d in fd.derivatives[order]) < 1e-13 / 0.02**order


def test_collocation_threads_do_not_change_results():
    prob = _oracle_problem()
    a = collocation_oracle(prob, 0.0, 0.02, threads=1)
    b = collocation_oracle(prob, 0.0, 0.02, threads=3)
    assert all(np.array_equal(x, y) for x, y in zip(a.derivatives[1], b.derivatives[1]))


def test_collocation_rejects_bad_stencil():
    with pytest.raises(ValueError):
        collocation_oracle(_oracle_problem(), 0.0, 0.02, n_z=4)
    with pytest.raises(ValueError):
        collocation_oracle(_oracle_problem(), 0.0, 1.5)  # leaves the admissible z range


def test_richardson_ratio_near_four():
    rep = richardson_check(_oracle_problem(), 0.0, 0.02)
    assert rep.consistent()
    assert rep.ratio == pytest.approx(4.0, abs=0.05)


def test_richardson_warns_when_off():
    rep = RichardsonReport(0.1, 1.0, 0.5)
    assert not rep.consistent() and rep.ratio == 2.0


def test_collision_properties_small():
    p = MaxwellianParams(1.3, -0.4, 2.0)
    op = build_operator(p, default_velocity_grid(p, "star", 65), "star", extra_modes=2)
    rep = collision_properties(op, 200)
    assert rep.coercivity_max <= 1e-12
    assert rep.self_adjoint_defect <= 1e-12
    assert rep.conservation_max <= 1e-12
    assert rep.spectral_form_max <= 1e-12
    assert rep.paper_bound_max <= 1 + 1e-12
    assert rep.norm_equivalence > 1


def test_mms_upwind_first_order():
    out = mms_convergence(((16, 17), (32, 33), (64, 65)), scheme="upwind")
    assert all(0.8 <= o <= 1.3 for o in out.orders)
    assert out.errors[0] > out.errors[1] > out.errors[2]


def test_mms_muscl_beats_upwind():
    up = mms_convergence(((32, 33), (64, 65)), scheme="upwind").errors[-1]
    mu = mms_convergence(((32, 33), (64, 65)), scheme="muscl").errors[-1]
    assert mu < 0.2 * up


def test_scaled_frame_residual_first_order():
    def profile(grid, op):
        return np.sin(grid.x.nodes)[:, None] * op.basis.chi[3][None, :]

    out = scaled_frame_residual(MaxwellianParams(1.0, 0.0, 2.0), profile, (16, 32, 64), 33,
                                2 * math.pi, 0.5)
    assert all(0.9 <= o <= 1.2 for o in out.orders)
