"""Experiment suites built on the solver, the sensitivity stacks and the harness.

Each suite returns a SuiteResult of named pass/fail checks plus the series
and tables worth writing out.  Expensive runs (order-0 and sensitivity
stacks) are computed once per Experiment and shared between suites.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import factorial, sqrt
from typing import Callable

import numpy as np

from .collision import CollisionOperator, build_operator, default_velocity_grid
from .config import ExperimentConfig
from .harness import (
    CollocationProblem,
    acoustic_limit_residual,
    acoustic_matrix,
    collision_properties,
    conservation_drift,
    fit_growth_exponent,
    mms_convergence,
    moment_scale,
    ratio_bounded,
    richardson_check,
    scaled_frame_residual,
    verify_envelope,
    verify_nonincreasing,
)
from .phase_grid import DIM, MaxwellianParams, PhaseGrid, build_spatial_grid, norm_equivalence_factor
from .sensitivity import SensitivityStack, frame_grid, frame_operator, initial_stack, solve_stack
from .series import NormSeries
from .solver import DistributionField, FrameSpec, SolverConfig, field_norm, solve, upwind_diff

GROWTH_LIMIT = 1.1
RATIO_FACTOR = 1.05
MONOTONE_TOL = 1e-10
DERIVATIVE_TOL = 1e-8
CONSERVATION_TOL = 1e-8
COLLISION_TOL = 1e-12
EIGEN_TOL = 1e-12
RICHARDSON_RANGE = (3.5, 4.5)
ORACLE_TOL = 1e-3
MMS_ORDER = 1.8
RESIDUAL_ORDER = 0.9


@dataclass(frozen=True)
class Check:
    suite: str
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""


@dataclass
class SuiteResult:
    name: str
    checks: list[Check] = field(default_factory=list)
    series: dict[str, NormSeries] = field(default_factory=dict)
    tables: dict[str, tuple[list[str], list[list]]] = field(default_factory=dict)
    note: str = ""

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name: str, passed: bool, value: float, threshold: float, detail: str = "") -> None:
        self.checks.append(Check(self.name, name, bool(passed), float(value), float(threshold), detail))


@dataclass
class FrameSetup:
    perturbation: str
    params: MaxwellianParams
    grid: PhaseGrid
    op: CollisionOperator
    initial: np.ndarray


# -- initial profiles --------------------------------------------------------

def spatial_profile(cfg: ExperimentConfig, x: np.ndarray) -> np.ndarray:
    ini, length = cfg.initial, cfg.grid.length
    if ini.profile == "sine_wave":
        return ini.amplitude * np.sin(2 * np.pi * ini.wavenumber * x / length)
    if ini.profile == "gaussian_bump":
        x0 = length / 2 if ini.x0 is None else ini.x0
        d = (x - x0 + length / 2) % length - length / 2  # periodic distance
        return ini.amplitude * np.exp(-d**2 / (2 * ini.sigma_x**2))
    raise ValueError(f"profile {ini.profile!r} has no spatial factor")


def frame_profile(cfg: ExperimentConfig, grid: PhaseGrid, op: CollisionOperator) -> np.ndarray:
    """Initial data in the frame of ``op``: spatial factor times summed basis modes."""
    if cfg.initial.profile == "file":
        data = np.loadtxt(cfg.initial.path, delimiter=",", ndmin=2)
        if data.shape != grid.shape:
            raise ValueError(f"tabulated profile has shape {data.shape}, grid is {grid.shape}")
        return data
    chi = op.basis.chi
    if max(cfg.initial.mode) >= chi.shape[0]:
        raise ValueError(f"mode {max(cfg.initial.mode)} exceeds the basis size {chi.shape[0]}")
    vel = sum(chi[m] for m in cfg.initial.mode)
    return spatial_profile(cfg, grid.x.nodes)[:, None] * vel[None, :]


def hermite_profile(cfg: ExperimentConfig, params: MaxwellianParams
                    ) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Original-frame profile f_i(x, v) built from normalized Hermite functions.

    Matches ``frame_profile`` at z0 up to quadrature error, and is defined for
    every v, as the chain-rule initialization needs.
    """
    u, temp, rho = params.u, params.temp, params.rho
    modes = cfg.initial.mode

    def f(x, v):
        xi = (v - u) / sqrt(temp)
        vel = 0.0
        for m in modes:
            coef = np.zeros(m + 1)
            coef[m] = 1.0
            vel = vel + np.polynomial.hermite_e.hermeval(xi, coef) / sqrt(factorial(m) * rho)
        return spatial_profile(cfg, x) * vel

    return f


# -- the experiment ----------------------------------------------------------

class Experiment:
    def __init__(self, cfg: ExperimentConfig, threads: int = 1):
        self.cfg = cfg
        self.threads = max(1, int(threads))
        self._cache: dict[str, object] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()
        self.xgrid = build_spatial_grid(cfg.grid.n_x, cfg.grid.length)

    def _cached(self, key: str, build: Callable[[], object]):
        with self._guard:
            lock = self._locks.setdefault(key, threading.Lock())
        with lock:
            if key not in self._cache:
                self._cache[key] = build()
            return self._cache[key]

    @property
    def z_range(self) -> tuple[float, float]:
        p = self.cfg.physics
        return (p.z_min, p.z_max)

    def params_for(self, perturbation: str) -> MaxwellianParams:
        """Linearization family for one perturbation kind.

        Velocity runs keep T fixed; temperature runs keep u = 0, which the
        scaled frame requires.
        """
        p = self.cfg.physics
        if perturbation == "velocity":
            return MaxwellianParams(p.rho, p.u0, p.T0, p.eps_u, 0.0, self.z_range)
        if perturbation == "temperature":
            return MaxwellianParams(p.rho, 0.0, p.T0, 0.0, p.eps_T, self.z_range)
        if perturbation == "original":
            return MaxwellianParams(p.rho, p.u0, p.T0, 0.0, 0.0, self.z_range)
        raise ValueError(f"unknown perturbation {perturbation!r}")

    def solver_config(self, **over) -> SolverConfig:
        r = self.cfg.run
        base = dict(dt=r.dt, t_end=r.t_end, knudsen=self.cfg.physics.knudsen,
                    cfl_safety=r.cfl_safety, sample_every=self.cfg.output.sample_every)
        base.update(over)
        return SolverConfig(**base)

    def setup(self, perturbation: str) -> FrameSetup:
        def build():
            g = self.cfg.grid
            params = self.params_for(perturbation)
            z0 = self.cfg.physics.z0
            if perturbation == "original":
                local = params.at(z0)
                vg = default_velocity_grid(local, "star", g.n_v, g.v_halfwidth_sigmas)
                op = build_operator(local, vg, "star", extra_modes=2)
            else:
                vg = frame_grid(params, perturbation, g.n_v, g.v_halfwidth_sigmas, z0)
                op = frame_operator(params, perturbation, vg, z0)
            grid = PhaseGrid(self.xgrid, vg)
            return FrameSetup(perturbation, params, grid, op, frame_profile(self.cfg, grid, op))
        return self._cached(f"setup:{perturbation}", build)

    # runs

    def original_run(self) -> NormSeries:
        def build():
            s = self.setup("original")
            series, _ = solve(DistributionField(s.initial, s.grid, "original_f"),
                              self.solver_config(), s.op, FrameSpec.original())
            return series
        return self._cached("run:original", build)

    def initial_stack(self, perturbation: str) -> SensitivityStack:
        s = self.setup(perturbation)
        z0 = self.cfg.physics.z0
        if self.cfg.run.init_sensitivity == "zero_in_frame":
            return initial_stack(s.initial, s.grid, s.params, perturbation, self.cfg.run.n_max, z0)
        f_i = hermite_profile(self.cfg, s.params.at(z0))
        return initial_stack(None, s.grid, s.params, perturbation, self.cfg.run.n_max, z0,
                             "chain_rule_from_f", f_i)

    def envelope_constants(self, perturbation: str) -> dict[str, float]:
        """Inputs of the explicit first-order bounds, all at t = 0."""
        s = self.setup(perturbation)
        st = self.initial_stack(perturbation)
        dx = s.grid.x.spacing
        w0 = st.fields[0]
        d0 = field_norm(upwind_diff(w0, st.speeds, dx), s.grid, s.op)
        out = {"dx_norm": d0}
        if perturbation == "velocity":
            out["rate"] = abs(s.params.eps_u) * d0
        else:
            kn = self.cfg.physics.knudsen
            z0 = self.cfg.physics.z0
            log_rate = abs(s.params.sqrt_temp_derivative(1, z0) / sqrt(s.params.temp_at(z0)))
            dtp = s.op.apply(w0) / kn - st.speeds * upwind_diff(w0, st.speeds, dx)
            k_eq = 1.0  # <L p, L p> <= d <p, p> holds with constant 1 in the weighted norm
            out.update(k_eq=k_eq, dtp_norm=field_norm(dtp, s.grid, s.op),
                       p_norm=field_norm(w0, s.grid, s.op), log_rate=log_rate,
                       flat_equivalence=norm_equivalence_factor(s.op.params, s.grid.v))
            out["rate"] = log_rate * (k_eq * sqrt(DIM - 2) * out["p_norm"] / kn + out["dtp_norm"])
        return out

    def stack_run(self, perturbation: str) -> NormSeries:
        def build():
            s = self.setup(perturbation)
            st = self.initial_stack(perturbation)
            c = self.envelope_constants(perturbation)
            dx = s.grid.x.spacing
            envelopes = {"dx_initial": lambda t: c["dx_norm"]}
            if st.n_max >= 1:
                h0 = field_norm(st.fields[1], s.grid, s.op)
                envelopes["first_order"] = lambda t: h0 + c["rate"] * t
            diagnostics = {"dx_norm_order0": lambda stk: field_norm(
                upwind_diff(stk.fields[0], stk.speeds, dx), stk.grid, s.op)}
            series, _ = solve_stack(st, self.solver_config(), s.op, envelopes=envelopes,
                                    diagnostics=diagnostics)
            return series
        return self._cached(f"run:stack:{perturbation}", build)

    def window(self) -> tuple[float, float]:
        lo, hi = self.cfg.verification.fit_window
        return (lo * self.cfg.run.t_end, hi * self.cfg.run.t_end)


# -- suites ------------------------------------------------------------------

def _needs(exp: Experiment, res: SuiteResult, perturbation: str) -> bool:
    if perturbation in exp.cfg.perturbations():
        return True
    res.note = f"skipped: run.perturbation excludes {perturbation}"
    return False


def suite_collision(exp: Experiment) -> SuiteResult:
    res = SuiteResult("collision")
    n = exp.cfg.verification.collision_samples
    for kind in ("original", "velocity", "temperature"):
        op = exp.setup(kind).op
        rep = collision_properties(op, n, seed=0)
        tag = op.frame
        res.add(f"coercivity[{tag}]", rep.coercivity_max <= COLLISION_TOL, rep.coercivity_max, COLLISION_TOL)
        res.add(f"self_adjoint[{tag}]", rep.self_adjoint_defect <= COLLISION_TOL,
                rep.self_adjoint_defect, COLLISION_TOL, "relative to |f||g|")
        res.add(f"null_space[{tag}]", rep.null_space_max <= COLLISION_TOL, rep.null_space_max, COLLISION_TOL)
        res.add(f"conservation[{tag}]", rep.conservation_max <= COLLISION_TOL,
                rep.conservation_max, COLLISION_TOL)
        res.add(f"square_bound[{tag}]", rep.paper_bound_max <= 1 + COLLISION_TOL, rep.paper_bound_max, 1.0,
                "max <Lf,Lf>/(d <f,f>)")
        res.add(f"flat_equivalence[{tag}]", True, rep.norm_equivalence, np.inf,
                "sqrt(max M / min M); diagnostic only")
    return res


def _monotone(exp: Experiment, perturbation: str, name: str) -> SuiteResult:
    res = SuiteResult(name)
    if not _needs(exp, res, perturbation):
        return res
    series = exp.stack_run(perturbation)
    ok, worst = verify_nonincreasing(series.norms[0], MONOTONE_TOL)
    res.add("norm_nonincreasing", ok, worst, MONOTONE_TOL, "largest sample-to-sample increase")
    res.series[f"{perturbation}_stack"] = series
    return res


def suite_shifted_monotone(exp: Experiment) -> SuiteResult:
    return _monotone(exp, "velocity", "shifted_monotone")


def suite_scaled_monotone(exp: Experiment) -> SuiteResult:
    return _monotone(exp, "temperature", "scaled_monotone")


def suite_derivative_bound(exp: Experiment) -> SuiteResult:
    res = SuiteResult("derivative_bound")
    if not _needs(exp, res, "velocity"):
        return res
    series = exp.stack_run("velocity")
    rep = verify_envelope(series, "dx_initial", tol_rel=DERIVATIVE_TOL, tol_abs=0.0,
                          values=series.diagnostics["dx_norm_order0"])
    res.add("dx_norm_bounded", rep.passed, rep.max_violation, DERIVATIVE_TOL,
            f"min margin {rep.min_margin:.3e}")
    res.series["velocity_stack"] = series
    return res


def _first_order(exp: Experiment, perturbation: str, name: str, fit: bool) -> SuiteResult:
    res = SuiteResult(name)
    if not _needs(exp, res, perturbation):
        return res
    if exp.cfg.run.n_max < 1:
        res.note = "skipped: run.n_max < 1"
        return res
    series = exp.stack_run(perturbation)
    v = exp.cfg.verification
    rep = verify_envelope(series, "first_order", 1, v.tol_rel, v.tol_abs)
    c = exp.envelope_constants(perturbation)
    res.add("linear_envelope", rep.passed, rep.max_violation, v.tol_rel,
            f"slope {c['rate']:.6e}, min margin {rep.min_margin:.3e}")
    if perturbation == "temperature":
        res.add("flat_equivalence", True, c["flat_equivalence"], np.inf,
                "flat/weighted factor, logged; the bound uses the weighted norm (factor 1)")
    if fit:
        try:
            g = fit_growth_exponent(series.times, series.norms[1], exp.window())
            res.add("growth_exponent", g.exponent <= GROWTH_LIMIT, g.exponent, GROWTH_LIMIT,
                    f"prefactor {g.prefactor:.3e}, r2 {g.r2:.4f}")
        except ValueError as err:
            res.add("growth_exponent", False, np.nan, GROWTH_LIMIT, f"fit impossible: {err}")
    res.series[f"{perturbation}_stack"] = series
    return res


def suite_velocity_envelope(exp: Experiment) -> SuiteResult:
    return _first_order(exp, "velocity", "velocity_envelope", fit=True)


def suite_temperature_envelope(exp: Experiment) -> SuiteResult:
    return _first_order(exp, "temperature", "temperature_envelope", fit=True)


def _higher_order(exp: Experiment, perturbation: str, name: str) -> SuiteResult:
    res = SuiteResult(name)
    if not _needs(exp, res, perturbation):
        return res
    orders = [n for n in (2, 3) if n <= exp.cfg.run.n_max]
    if not orders:
        res.note = "skipped: run.n_max < 2"
        return res
    series = exp.stack_run(perturbation)
    for n in orders:
        ok, rel = ratio_bounded(series.times, series.norms[n], n, exp.window(), RATIO_FACTOR)
        res.add(f"ratio_bounded_order{n}", ok, rel, RATIO_FACTOR, "window max / window start of |.|/t^n")
    res.series[f"{perturbation}_stack"] = series
    return res


def suite_velocity_higher(exp: Experiment) -> SuiteResult:
    return _higher_order(exp, "velocity", "velocity_higher")


def suite_temperature_higher(exp: Experiment) -> SuiteResult:
    return _higher_order(exp, "temperature", "temperature_higher")


def oracle_problem(exp: Experiment, perturbation: str) -> CollocationProblem:
    s = exp.setup(perturbation)
    stencil = exp.cfg.z_stencil()
    return CollocationProblem.build(s.grid, s.params, perturbation, s.initial,
                                    exp.solver_config(scheme="upwind", sample_every=None), s.op,
                                    min(stencil), max(stencil))


def suite_oracle(exp: Experiment) -> SuiteResult:
    res = SuiteResult("oracle")
    if exp.cfg.run.init_sensitivity != "zero_in_frame":
        res.note = "collocation uses frame-constant initial data"
    rows = []
    for pert in exp.cfg.perturbations():
        prob = oracle_problem(exp, pert)
        rep = richardson_check(prob, exp.cfg.physics.z0, exp.cfg.delta, exp.threads)
        lo, hi = RICHARDSON_RANGE
        res.add(f"richardson_ratio[{pert}]", rep.consistent(lo, hi), rep.ratio, 4.0,
                f"accepted range [{lo}, {hi}]")
        res.add(f"discrepancy[{pert}]", rep.discrepancy <= ORACLE_TOL, rep.discrepancy, ORACLE_TOL,
                f"delta {rep.delta:g}; at delta/2: {rep.discrepancy_half:.3e}")
        rows.append([pert, rep.delta, rep.discrepancy, rep.discrepancy_half, rep.ratio])
    res.tables["oracle"] = (["perturbation", "delta", "discrepancy", "discrepancy_half", "ratio"], rows)
    return res


def suite_conservation(exp: Experiment) -> SuiteResult:
    res = SuiteResult("conservation")
    runs = [("original", exp.original_run())]
    runs += [(p, exp.stack_run(p)) for p in exp.cfg.perturbations()]
    for kind, series in runs:
        s = exp.setup(kind)
        drift = conservation_drift(series, moment_scale(s.initial, s.grid, s.op))
        for name, d in zip(("mass", "momentum", "energy"), drift):
            res.add(f"{name}[{kind}]", d <= CONSERVATION_TOL, d, CONSERVATION_TOL,
                    "max |m(t) - m(0)| / max(|m(0)|, |phi||w0|)")
    res.series["original"] = runs[0][1]
    return res


def acoustic_initial(grid: PhaseGrid, op: CollisionOperator) -> np.ndarray:
    """Smooth wave carried by the hydrodynamic modes only."""
    x = grid.x.nodes
    wave = np.sin(2 * np.pi * x / grid.x.length)
    return wave[:, None] * (0.5 * op.basis.chi[:DIM].sum(axis=0))[None, :]


def suite_acoustic(exp: Experiment) -> SuiteResult:
    res = SuiteResult("acoustic")
    s = exp.setup("original")
    w0 = acoustic_initial(s.grid, s.op)
    v = exp.cfg.verification
    cfg = exp.solver_config(scheme="muscl", limiter="minmod", dt=None)
    with ThreadPoolExecutor(max_workers=exp.threads) as pool:
        runs = list(pool.map(
            lambda kn: acoustic_limit_residual(s.grid, s.op, w0, kn, v.acoustic_t_end, cfg),
            v.acoustic_knudsen))
    order = np.argsort(v.acoustic_knudsen)[::-1]
    means = [runs[i].mean_relative for i in order]
    decreasing = all(b < a for a, b in zip(means, means[1:]))
    res.add("residual_decreases_with_kn", decreasing, means[-1], means[0],
            "relative residual: " + ", ".join(f"Kn={v.acoustic_knudsen[i]:g}: {runs[i].mean_relative:.4e}"
                                              for i in order))
    p = s.op.params
    eig = np.sort(np.linalg.eigvals(acoustic_matrix(p)).real)
    expect = np.sort([p.u - sqrt(3 * p.temp), p.u, p.u + sqrt(3 * p.temp)])
    err = float(np.max(np.abs(eig - expect)))
    res.add("eigen_speeds", err <= EIGEN_TOL, err, EIGEN_TOL, "u, u +- sqrt(3T)")
    res.tables["acoustic"] = (["knudsen", "mean_relative_residual", "mean_residual"],
                              [[runs[i].knudsen, runs[i].mean_relative, float(np.mean(runs[i].residual))]
                               for i in order])
    return res


def suite_mms(exp: Experiment) -> SuiteResult:
    res = SuiteResult("mms")
    p = exp.cfg.physics
    levels = [(n, n + 1) for n in exp.cfg.verification.mms_levels]
    out = mms_convergence(levels, MaxwellianParams(p.rho, p.u0, p.T0), scheme="muscl",
                          limiter="minmod", knudsen=p.knudsen)
    for i, order in enumerate(out.orders):
        res.add(f"order[{out.n_x[i]}->{out.n_x[i + 1]}]", order >= MMS_ORDER, order, MMS_ORDER,
                "MUSCL-minmod with SSPRK2 substeps")
    res.tables["mms"] = (["n_x", "error"], [[n, e] for n, e in zip(out.n_x, out.errors)])
    return res


def suite_residual(exp: Experiment) -> SuiteResult:
    res = SuiteResult("residual")
    if not _needs(exp, res, "temperature"):
        return res
    s = exp.setup("temperature")
    params = s.params.at(exp.cfg.physics.z0)
    g = exp.cfg.grid

    def profile(grid, op):
        if exp.cfg.initial.profile != "file":
            return frame_profile(exp.cfg, grid, op)
        # a tabulated profile fixes n_x, so refine the default wave instead
        return np.sin(2 * np.pi * grid.x.nodes / grid.x.length)[:, None] * op.basis.chi[3][None, :]

    levels = (g.n_x // 2, g.n_x, 2 * g.n_x)
    out = scaled_frame_residual(params, profile, levels, g.n_v, g.length, 1.0,
                                exp.cfg.physics.knudsen, g.v_halfwidth_sigmas, exp.cfg.run.cfl_safety)
    for i, order in enumerate(out.orders):
        res.add(f"residual_order[{levels[i]}->{levels[i + 1]}]", order >= RESIDUAL_ORDER, order,
                RESIDUAL_ORDER, f"relative residual {out.relative[i]:.3e} -> {out.relative[i + 1]:.3e}")
    res.tables["residual"] = (["n_x", "relative_residual"], [[n, r] for n, r in zip(out.n_x, out.relative)])
    return res


SUITE_FUNCS: dict[str, Callable[[Experiment], SuiteResult]] = {
    "collision": suite_collision,
    "shifted_monotone": suite_shifted_monotone,
    "scaled_monotone": suite_scaled_monotone,
    "derivative_bound": suite_derivative_bound,
    "velocity_envelope": suite_velocity_envelope,
    "velocity_higher": suite_velocity_higher,
    "temperature_envelope": suite_temperature_envelope,
    "temperature_higher": suite_temperature_higher,
    "oracle": suite_oracle,
    "conservation": suite_conservation,
    "acoustic": suite_acoustic,
    "mms": suite_mms,
    "residual": suite_residual,
}

SUITE_DESCRIPTIONS = {
    "collision": "structural identities of the collision operator on random fields",
    "shifted_monotone": "shifted-frame order-0 norm is nonincreasing",
    "scaled_monotone": "scaled-frame order-0 norm is nonincreasing",
    "derivative_bound": "norm of the x-derivative never exceeds its initial value",
    "velocity_envelope": "first velocity sensitivity under its linear envelope; growth exponent fit",
    "velocity_higher": "velocity sensitivities of order 2, 3 grow no faster than t^n",
    "temperature_envelope": "first temperature sensitivity under its linear envelope; growth exponent fit",
    "temperature_higher": "temperature sensitivities of order 2, 3 grow no faster than t^n",
    "oracle": "direct sensitivity vs z-collocation finite differences (Richardson test)",
    "conservation": "weighted mass, momentum and energy drift",
    "acoustic": "moment residual of the acoustic system shrinks with the Knudsen number",
    "mms": "manufactured-solution convergence order of the second-order transport",
    "residual": "scaled-frame equation residual converges at the scheme order",
}


def run_suite(exp: Experiment, name: str) -> SuiteResult:
    try:
        fn = SUITE_FUNCS[name]
    except KeyError:
        raise ValueError(f"unknown suite {name!r}") from None
    return fn(exp)
