"""Verification tooling: z-collocation oracle, bound envelopes, growth fits,
conservation audits, the acoustic-limit comparison and manufactured solutions."""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .collision import CollisionOperator, build_operator, default_velocity_grid
from .phase_grid import (
    MaxwellianParams,
    PhaseGrid,
    build_spatial_grid,
    norm_equivalence_factor,
)
from .sensitivity import SensitivityStack, fd_weights, initial_stack, solve_stack
from .series import NormSeries
from .solver import (
    DistributionField,
    FrameSpec,
    SolverConfig,
    field_norm,
    solve,
)

__all__ = [
    "NormSeries",
    "EnvelopeReport",
    "verify_envelope",
    "verify_nonincreasing",
    "GrowthFit",
    "fit_growth_exponent",
    "ratio_bounded",
    "conservation_drift",
    "CollocationProblem",
    "collocation_oracle",
    "direct_sensitivities",
    "oracle_discrepancy",
    "richardson_check",
    "AcousticState",
    "linearized_moments",
    "acoustic_matrix",
    "acoustic_limit_residual",
    "collision_properties",
    "mms_convergence",
]


# -- envelopes and fits ------------------------------------------------------

@dataclass
class EnvelopeReport:
    name: str
    passed: bool
    max_violation: float
    margin: np.ndarray = field(repr=False)

    @property
    def min_margin(self) -> float:
        return float(self.margin.min()) if self.margin.size else np.inf


def verify_envelope(series: NormSeries, name: str, order: int = 0,
                    tol_rel: float = 1e-6, tol_abs: float = 1e-10,
                    values: np.ndarray | None = None) -> EnvelopeReport:
    """Check values[t] <= envelope[t] (1 + tol_rel) + tol_abs at every sample.

    ``values`` defaults to the norm trajectory of ``order``; pass a
    diagnostic column to test other observables against the envelope.
    """
    if name not in series.envelopes:
        raise KeyError(f"no envelope {name!r} registered; have {sorted(series.envelopes)}")
    env = series.envelopes[name]
    vals = series.norms[order] if values is None else np.asarray(values)
    excess = vals - (env * (1 + tol_rel) + tol_abs)
    return EnvelopeReport(name, bool(np.all(excess <= 0)),
                          float(max(excess.max(initial=-np.inf), 0.0)), env - vals)


def verify_nonincreasing(values: np.ndarray, tol: float = 1e-10) -> tuple[bool, float]:
    """True when no sample exceeds its predecessor by more than ``tol``."""
    inc = np.diff(np.asarray(values, dtype=float))
    worst = float(inc.max()) if inc.size else 0.0
    return worst <= tol, worst


@dataclass(frozen=True)
class GrowthFit:
    exponent: float
    prefactor: float
    r2: float


def fit_growth_exponent(times, values, t_window: tuple[float, float],
                        floor: float = 1e-12, min_samples: int = 20) -> GrowthFit:
    """Least-squares fit of log(value) = log(prefactor) + exponent log(t) on the window."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    lo, hi = t_window
    mask = (t >= lo) & (t <= hi) & (t > 0)
    if mask.sum() < min_samples:
        raise ValueError(f"only {int(mask.sum())} samples in window [{lo}, {hi}]; need {min_samples}")
    if np.any(y[mask] <= floor):
        raise ValueError(f"values drop below {floor:g} inside the fit window")
    lt, ly = np.log(t[mask]), np.log(y[mask])
    slope, icpt = np.polyfit(lt, ly, 1)
    resid = ly - (slope * lt + icpt)
    sst = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / sst if sst > 0 else 1.0
    return GrowthFit(float(slope), float(np.exp(icpt)), float(r2))


def ratio_bounded(times, values, power: int, t_window: tuple[float, float],
                  factor: float = 1.05) -> tuple[bool, float]:
    """values / t^power over the window: nonincreasing, or max <= factor x start value.

    Returns (passed, max ratio / start ratio).
    """
    t = np.asarray(times, dtype=float)
    mask = (t >= t_window[0]) & (t <= t_window[1]) & (t > 0)
    r = np.asarray(values, dtype=float)[mask] / t[mask] ** power
    if r.size == 0:
        raise ValueError("empty window")
    if r[0] == 0:
        return bool(np.all(r == 0)), 0.0 if np.all(r == 0) else np.inf
    rel = float(r.max() / r[0])
    return bool(np.all(np.diff(r) <= 0) or rel <= factor), rel


def conservation_drift(series: NormSeries, scale: np.ndarray) -> np.ndarray:
    """Per-moment max |m(t) - m(0)| / max(|m(0)|, scale)."""
    m = series.moments
    denom = np.maximum(np.abs(m[0]), np.asarray(scale, dtype=float))
    denom = np.where(denom > 0, denom, 1.0)
    return np.max(np.abs(m - m[0]), axis=0) / denom


def moment_scale(data: np.ndarray, grid: PhaseGrid, op: CollisionOperator) -> np.ndarray:
    """Cauchy-Schwarz bound ||phi_j|| ||w|| on |x-integrated moment j|."""
    v = grid.v.nodes
    phi_norms = np.sqrt(grid.x.length * np.array([np.sum(op.weights * p * p) for p in (np.ones_like(v), v, v * v)]))
    return phi_norms * field_norm(data, grid, op)


# -- collocation oracle ------------------------------------------------------

@dataclass(frozen=True)
class CollocationProblem:
    """Order-0 problem whose parameter z only moves the frame advection speed.

    ``dt`` is fixed across all z nodes (CFL taken over the whole stencil) so
    every collocation solve runs the same step sequence.
    """

    grid: PhaseGrid
    params: MaxwellianParams
    perturbation: str
    initial: np.ndarray = field(repr=False)
    cfg: SolverConfig
    op: CollisionOperator
    dt: float

    @classmethod
    def build(cls, grid: PhaseGrid, params: MaxwellianParams, perturbation: str,
              initial: np.ndarray, cfg: SolverConfig, op: CollisionOperator,
              z_lo: float, z_hi: float, n_samples: int = 100) -> CollocationProblem:
        speeds = [cls._frame(params, perturbation, z).advection(grid.v.nodes) for z in (z_lo, z_hi)]
        amax = max(float(np.max(np.abs(s))) for s in speeds)
        dt = cfg.resolve_dt(grid.x.spacing, amax) if cfg.dt is None else cfg.dt
        dt = min(dt, cfg.max_dt(grid.x.spacing, amax))
        n = cfg.n_steps(dt)
        cfg = replace(cfg, dt=cfg.t_end / n, sample_every=cfg.sample_every or max(1, n // n_samples))
        return cls(grid, params, perturbation, np.asarray(initial, dtype=float), cfg, op, cfg.t_end / n)

    @staticmethod
    def _frame(params: MaxwellianParams, perturbation: str, z: float) -> FrameSpec:
        if perturbation == "velocity":
            return FrameSpec.shifted(params.u_at(z))
        return FrameSpec.scaled(params.temp_at(z))

    def frame_at(self, z: float) -> FrameSpec:
        self.params.check_z(z)
        return self._frame(self.params, self.perturbation, z)

    def solve_at(self, z: float, z_ref: float) -> tuple[np.ndarray, list[np.ndarray]]:
        kind = "shifted_g" if self.perturbation == "velocity" else "scaled_p"
        snaps: list[np.ndarray] = []
        series, _ = solve(DistributionField(self.initial, self.grid, kind), self.cfg, self.op,
                          self.frame_at(z), on_sample=lambda t, d: snaps.append(d.copy()),
                          upwind_reference=self.frame_at(z_ref))
        return series.times, snaps


@dataclass
class CollocationResult:
    times: np.ndarray
    derivatives: dict[int, list[np.ndarray]]


def collocation_oracle(problem: CollocationProblem, z0: float, delta: float, n_z: int = 3,
                       threads: int = 1) -> CollocationResult:
    """Central finite differences in z of independent order-0 solves.

    n_z = 3 yields orders 1-2, n_z = 5 orders 1-4.  Each node is an
    independent solve; the upwind stencil orientation is that of z0.
    """
    if n_z not in (3, 5):
        raise ValueError("n_z must be 3 or 5")
    half = (n_z - 1) // 2
    offsets = np.arange(-half, half + 1)
    nodes = [z0 + j * delta for j in offsets]
    for z in nodes:
        problem.params.check_z(z)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        runs = list(pool.map(lambda z: problem.solve_at(z, z0), nodes))
    times = runs[0][0]
    derivs: dict[int, list[np.ndarray]] = {}
    for order in range(1, n_z):
        wts = fd_weights(offsets * delta, order)
        derivs[order] = [sum(c * run[1][i] for c, run in zip(wts, runs)) for i in range(len(times))]
    return CollocationResult(times, derivs)


def direct_sensitivities(problem: CollocationProblem, z0: float, n_max: int
                         ) -> tuple[np.ndarray, list[SensitivityStack]]:
    stack = initial_stack(problem.initial, problem.grid, problem.params, problem.perturbation,
                          n_max, z0)
    snaps: list[SensitivityStack] = []
    series, _ = solve_stack(stack, problem.cfg, problem.op, dt=problem.dt,
                            on_sample=snaps.append)
    return series.times, snaps


def oracle_discrepancy(problem: CollocationProblem, z0: float, delta: float, order: int = 1,
                       n_z: int = 3, threads: int = 1,
                       direct: tuple[np.ndarray, list[SensitivityStack]] | None = None) -> float:
    """max over samples of ||direct h^(order) - FD estimate|| in L2(M dx dv)."""
    times, stacks = direct if direct is not None else direct_sensitivities(problem, z0, order)
    fd = collocation_oracle(problem, z0, delta, n_z, threads)
    if not np.allclose(times, fd.times, rtol=0, atol=1e-12):
        raise RuntimeError("direct and collocation sample times differ")
    return max(field_norm(s.fields[order] - d, problem.grid, problem.op)
               for s, d in zip(stacks, fd.derivatives[order]))


@dataclass(frozen=True)
class RichardsonReport:
    delta: float
    discrepancy: float
    discrepancy_half: float

    @property
    def ratio(self) -> float:
        return self.discrepancy / self.discrepancy_half if self.discrepancy_half > 0 else np.inf

    def consistent(self, lo: float = 3.5, hi: float = 4.5) -> bool:
        return lo <= self.ratio <= hi


def richardson_check(problem: CollocationProblem, z0: float, delta: float, threads: int = 1
                     ) -> RichardsonReport:
    """FD-vs-direct discrepancy at delta and delta/2 for the first derivative."""
    direct = direct_sensitivities(problem, z0, 1)
    d1 = oracle_discrepancy(problem, z0, delta, 1, 3, threads, direct)
    d2 = oracle_discrepancy(problem, z0, delta / 2, 1, 3, threads, direct)
    rep = RichardsonReport(delta, d1, d2)
    if not rep.consistent():
        warnings.warn(f"Richardson ratio {rep.ratio:.3f} far from 4: FD error is not O(delta^2)",
                      RuntimeWarning, stacklevel=2)
    return rep


# -- acoustic limit ----------------------------------------------------------

@dataclass
class AcousticState:
    rho_t: np.ndarray
    u_t: np.ndarray
    T_t: np.ndarray
    params: MaxwellianParams

    def as_array(self) -> np.ndarray:
        return np.stack([self.rho_t, self.u_t, self.T_t])


def moments_from_state(rho_t, u_t, T_t, params: MaxwellianParams) -> np.ndarray:
    r, u, T = params.rho, params.u, params.temp
    rho_t, u_t, T_t = (np.asarray(a, dtype=float) for a in (rho_t, u_t, T_t))
    return np.stack([rho_t,
                     rho_t * u + r * u_t,
                     rho_t * (u * u + T) + 2 * r * u * u_t + r * T_t])


def state_from_moments(m: np.ndarray, params: MaxwellianParams) -> AcousticState:
    r, u, T = params.rho, params.u, params.temp
    rho_t = m[0]
    u_t = (m[1] - rho_t * u) / r
    T_t = (m[2] - rho_t * (u * u + T) - 2 * r * u * u_t) / r
    return AcousticState(rho_t, u_t, T_t, params)


def linearized_moments(f: np.ndarray, op: CollisionOperator) -> AcousticState:
    """(rho~, u~, T~) per x from the M_*-weighted moments of an original-frame field."""
    if op.frame != "star":
        raise ValueError("linearized moments need the original-frame (star) operator")
    return state_from_moments(op.moments(f).T, op.params)


def acoustic_matrix(params: MaxwellianParams) -> np.ndarray:
    r, u, T = params.rho, params.u, params.temp
    return np.array([[u, r, 0.0],
                     [T / r, u, 1.0],
                     [0.0, 2 * T, u]])


@dataclass
class AcousticResidual:
    knudsen: float
    times: np.ndarray
    residual: np.ndarray
    relative: np.ndarray

    @property
    def mean_relative(self) -> float:
        return float(np.mean(self.relative)) if self.relative.size else 0.0


def acoustic_limit_residual(grid: PhaseGrid, op: CollisionOperator, initial: np.ndarray,
                            knudsen: float, t_end: float, cfg: SolverConfig | None = None,
                            ) -> AcousticResidual:
    """||dU/dt + A dU/dx|| along an original-frame run at the given Knudsen number.

    dU/dt comes from second-order differences of the sampled moment
    profiles, dU/dx from the periodic central difference.  The relative
    residual divides by ||A dU/dx||; both exclude the two end samples.
    """
    cfg = replace(cfg or SolverConfig(scheme="muscl"), t_end=t_end, knudsen=knudsen,
                  sample_every=(cfg.sample_every if cfg and cfg.sample_every else 1))
    profiles: list[np.ndarray] = []
    series, _ = solve(DistributionField(initial, grid, "original_f"), cfg, op, FrameSpec.original(),
                      on_sample=lambda t, d: profiles.append(linearized_moments(d, op).as_array()))
    U = np.array(profiles)  # (n_t, 3, n_x)
    t = series.times
    if len(t) < 3:
        raise ValueError("need at least three samples for the time derivative")
    dUdt = np.gradient(U, t, axis=0, edge_order=2)
    A = acoustic_matrix(op.params)
    dx = grid.x.spacing
    dUdx = (np.roll(U, -1, axis=2) - np.roll(U, 1, axis=2)) / (2 * dx)
    flux = np.einsum("ij,tjx->tix", A, dUdx)
    res = dUdt + flux
    absn = np.sqrt(dx * np.sum(res**2, axis=(1, 2)))
    ref = np.sqrt(dx * np.sum(flux**2, axis=(1, 2)))
    rel = np.divide(absn, ref, out=np.zeros_like(absn), where=ref > 0)
    inner = slice(1, -1)
    return AcousticResidual(knudsen, t[inner], absn[inner], rel[inner])


# -- operator properties -----------------------------------------------------

@dataclass
class CollisionPropertyReport:
    frame: str
    coercivity_max: float
    self_adjoint_defect: float
    null_space_max: float
    conservation_max: float
    spectral_form_max: float
    contraction_max: float
    paper_bound_max: float
    norm_equivalence: float


def collision_properties(op: CollisionOperator, n_fields: int = 1000, seed: int = 0
                         ) -> CollisionPropertyReport:
    """Random-field audit of the collision operator's structural identities."""
    rng = np.random.default_rng(seed)
    n_v = op.grid.n_v
    f = rng.standard_normal((n_fields, n_v))
    g = rng.standard_normal((n_fields, n_v))
    Lf, Lg = op.apply(f), op.apply(g)
    nf = np.sqrt(op.inner(f, f))
    ng = np.sqrt(op.inner(g, g))
    coerc = float(np.max(op.inner(Lf, f)))
    sadj = float(np.max(np.abs(op.inner(Lf, g) - op.inner(f, Lg)) / (nf * ng)))
    v = op.grid.nodes
    phi = np.stack([np.ones_like(v), v, v * v])
    null = float(np.max(np.abs(op.apply(phi))))
    cons = float(np.max(np.abs(op.moments(Lf))))
    chi = op.basis.chi
    spectral = float(np.max(np.abs(op.apply(chi[3:]) + chi[3:]))) if chi.shape[0] > 3 else 0.0
    nLf = np.sqrt(op.inner(Lf, Lf))
    contraction = float(np.max(nLf / nf))
    # <Lp, Lp> <= d <p, p> with d = 1, as a ratio
    bound = float(np.max(op.inner(Lf, Lf) / (1.0 * nf**2)))
    return CollisionPropertyReport(op.frame, coerc, sadj, null, cons, spectral, contraction, bound,
                                   norm_equivalence_factor(op.params, op.grid))


# -- manufactured solutions --------------------------------------------------

@dataclass
class MMSResult:
    n_x: list[int]
    errors: list[float]

    @property
    def orders(self) -> list[float]:
        e = self.errors
        return [float(np.log2(e[i] / e[i + 1])) for i in range(len(e) - 1)]


def mms_convergence(levels: Sequence[tuple[int, int]] = ((32, 33), (64, 65), (128, 129)),
                    params: MaxwellianParams | None = None, scheme: str = "muscl",
                    limiter: str = "minmod", t_end: float = 1.0, knudsen: float = 1.0,
                    n_sigma: float = 6.0, cfl_safety: float = 0.5) -> MMSResult:
    """Forced problem with exact solution (sin(x - t) + cos(2x + t)/2) psi(v).

    Refines n_x and n_v together; dt follows from the CFL so it halves too.
    The error is the L2(M dx dv) distance to the exact solution at t_end.
    """
    params = params or MaxwellianParams()
    frame = FrameSpec.original()
    errors = []
    for n_x, n_v in levels:
        vg = default_velocity_grid(params, "star", n_v, n_sigma)
        op = build_operator(params, vg, "star")
        grid = PhaseGrid(build_spatial_grid(n_x, 2 * np.pi), vg)
        X, V = grid.mesh()
        xi = (V - params.u) / np.sqrt(params.temp)
        psi = np.exp(-((xi - 0.3) ** 2) / 2) * (1 + 0.2 * xi)
        Lpsi = op.apply(psi[0])[None, :]
        a = frame.advection(V)

        def phi(t):
            return np.sin(X - t) + 0.5 * np.cos(2 * X + t)

        def src(t):
            dt_phi = -np.cos(X - t) - 0.5 * np.sin(2 * X + t)
            dx_phi = np.cos(X - t) - np.sin(2 * X + t)
            return (dt_phi + a * dx_phi) * psi - phi(t) * Lpsi / knudsen

        cfg = SolverConfig(t_end=t_end, knudsen=knudsen, cfl_safety=cfl_safety,
                           scheme=scheme, limiter=limiter)
        _, fin = solve(DistributionField(phi(0.0) * psi, grid), cfg, op, frame, src_provider=src)
        errors.append(field_norm(fin.data - phi(t_end) * psi, grid, op))
    return MMSResult([lv[0] for lv in levels], errors)


# -- scaled-frame residual ---------------------------------------------------

@dataclass
class ResidualResult:
    n_x: list[int]
    relative: list[float]

    @property
    def orders(self) -> list[float]:
        r = self.relative
        return [float(np.log2(r[i] / r[i + 1])) for i in range(len(r) - 1)]


def scaled_frame_residual(params: MaxwellianParams, profile: Callable[[PhaseGrid, CollisionOperator], np.ndarray],
                          n_x_levels: Sequence[int], n_v: int, length: float, t_probe: float,
                          knudsen: float = 1.0, n_sigma: float = 8.0, cfl_safety: float = 0.5
                          ) -> ResidualResult:
    """Relative residual of sqrt(T) v dp/dx - (L_1 p / Kn - dp/dt) on scaled-frame runs.

    dp/dt is the central difference of three consecutive steps around
    t_probe, dp/dx the periodic central difference.  The residual measures
    the scheme's truncation error, so it shrinks with n_x at the scheme order.
    """
    temp = params.temp
    frame = FrameSpec.scaled(temp)
    vg = default_velocity_grid(params, "unit", n_v, n_sigma)
    op = build_operator(params, vg, "unit", extra_modes=2)
    rel = []
    for n_x in n_x_levels:
        grid = PhaseGrid(build_spatial_grid(n_x, length), vg)
        speeds = frame.advection(vg.nodes)
        base = SolverConfig(knudsen=knudsen, cfl_safety=cfl_safety)
        dt = base.resolve_dt(grid.x.spacing, float(np.max(np.abs(speeds))))
        n = int(np.ceil(t_probe / dt - 1e-9))
        dt = t_probe / n
        cfg = replace(base, dt=dt, t_end=t_probe + dt, sample_every=1)
        snaps: list[np.ndarray] = []
        solve(DistributionField(profile(grid, op), grid, "scaled_p"), cfg, op, frame,
              on_sample=lambda t, d: snaps.append(d.copy()))
        prev, mid, nxt = snaps[-3], snaps[-2], snaps[-1]
        dpdt = (nxt - prev) / (2 * dt)
        dx = grid.x.spacing
        adv = speeds * (np.roll(mid, -1, axis=0) - np.roll(mid, 1, axis=0)) / (2 * dx)
        res = adv - (op.apply(mid) / knudsen - dpdt)
        rel.append(field_norm(res, grid, op) / field_norm(adv, grid, op))
    return ResidualResult(list(n_x_levels), rel)
