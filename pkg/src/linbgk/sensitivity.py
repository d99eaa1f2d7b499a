"""z-derivative hierarchies of the frame solutions.

Velocity perturbations are followed in the shifted frame, where
h^(k) = d^k g / dz^k obeys the frame equation with the source

    -sum_{n=1..k} C(k, n) d^n u/dz^n  dh^(k-n)/dx,

and temperature perturbations in the scaled frame, where q^(k) = d^k p / dz^k
picks up  -sum_{m=1..k} C(k, m) d^m sqrt(T)/dz^m  v dq^(k-m)/dx.

Both sources are discretized with the upwind difference of the transport
step and injected inside each transport substep.  Because the upwind update
is affine in the advection speed, this makes the discrete hierarchy the exact
z-derivative of the discrete order-0 scheme, so finite differences in z of
independent order-0 solves converge to it at the stencil's nominal rate.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import comb
from typing import Callable, Sequence

import numpy as np

from .collision import CollisionOperator, build_operator, default_velocity_grid
from .phase_grid import MaxwellianParams, PhaseGrid, VelocityGrid
from .series import NormSeries, SeriesRecorder
from .solver import (
    CFLError,
    DistributionField,
    FrameSpec,
    NumericalAbort,
    SolverConfig,
    field_norm,
    frame_transform_shift,
    integrated_moments,
    transport_substep,
    upwind_diff,
)

PERTURBATIONS = ("velocity", "temperature")
INIT_CONVENTIONS = ("zero_in_frame", "chain_rule_from_f")


@dataclass(frozen=True)
class SensitivityStack:
    fields: tuple[np.ndarray, ...] = field(repr=False)
    grid: PhaseGrid
    params: MaxwellianParams
    perturbation: str = "velocity"
    z0: float = 0.0
    time: float = 0.0

    def __post_init__(self) -> None:
        if self.perturbation not in PERTURBATIONS:
            raise ValueError(f"unknown perturbation {self.perturbation!r}")
        if not self.fields:
            raise ValueError("a stack needs at least the order-0 field")
        for f in self.fields:
            if f.shape != self.grid.shape:
                raise ValueError("all stack fields must live on the stack grid")
        self.params.check_z(self.z0)

    @property
    def n_max(self) -> int:
        return len(self.fields) - 1

    @property
    def frame(self) -> FrameSpec:
        if self.perturbation == "velocity":
            return FrameSpec.shifted(self.params.u_at(self.z0))
        return FrameSpec.scaled(self.params.temp_at(self.z0))

    @property
    def speeds(self) -> np.ndarray:
        return self.frame.advection(self.grid.v.nodes)

    def truncated(self, n_max: int) -> SensitivityStack:
        return replace(self, fields=self.fields[: n_max + 1])


def frame_operator(params: MaxwellianParams, perturbation: str, grid: VelocityGrid,
                   z0: float = 0.0, extra_modes: int = 2) -> CollisionOperator:
    """z-independent collision operator of the frame used for ``perturbation``."""
    local = params.at(z0)
    frame = "zero_mean" if perturbation == "velocity" else "unit"
    return build_operator(local, grid, frame, extra_modes)


def frame_grid(params: MaxwellianParams, perturbation: str, n_v: int,
               n_sigma: float = 8.0, z0: float = 0.0) -> VelocityGrid:
    frame = "zero_mean" if perturbation == "velocity" else "unit"
    return default_velocity_grid(params.at(z0), frame, n_v, n_sigma)


def _coefficients(stack: SensitivityStack, k: int) -> list[float]:
    """Speed derivatives d^m a / dz^m for m = 1..k (as scalars or v-profiles)."""
    if stack.perturbation == "velocity":
        return [stack.params.u_derivative(m) for m in range(1, k + 1)]
    v = stack.grid.v.nodes
    return [stack.params.sqrt_temp_derivative(m, stack.z0) * v for m in range(1, k + 1)]


def _source(fields: Sequence[np.ndarray], stack: SensitivityStack, k: int,
            diffs: Sequence[np.ndarray] | None = None) -> np.ndarray:
    """Order-k source from the lower orders; ``diffs`` may carry their upwind differences."""
    if k < 1:
        return np.zeros(stack.grid.shape)
    if len(fields) < k:
        raise ValueError(f"order {k} source needs orders 0..{k - 1}")
    if diffs is None:
        diffs = [upwind_diff(f, stack.speeds, stack.grid.x.spacing) for f in fields[:k]]
    out = np.zeros(stack.grid.shape)
    for m, coef in enumerate(_coefficients(stack, k), start=1):
        if np.all(np.asarray(coef) == 0):
            continue
        out -= comb(k, m) * coef * diffs[k - m]
    return out


def velocity_source(stack: SensitivityStack, k: int) -> np.ndarray:
    """-sum_n C(k,n) d^n u/dz^n  D h^(k-n) at the stack's current time."""
    if stack.perturbation != "velocity":
        raise ValueError("velocity_source needs a velocity-perturbation stack")
    return _source(stack.fields, stack, k)


def temperature_source(stack: SensitivityStack, k: int) -> np.ndarray:
    """-sum_m C(k,m) d^m sqrt(T)/dz^m  v D q^(k-m) at the stack's current time."""
    if stack.perturbation != "temperature":
        raise ValueError("temperature_source needs a temperature-perturbation stack")
    return _source(stack.fields, stack, k)


def _transport_all(fields: np.ndarray, stack: SensitivityStack, tau: float) -> np.ndarray:
    """Transport substep of the whole (order, x, v) array with sources from pre-step orders."""
    speeds = stack.speeds
    dx = stack.grid.x.spacing
    out = transport_substep(fields, tau, speeds, dx, "upwind")
    if len(fields) > 1:
        diffs = upwind_diff(fields[:-1], speeds, dx)
        for k in range(1, len(fields)):
            out[k] += tau * _source(fields, stack, k, diffs)
    return out


def advance_stack(stack: SensitivityStack, cfg: SolverConfig, op: CollisionOperator,
                  dt: float | None = None) -> SensitivityStack:
    """One Strang step of every order; order k only reads orders < k."""
    if cfg.scheme != "upwind":
        raise ValueError("sensitivity stacks are advanced with the upwind scheme only")
    if op.grid != stack.grid.v:
        raise ValueError("operator and stack velocity grids differ")
    speeds = stack.speeds
    dx = stack.grid.x.spacing
    limit = cfg.max_dt(dx, float(np.max(np.abs(speeds))))
    if dt is None:
        dt = cfg.resolve_dt(dx, float(np.max(np.abs(speeds))))
    elif dt > limit * (1 + 1e-12):
        raise CFLError(f"dt = {dt:.6g} violates CFL limit {limit:.6g}")
    half = 0.5 * dt
    fields = _transport_all(np.stack(stack.fields), stack, half)
    fields = op.relax(fields, dt, cfg.knudsen)
    fields = _transport_all(fields, stack, half)
    if not np.all(np.isfinite(fields)):
        bad = int(np.argmax(~np.all(np.isfinite(fields), axis=(1, 2))))
        kind = "shifted_g" if stack.perturbation == "velocity" else "scaled_p"
        last = DistributionField(stack.fields[0], stack.grid, kind, 0, stack.time)
        raise NumericalAbort(f"non-finite order-{bad} sensitivity at t = {stack.time + dt:.6g}", last)
    return replace(stack, fields=tuple(fields), time=stack.time + dt)


def solve_stack(stack: SensitivityStack, cfg: SolverConfig, op: CollisionOperator,
                dt: float | None = None,
                envelopes: dict[str, Callable[[float], float]] | None = None,
                diagnostics: dict[str, Callable[[SensitivityStack], float]] | None = None,
                on_sample: Callable[[SensitivityStack], None] | None = None,
                ) -> tuple[NormSeries, SensitivityStack]:
    """Run the coupled hierarchy on one clock up to cfg.t_end."""
    dx = stack.grid.x.spacing
    if cfg.t_end > 0:
        dt_max = dt if dt is not None else cfg.resolve_dt(dx, float(np.max(np.abs(stack.speeds))))
        n = cfg.n_steps(dt_max)
        dt = cfg.t_end / n
        stride = cfg.sample_stride(dt)
    else:
        n, stride = 0, 1
    rec = SeriesRecorder()
    envelopes = envelopes or {}
    diagnostics = diagnostics or {}

    def sample(s: SensitivityStack) -> None:
        rec.add(s.time, {k: field_norm(w, s.grid, op) for k, w in enumerate(s.fields)},
                integrated_moments(s.fields[0], s.grid, op),
                {k: fn(s.time) for k, fn in envelopes.items()},
                {k: fn(s) for k, fn in diagnostics.items()})
        if on_sample is not None:
            on_sample(s)

    t0 = stack.time
    sample(stack)
    for k in range(1, n + 1):
        stack = advance_stack(stack, cfg, op, dt)
        # pin the clock to t0 + k dt so sample times match order-0 solves exactly
        stack = replace(stack, time=t0 + k * dt)
        if k % stride == 0 or k == n:
            sample(stack)
    return rec.finish(), stack


# -- initial data ------------------------------------------------------------

def fd_weights(offsets: Sequence[float], order: int) -> np.ndarray:
    """Finite-difference weights for the ``order``-th derivative at 0 on the given offsets."""
    offsets = np.asarray(offsets, dtype=float)
    n = offsets.size
    if order >= n:
        raise ValueError(f"{n} nodes cannot resolve a derivative of order {order}")
    vander = np.vander(offsets, n, increasing=True).T
    rhs = np.zeros(n)
    rhs[order] = float(np.prod(np.arange(1, order + 1)))
    return np.linalg.solve(vander, rhs)


def frame_initial_data(profile: Callable[[np.ndarray, np.ndarray], np.ndarray],
                       grid: PhaseGrid, params: MaxwellianParams, perturbation: str,
                       z: float) -> np.ndarray:
    """Original-frame profile f_i(x, v) seen in the z-dependent frame at z."""
    x, v = grid.mesh()
    if perturbation == "velocity":
        return profile(x, v + params.u_at(z))
    return profile(x, np.sqrt(params.temp_at(z)) * v)


def initial_stack(frame_data: np.ndarray | None, grid: PhaseGrid, params: MaxwellianParams,
                  perturbation: str, n_max: int, z0: float = 0.0,
                  init_sensitivity: str = "zero_in_frame",
                  profile: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
                  fd_step: float = 1e-2) -> SensitivityStack:
    """Build the t = 0 stack.

    zero_in_frame: ``frame_data`` is z-independent in the active frame, so all
    higher orders start at zero.  chain_rule_from_f: the original-frame
    ``profile`` is z-independent; orders >= 1 are the z-derivatives of its
    frame image, taken with a 7-point central stencil of step ``fd_step``.
    """
    if init_sensitivity not in INIT_CONVENTIONS:
        raise ValueError(f"unknown init_sensitivity {init_sensitivity!r}")
    if init_sensitivity == "zero_in_frame":
        if frame_data is None:
            raise ValueError("zero_in_frame needs frame_data")
        base = np.array(frame_data, dtype=float)
        fields = [base] + [np.zeros_like(base) for _ in range(n_max)]
    else:
        if profile is None:
            raise ValueError("chain_rule_from_f needs the original-frame profile")
        offsets = np.arange(-3, 4) * fd_step
        images = [frame_initial_data(profile, grid, params, perturbation, z0 + o) for o in offsets]
        fields = [frame_initial_data(profile, grid, params, perturbation, z0)]
        for k in range(1, n_max + 1):
            wts = fd_weights(offsets, k)
            fields.append(sum(c * im for c, im in zip(wts, images)))
    return SensitivityStack(tuple(fields), grid, params, perturbation, z0)


# -- back to the original frame ----------------------------------------------

def frame_sensitivity_convert(stack: SensitivityStack, f_grid: VelocityGrid) -> np.ndarray:
    """dz f on the original-frame velocity grid from the shifted-frame stack.

    With f(z, v) = g(z, v - u(z)):  dz f(v) = [h - du/dz dv g](v - u).
    dv is a second-order central difference, so the result carries an
    O(dv^2) error on top of whatever error h itself has.
    """
    if stack.perturbation != "velocity":
        raise ValueError("only velocity stacks have a stated original-frame conversion")
    if stack.n_max < 1:
        raise ValueError("need the order-1 sensitivity")
    g, h = stack.fields[0], stack.fields[1]
    dvg = np.gradient(g, stack.grid.v.spacing, axis=1, edge_order=2)
    in_frame = h - stack.params.u_derivative(1) * dvg
    # f-frame value at v is the g-frame value at v - u: shift by -u
    out, _ = frame_transform_shift(in_frame, -stack.params.u_at(stack.z0), stack.grid.v, f_grid)
    return out
