"""Strang-split solver for  dw/dt + a(v) dw/dx = L w / Kn + S  on a periodic grid.

Transport is a conservative upwind (or MUSCL) update per velocity slice, the
collision/source part is integrated exactly through the projection structure
of L.  Fields are arrays of shape (n_x, n_v).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator

from .collision import CollisionOperator
from .phase_grid import GridMismatchError, PhaseGrid, VelocityGrid
from .series import NormSeries, SeriesRecorder

FRAME_KINDS = ("original_f", "shifted_g", "scaled_p")
_COLLISION_FRAME = {"original_f": "star", "shifted_g": "zero_mean", "scaled_p": "unit"}


class CFLError(ValueError):
    pass


class NumericalAbort(FloatingPointError):
    """Raised when a step produces non-finite values; carries the last valid field."""

    def __init__(self, message: str, last_valid: DistributionField | None = None):
        super().__init__(message)
        self.last_valid = last_valid


@dataclass(frozen=True)
class FrameSpec:
    """Velocity frame: fixes the advection speed a(v) and the collision weight.

    original_f: a(v) = v,            operator with Maxwellian (rho, u, T)
    shifted_g:  a(v) = v + u_star,   operator with Maxwellian (rho, 0, T)
    scaled_p:   a(v) = sqrt(T) v,    operator with Maxwellian (rho, 0, 1)
    """

    kind: str = "original_f"
    u_star: float = 0.0
    temp_star: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in FRAME_KINDS:
            raise ValueError(f"unknown frame kind {self.kind!r}")
        if self.temp_star <= 0:
            raise ValueError("temp_star must be positive")

    @classmethod
    def original(cls) -> FrameSpec:
        return cls("original_f")

    @classmethod
    def shifted(cls, u_star: float) -> FrameSpec:
        return cls("shifted_g", u_star=u_star)

    @classmethod
    def scaled(cls, temp_star: float) -> FrameSpec:
        return cls("scaled_p", temp_star=temp_star)

    @property
    def collision_frame(self) -> str:
        return _COLLISION_FRAME[self.kind]

    def advection(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if self.kind == "shifted_g":
            return v + self.u_star
        if self.kind == "scaled_p":
            return np.sqrt(self.temp_star) * v
        return v.copy()


@dataclass(frozen=True)
class DistributionField:
    data: np.ndarray = field(repr=False)
    grid: PhaseGrid
    frame: str = "original_f"
    order: int = 0
    time: float = 0.0

    def __post_init__(self) -> None:
        if self.data.shape != self.grid.shape:
            raise GridMismatchError(f"data {self.data.shape} does not match grid {self.grid.shape}")
        if self.frame not in FRAME_KINDS:
            raise ValueError(f"unknown frame kind {self.frame!r}")

    def with_data(self, data: np.ndarray, time: float | None = None) -> DistributionField:
        return replace(self, data=data, time=self.time if time is None else time)


@dataclass(frozen=True)
class SolverConfig:
    dt: float | None = None
    t_end: float = 1.0
    knudsen: float = 1.0
    cfl_safety: float = 0.5
    scheme: str = "upwind"
    limiter: str = "minmod"
    sample_every: int | None = None

    def __post_init__(self) -> None:
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be >= 0")
        if not self.knudsen > 0:
            raise ValueError("knudsen must be positive")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must lie in (0, 1]")
        if self.scheme not in ("upwind", "muscl"):
            raise ValueError(f"unknown transport scheme {self.scheme!r}")
        if self.limiter not in LIMITERS:
            raise ValueError(f"unknown limiter {self.limiter!r}")

    def max_dt(self, dx: float, max_speed: float) -> float:
        return math.inf if max_speed == 0 else self.cfl_safety * dx / max_speed

    def resolve_dt(self, dx: float, max_speed: float) -> float:
        limit = self.max_dt(dx, max_speed)
        if self.dt is None:
            if not math.isfinite(limit):
                raise CFLError("cannot derive dt from CFL with zero advection speed")
            return limit
        if self.dt > limit * (1 + 1e-12):
            raise CFLError(f"dt = {self.dt:.6g} violates CFL limit {limit:.6g}")
        return self.dt

    def n_steps(self, dt: float) -> int:
        return int(math.ceil(self.t_end / dt - 1e-9)) if self.t_end > 0 else 0

    def sample_stride(self, dt: float) -> int:
        if self.sample_every is not None:
            return max(1, int(self.sample_every))
        return max(1, int(self.t_end // (500 * dt)))


# -- spatial differences -----------------------------------------------------

def backward_diff(w: np.ndarray, dx: float) -> np.ndarray:
    return (w - np.roll(w, 1, axis=-2)) / dx


def forward_diff(w: np.ndarray, dx: float) -> np.ndarray:
    return (np.roll(w, -1, axis=-2) - w) / dx


def central_diff(w: np.ndarray, dx: float) -> np.ndarray:
    return (np.roll(w, -1, axis=-2) - np.roll(w, 1, axis=-2)) / (2 * dx)


def upwind_diff(w: np.ndarray, speeds: np.ndarray, dx: float) -> np.ndarray:
    """Per-slice one-sided difference oriented by the sign of the speed.

    Slices with zero speed get the central difference (the mean of both
    one-sided derivatives of the upwind update with respect to the speed).
    """
    speeds = np.broadcast_to(np.asarray(speeds, dtype=float), w.shape[-1:])
    out = np.empty_like(w, dtype=float)
    for mask, diff in ((speeds > 0, backward_diff), (speeds < 0, forward_diff),
                       (speeds == 0, central_diff)):
        if np.any(mask):
            out[..., mask] = diff(w[..., mask], dx)
    return out


# -- transport ---------------------------------------------------------------

def _minmod(a, b):
    return np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def _vanleer(a, b):
    prod = a * b
    return np.where(prod > 0, 2 * prod / np.where(prod > 0, a + b, 1.0), 0.0)


def _mc(a, b):
    return np.where(a * b > 0, np.sign(a) * np.minimum.reduce(
        [2 * np.abs(a), 2 * np.abs(b), 0.5 * np.abs(a + b)]), 0.0)


LIMITERS = {"minmod": _minmod, "vanleer": _vanleer, "mc": _mc}


def _muscl_rhs(w: np.ndarray, speeds: np.ndarray, dx: float, limiter) -> np.ndarray:
    dminus = w - np.roll(w, 1, axis=-2)
    dplus = np.roll(w, -1, axis=-2) - w
    slope = limiter(dminus, dplus)
    left = w + 0.5 * slope  # state left of face i+1/2
    right = np.roll(w - 0.5 * slope, -1, axis=-2)  # state right of face i+1/2
    flux = np.where(speeds >= 0, speeds * left, speeds * right)
    return -(flux - np.roll(flux, 1, axis=-2)) / dx


def _upwind_coefficients(c: np.ndarray, orientation: np.ndarray) -> tuple[np.ndarray, ...]:
    back = np.where(orientation > 0, c, 0.0)
    fwd = np.where(orientation < 0, c, 0.0)
    cen = np.where(orientation == 0, c, 0.0)
    return back, fwd, cen


def transport_substep(w: np.ndarray, tau: float, speeds: np.ndarray, dx: float,
                      scheme: str = "upwind", limiter: str = "minmod",
                      orientation: np.ndarray | None = None) -> np.ndarray:
    """Advance dw/dt + a dw/dx = 0 by tau, conservatively, slice by slice.

    ``orientation`` (upwind scheme only) holds reference speeds whose signs
    pick the stencil; by default the speeds themselves.  Freezing it at a
    nominal parameter value keeps the update affine in the speed.
    """
    speeds = np.asarray(speeds, dtype=float)
    amax = float(np.max(np.abs(speeds))) if speeds.size else 0.0
    if amax * tau > dx * (1 + 1e-12):
        raise CFLError(f"transport CFL number {amax * tau / dx:.4g} exceeds 1")
    if scheme == "upwind":
        c = tau / dx * speeds
        if orientation is None:
            back, fwd, cen = np.maximum(c, 0.0), np.minimum(c, 0.0), None
        else:
            back, fwd, cen = _upwind_coefficients(c, np.asarray(orientation, dtype=float))
        out = w * (1.0 - back + fwd)
        out[..., 1:, :] += back * w[..., :-1, :]
        out[..., 0, :] += back * w[..., -1, :]
        out[..., :-1, :] -= fwd * w[..., 1:, :]
        out[..., -1, :] -= fwd * w[..., 0, :]
        if cen is not None and np.any(cen):
            out -= 0.5 * cen * (np.roll(w, -1, axis=-2) - np.roll(w, 1, axis=-2))
        return out
    if scheme == "muscl":
        lim = LIMITERS[limiter]
        w1 = w + tau * _muscl_rhs(w, speeds, dx, lim)
        return 0.5 * w + 0.5 * (w1 + tau * _muscl_rhs(w1, speeds, dx, lim))
    raise ValueError(f"unknown transport scheme {scheme!r}")


# -- time stepping -----------------------------------------------------------

def _check_op(grid: PhaseGrid, op: CollisionOperator) -> None:
    if op.grid != grid.v:
        raise GridMismatchError("collision operator velocity grid differs from the field's grid")


def _strang(data: np.ndarray, dt: float, speeds: np.ndarray, dx: float, cfg: SolverConfig,
            op: CollisionOperator, src: np.ndarray | None,
            orientation: np.ndarray | None = None) -> np.ndarray:
    half = 0.5 * dt
    out = transport_substep(data, half, speeds, dx, cfg.scheme, cfg.limiter, orientation)
    out = op.relax(out, dt, cfg.knudsen, src)
    return transport_substep(out, half, speeds, dx, cfg.scheme, cfg.limiter, orientation)


def step(w: DistributionField, cfg: SolverConfig, op: CollisionOperator, frame: FrameSpec,
         src: np.ndarray | None = None, dt: float | None = None) -> DistributionField:
    """One Strang step: half transport, exact collision with source, half transport.

    ``src`` is the source evaluated at the midpoint of the step.
    """
    _check_op(w.grid, op)
    speeds = frame.advection(w.grid.v.nodes)
    dx = w.grid.x.spacing
    if dt is None:
        dt = cfg.resolve_dt(dx, float(np.max(np.abs(speeds))))
    elif dt > cfg.max_dt(dx, float(np.max(np.abs(speeds)))) * (1 + 1e-12):
        raise CFLError(f"dt = {dt:.6g} violates the CFL limit")
    if src is not None and np.shape(src) != w.grid.shape:
        raise GridMismatchError("source field does not match the grid")
    out = _strang(w.data, dt, speeds, dx, cfg, op, src)
    if not np.all(np.isfinite(out)):
        raise NumericalAbort(f"non-finite values after step at t = {w.time + dt:.6g}", w)
    return w.with_data(out, w.time + dt)


def field_norm(data: np.ndarray, grid: PhaseGrid, op: CollisionOperator) -> float:
    """L2(M dx dv) norm with the frame Maxwellian of ``op``."""
    return float(np.sqrt(grid.x.spacing * np.sum((data * data) @ op.weights)))


def integrated_moments(data: np.ndarray, grid: PhaseGrid, op: CollisionOperator) -> np.ndarray:
    return grid.x.spacing * op.moments(data).sum(axis=-2)


def solve(initial: DistributionField, cfg: SolverConfig, op: CollisionOperator,
          frame: FrameSpec,
          src_provider: Callable[[float], np.ndarray | None] | None = None,
          envelopes: dict[str, Callable[[float], float]] | None = None,
          diagnostics: dict[str, Callable[[np.ndarray], float]] | None = None,
          on_sample: Callable[[float, np.ndarray], None] | None = None,
          upwind_reference: FrameSpec | None = None,
          ) -> tuple[NormSeries, DistributionField]:
    """Integrate to cfg.t_end, sampling norms, moments and envelopes.

    The step count is ceil(t_end / dt) with the step shrunk to land on t_end.
    ``upwind_reference`` freezes the upwind orientation to another frame's
    speeds (used by the z-collocation runs).
    """
    _check_op(initial.grid, op)
    grid = initial.grid
    speeds = frame.advection(grid.v.nodes)
    orientation = None if upwind_reference is None else upwind_reference.advection(grid.v.nodes)
    dx = grid.x.spacing
    dt_max = cfg.resolve_dt(dx, float(np.max(np.abs(speeds)))) if cfg.t_end > 0 else 0.0
    n = cfg.n_steps(dt_max) if cfg.t_end > 0 else 0
    dt = cfg.t_end / n if n else 0.0
    stride = cfg.sample_stride(dt) if n else 1
    rec = SeriesRecorder()
    envelopes = envelopes or {}
    diagnostics = diagnostics or {}

    def sample(t: float, data: np.ndarray) -> None:
        rec.add(t, {initial.order: field_norm(data, grid, op)},
                integrated_moments(data, grid, op),
                {k: fn(t) for k, fn in envelopes.items()},
                {k: fn(data) for k, fn in diagnostics.items()})
        if on_sample is not None:
            on_sample(t, data)

    data = np.array(initial.data, dtype=float)
    t0 = initial.time
    sample(t0, data)
    for k in range(1, n + 1):
        t = t0 + (k - 1) * dt
        src = src_provider(t + 0.5 * dt) if src_provider is not None else None
        new = _strang(data, dt, speeds, dx, cfg, op, src, orientation)
        if not np.all(np.isfinite(new)):
            raise NumericalAbort(f"non-finite values at t = {t + dt:.6g}",
                                 initial.with_data(data, t))
        data = new
        if k % stride == 0 or k == n:
            sample(t0 + k * dt, data)
    return rec.finish(), initial.with_data(data, t0 + n * dt)


# -- frame transforms --------------------------------------------------------

def _resample(data: np.ndarray, src: VelocityGrid, query: np.ndarray) -> np.ndarray:
    nodes = src.nodes
    tol = 1e-12 * max(1.0, abs(src.v_min), abs(src.v_max))
    if query.min() < nodes[0] - tol or query.max() > nodes[-1] + tol:
        raise ValueError(
            f"frame transform needs values on [{query.min():.6g}, {query.max():.6g}], "
            f"outside the source grid [{nodes[0]:.6g}, {nodes[-1]:.6g}]")
    query = np.clip(query, nodes[0], nodes[-1])
    return PchipInterpolator(nodes, data, axis=-1)(query)


def frame_transform_shift(data: np.ndarray, u_star: float, src: VelocityGrid,
                          dst: VelocityGrid | None = None) -> tuple[np.ndarray, VelocityGrid]:
    """g(v) = f(v + u_star): the field seen from the frame moving with u_star.

    This is the substitution under which the original equation turns into
    dg/dt + (v + u_star) dg/dx = L_0 g.  Values are obtained by monotone
    cubic interpolation; the default target grid is the source grid moved by
    -u_star, on which no interpolation error occurs.  Use u_star -> -u_star
    for the inverse map.
    """
    if dst is None:
        dst = VelocityGrid(src.n_v, src.v_min - u_star, src.v_max - u_star)
    return _resample(np.asarray(data, dtype=float), src, dst.nodes + u_star), dst


def frame_transform_scale(data: np.ndarray, temp_star: float, src: VelocityGrid,
                          dst: VelocityGrid | None = None) -> tuple[np.ndarray, VelocityGrid]:
    """p(v) = f(sqrt(T) v), turning the T-Maxwellian into the unit one.

    The inverse map is the same transform with 1 / T.
    """
    if temp_star <= 0:
        raise ValueError("temp_star must be positive")
    s = np.sqrt(temp_star)
    if dst is None:
        dst = VelocityGrid(src.n_v, src.v_min / s, src.v_max / s)
    return _resample(np.asarray(data, dtype=float), src, dst.nodes * s), dst
