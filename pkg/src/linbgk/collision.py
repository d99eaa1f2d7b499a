"""Linearized BGK collision operator L = Pi - I as a weighted projection defect."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .phase_grid import (
    DIM,
    CollisionBasis,
    GridMismatchError,
    MaxwellianParams,
    VelocityGrid,
    build_collision_basis,
    build_velocity_grid,
    weight_vector,
)

FRAMES = ("star", "zero_mean", "unit")


@dataclass(frozen=True)
class CollisionOperator:
    basis: CollisionBasis
    frame: str = "star"
    _proj: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.frame not in FRAMES:
            raise ValueError(f"unknown collision frame {self.frame!r}")
        chi = self.basis.chi[:DIM]
        w = weight_vector(self.basis.params, self.basis.grid)
        # row-vector form: project(f) = f @ proj
        proj = (w[:, None] * chi.T) @ chi
        proj.setflags(write=False)
        object.__setattr__(self, "_proj", proj)

    @property
    def params(self) -> MaxwellianParams:
        return self.basis.params

    @property
    def grid(self) -> VelocityGrid:
        return self.basis.grid

    @property
    def weights(self) -> np.ndarray:
        return weight_vector(self.params, self.grid)

    def _check(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape[-1] != self.grid.n_v:
            raise GridMismatchError(
                f"field has {f.shape[-1]} velocity nodes, operator expects {self.grid.n_v}")
        return f

    def project(self, f) -> np.ndarray:
        return self._check(f) @ self._proj

    def apply(self, f) -> np.ndarray:
        f = self._check(f)
        return f @ self._proj - f

    def inner(self, a, b):
        return np.sum(np.asarray(a) * np.asarray(b) * self.weights, axis=-1)

    def moments(self, f) -> np.ndarray:
        """Weighted moments (<1,f>, <v,f>, <v^2,f>) along the last axis."""
        f = self._check(f)
        v = self.grid.nodes
        phi = np.stack([np.ones_like(v), v, v * v])
        return f @ (phi * self.weights).T

    def relax(self, f, dt: float, knudsen: float = 1.0, src=None) -> np.ndarray:
        """Exact flow of df/dt = L f / Kn + src over dt, src held constant.

        exp(t L / Kn) = Pi + exp(-t / Kn) (I - Pi), so the source integrates to
        dt Pi src + Kn (1 - exp(-dt / Kn)) (I - Pi) src.
        """
        f = self._check(f)
        decay = np.exp(-dt / knudsen)
        pf = f @ self._proj
        out = pf + decay * (f - pf)
        if src is not None:
            src = self._check(src)
            ps = src @ self._proj
            out = out + dt * ps + knudsen * (-np.expm1(-dt / knudsen)) * (src - ps)
        return out


def project(op: CollisionOperator, f) -> np.ndarray:
    return op.project(f)


def apply(op: CollisionOperator, f) -> np.ndarray:
    return op.apply(f)


def moments_weighted(op: CollisionOperator, f) -> np.ndarray:
    return op.moments(f)


def build_operator(params: MaxwellianParams, grid: VelocityGrid,
                   frame: str = "star", extra_modes: int = 0) -> CollisionOperator:
    """Operator for one of the three weight frames.

    star: Maxwellian (rho, u, T) as given; zero_mean: (rho, 0, T); unit: (rho, 0, 1).
    """
    if frame == "zero_mean":
        params = MaxwellianParams(params.rho, 0.0, params.temp)
    elif frame == "unit":
        params = MaxwellianParams(params.rho, 0.0, 1.0)
    elif frame != "star":
        raise ValueError(f"unknown collision frame {frame!r}")
    basis = build_collision_basis(params, grid, extra_modes, weight_frame=frame)
    return CollisionOperator(basis, frame)


def default_velocity_grid(params: MaxwellianParams, frame: str, n_v: int,
                          n_sigma: float = 8.0) -> VelocityGrid:
    """Velocity grid centred on the Maxwellian mean of the given frame."""
    if frame == "star":
        return build_velocity_grid(n_v, params.u, params.temp, n_sigma)
    if frame == "zero_mean":
        return build_velocity_grid(n_v, 0.0, params.temp, n_sigma)
    if frame == "unit":
        return build_velocity_grid(n_v, 0.0, 1.0, n_sigma)
    raise ValueError(f"unknown collision frame {frame!r}")
