"""Phase-space discretization: periodic x grid, truncated v grid, Maxwellian
weights and the discretely orthonormal collision basis."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

DIM = 3  # d + 2 collision invariants in 1D: 1, v, v^2


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class SpatialGrid:
    """Periodic cell-centred grid on [0, length)."""

    n_x: int
    length: float

    def __post_init__(self) -> None:
        if int(self.n_x) != self.n_x or self.n_x < 4:
            raise ValueError(f"n_x must be an integer >= 4, got {self.n_x}")
        if not np.isfinite(self.length) or self.length <= 0:
            raise ValueError(f"length must be positive, got {self.length}")

    @property
    def spacing(self) -> float:
        return self.length / self.n_x

    @property
    def nodes(self) -> np.ndarray:
        return (np.arange(self.n_x) + 0.5) * self.spacing


@dataclass(frozen=True)
class VelocityGrid:
    """Equispaced velocity nodes with composite trapezoid weights."""

    n_v: int
    v_min: float
    v_max: float

    def __post_init__(self) -> None:
        if int(self.n_v) != self.n_v or self.n_v < 3:
            raise ValueError(f"n_v must be an integer >= 3, got {self.n_v}")
        if not self.v_min < self.v_max:
            raise ValueError("v_min must be smaller than v_max")

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.v_min, self.v_max, self.n_v)

    @property
    def spacing(self) -> float:
        return (self.v_max - self.v_min) / (self.n_v - 1)

    @property
    def quad_weights(self) -> np.ndarray:
        w = np.full(self.n_v, self.spacing)
        w[0] = w[-1] = 0.5 * self.spacing
        return w

    @property
    def center(self) -> float:
        return 0.5 * (self.v_min + self.v_max)


@dataclass(frozen=True)
class PhaseGrid:
    x: SpatialGrid
    v: VelocityGrid

    @property
    def shape(self) -> tuple[int, int]:
        return (self.x.n_x, self.v.n_v)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x.nodes, self.v.nodes, indexing="ij")


def build_spatial_grid(n_x: int, length: float) -> SpatialGrid:
    return SpatialGrid(n_x, float(length))


def build_velocity_grid(n_v: int, center: float = 0.0, temp: float = 1.0,
                        n_sigma: float = 8.0) -> VelocityGrid:
    """Grid symmetric about ``center`` covering ``n_sigma`` thermal widths."""
    if temp <= 0 or n_sigma <= 0:
        raise ValueError("temp and n_sigma must be positive")
    half = n_sigma * np.sqrt(temp)
    return VelocityGrid(n_v, center - half, center + half)


@dataclass(frozen=True)
class MaxwellianParams:
    """Linearization Maxwellian (rho, u, temp) at z = 0 plus its affine z-family.

    u(z) = u + eps_u * z and temp(z) = temp + eps_T * z; ``z_range`` is the
    admissible interval over which temp(z) must stay positive.
    """

    rho: float = 1.0
    u: float = 0.0
    temp: float = 1.0
    eps_u: float = 0.0
    eps_T: float = 0.0
    z_range: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self) -> None:
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        lo, hi = self.z_range
        if lo > hi:
            raise ValueError("z_range must be ordered")
        for z in (0.0, lo, hi):
            if not self.temp_at(z) > 0:
                raise ValueError(f"temperature T(z={z}) = {self.temp_at(z)} is not positive")

    def u_at(self, z: float) -> float:
        return self.u + self.eps_u * z

    def temp_at(self, z: float) -> float:
        return self.temp + self.eps_T * z

    def at(self, z: float) -> MaxwellianParams:
        """Frozen parameters at z (the family is re-centred at that point)."""
        self.check_z(z)
        lo, hi = self.z_range
        return replace(self, u=self.u_at(z), temp=self.temp_at(z), z_range=(lo - z, hi - z))

    def check_z(self, z: float) -> None:
        lo, hi = self.z_range
        if not lo - 1e-14 <= z <= hi + 1e-14:
            raise ValueError(f"z = {z} outside admissible range {self.z_range}")

    def u_derivative(self, n: int) -> float:
        """n-th z-derivative of u(z) (affine family)."""
        if n == 0:
            return self.u
        return self.eps_u if n == 1 else 0.0

    def sqrt_temp_derivative(self, n: int, z: float = 0.0) -> float:
        """n-th z-derivative of sqrt(T(z)), closed form."""
        temp = self.temp_at(z)
        if temp <= 0:
            raise ValueError(f"T(z={z}) = {temp} is not positive")
        coef = 1.0
        for k in range(n):
            coef *= 0.5 - k
        return coef * self.eps_T**n * temp ** (0.5 - n)


def eval_maxwellian(params: MaxwellianParams, v):
    return params.rho / np.sqrt(2 * np.pi * params.temp) * np.exp(
        -((np.asarray(v) - params.u) ** 2) / (2 * params.temp))


def weight_vector(params: MaxwellianParams, grid: VelocityGrid) -> np.ndarray:
    """Quadrature weight times Maxwellian at each velocity node."""
    return grid.quad_weights * eval_maxwellian(params, grid.nodes)


def _check_v(a: np.ndarray, grid: VelocityGrid) -> None:
    if a.shape[-1] != grid.n_v:
        raise GridMismatchError(
            f"field has {a.shape[-1]} velocity nodes, grid has {grid.n_v}")


def inner_weighted(a, b, params: MaxwellianParams, grid: VelocityGrid):
    """<a, b>_* = sum_j w_j a_j b_j M(v_j), taken along the last axis."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_v(a, grid)
    _check_v(b, grid)
    return np.sum(a * b * weight_vector(params, grid), axis=-1)


def inner_xv(a: np.ndarray, b: np.ndarray, grid: PhaseGrid) -> float:
    """Unweighted discrete L2(dx dv) pairing."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != grid.shape or b.shape != grid.shape:
        raise GridMismatchError(f"fields {a.shape}, {b.shape} do not match grid {grid.shape}")
    return float(grid.x.spacing * np.sum((a * b) @ grid.v.quad_weights))


def norm_xv(a: np.ndarray, grid: PhaseGrid) -> float:
    return float(np.sqrt(inner_xv(a, a, grid)))


def inner_xv_weighted(a: np.ndarray, b: np.ndarray, grid: PhaseGrid,
                      params: MaxwellianParams) -> float:
    """Discrete L2(M dx dv) pairing, the norm in which the collision step is a contraction."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != grid.shape or b.shape != grid.shape:
        raise GridMismatchError(f"fields {a.shape}, {b.shape} do not match grid {grid.shape}")
    return float(grid.x.spacing * np.sum((a * b) @ weight_vector(params, grid.v)))


def norm_equivalence_factor(params: MaxwellianParams, grid: VelocityGrid) -> float:
    """sqrt(max M / min M) over the grid nodes.

    Since ||a||_M / sqrt(max M) <= ||a||_flat <= ||a||_M / sqrt(min M), an
    operator bound ||A a||_M <= c ||a||_M transfers to the flat norm with
    constant K * c.
    """
    m = eval_maxwellian(params, grid.nodes)
    return float(np.sqrt(m.max() / m.min()))


@dataclass(frozen=True)
class CollisionBasis:
    """Functions chi_0.. tabulated on a velocity grid, orthonormal under <.,.>_*."""

    params: MaxwellianParams
    grid: VelocityGrid
    chi: np.ndarray = field(repr=False)
    extra_modes: int = 0
    weight_frame: str = "star"
    dim: int = DIM

    @property
    def n_modes(self) -> int:
        return self.chi.shape[0]

    def gram(self) -> np.ndarray:
        w = weight_vector(self.params, self.grid)
        return (self.chi * w) @ self.chi.T


def build_collision_basis(params: MaxwellianParams, grid: VelocityGrid,
                          extra_modes: int = 0, weight_frame: str = "star",
                          rcond: float = 1e-10) -> CollisionBasis:
    """Discrete Gram-Schmidt of monomials 1, v, ..., v^(2+extra_modes).

    Monomials are taken in the centred variable (v - u)/sqrt(T); this changes
    nothing about the span but keeps the Gram matrix well conditioned.
    Reorthogonalization is done twice so orthonormality holds to round-off.
    """
    if extra_modes < 0:
        raise ValueError("extra_modes must be >= 0")
    sigma = np.sqrt(params.temp)
    if grid.v_min > params.u - 4 * sigma or grid.v_max < params.u + 4 * sigma:
        raise ValueError("velocity grid does not resolve the Maxwellian (need >= 4 sigma each side)")
    w = weight_vector(params, grid)
    xi = (grid.nodes - params.u) / sigma
    n_modes = DIM + extra_modes
    chi = np.empty((n_modes, grid.n_v))
    for m in range(n_modes):
        vec = xi**m
        ref = np.sqrt(np.sum(vec * vec * w))
        for _ in range(2):
            for k in range(m):
                vec = vec - np.sum(chi[k] * vec * w) * chi[k]
        nrm = np.sqrt(np.sum(vec * vec * w))
        if not nrm > rcond * ref:
            raise np.linalg.LinAlgError(
                f"discrete Gram matrix singular at mode {m}; velocity grid too coarse")
        chi[m] = vec / nrm
    chi.setflags(write=False)
    return CollisionBasis(params, grid, chi, extra_modes, weight_frame)
