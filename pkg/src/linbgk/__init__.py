"""Linearized BGK solver with z-sensitivity hierarchies and a verification harness."""

from .collision import CollisionOperator, build_operator
from .phase_grid import (
    MaxwellianParams,
    PhaseGrid,
    SpatialGrid,
    VelocityGrid,
    build_collision_basis,
    build_spatial_grid,
    build_velocity_grid,
)
from .sensitivity import SensitivityStack, advance_stack, initial_stack, solve_stack
from .series import NormSeries
from .solver import DistributionField, FrameSpec, SolverConfig, solve, step

__all__ = [
    "CollisionOperator", "build_operator", "MaxwellianParams", "PhaseGrid", "SpatialGrid",
    "VelocityGrid", "build_collision_basis", "build_spatial_grid", "build_velocity_grid",
    "SensitivityStack", "advance_stack", "initial_stack", "solve_stack", "NormSeries",
    "DistributionField", "FrameSpec", "SolverConfig", "solve", "step",
]
__version__ = "0.1.0"
