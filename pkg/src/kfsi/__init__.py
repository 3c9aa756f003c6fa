"""Lagrangian simulation of a viscous fluid enclosed by an elastic Koiter shell."""

from __future__ import annotations

from .boundary import BoundaryGrid, BoundaryState, build_state
from .errors import (
    ConfigError,
    DegenerateCurveError,
    InconsistentDataError,
    InvalidArgumentError,
    KfsiError,
    OrientationError,
    SingularSystemError,
    TangledMeshError,
)
from .mesh import FluidMesh, build_disk_mesh
from .shell import ShellCoefficients, ShellReference
from .solver import CoupledSystem, EnergyBudget, Forcing, SchemeParams, SolutionState

__all__ = [
    "BoundaryGrid",
    "BoundaryState",
    "build_state",
    "ConfigError",
    "DegenerateCurveError",
    "InconsistentDataError",
    "InvalidArgumentError",
    "KfsiError",
    "OrientationError",
    "SingularSystemError",
    "TangledMeshError",
    "FluidMesh",
    "build_disk_mesh",
    "ShellCoefficients",
    "ShellReference",
    "CoupledSystem",
    "EnergyBudget",
    "Forcing",
    "SchemeParams",
    "SolutionState",
]

__version__ = "0.1.0"
