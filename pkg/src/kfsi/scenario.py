"""Initial configurations built from a :class:`~kfsi.config.RunConfig`.

The shell's unstressed shape is always the reference unit circle. The initial
map is ``eta_0(x) = S x (1 + sum_k eps_k Re(z^k))`` with ``z = x_1 + i x_2``
and ``S`` either ``radius * I`` or ``diag(a, b)``; on the boundary the
perturbation is the radial Fourier mode ``cos(k theta)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .boundary import BoundaryGrid
from .config import RunConfig
from .mesh import FluidMesh, build_disk_mesh
from .shell import ShellCoefficients
from .solver import CoupledSystem, SchemeParams, SolutionState


def initial_map(
    x: NDArray,
    shape: str = "circle",
    radius: float = 1.0,
    semi_axes: tuple[float, float] = (1.0, 1.0),
    modes: tuple[tuple[int, float], ...] = (),
) -> NDArray[np.float64]:
    z = x[:, 0] + 1j * x[:, 1]
    factor = np.ones(len(x))
    for k, eps in modes:
        factor += eps * np.real(z**k)
    scale = np.array([radius, radius]) if shape == "circle" else np.asarray(semi_axes, float)
    return (x * scale) * factor[:, None]


def rotation_field(eta: NDArray, omega: float) -> NDArray[np.float64]:
    """``omega (-y_2, y_1)`` evaluated at the current positions."""
    return omega * np.stack([-eta[:, 1], eta[:, 0]], axis=1)


@dataclass(eq=False)
class Scenario:
    mesh: FluidMesh
    system: CoupledSystem
    initial: SolutionState
    params: SchemeParams


def scheme_params(config: RunConfig) -> SchemeParams:
    return SchemeParams(
        dt=config.dt,
        nu=config.nu,
        shell=ShellCoefficients(config.c_mem, config.c_ben, config.kappa),
        fixed_point_tol=config.fixed_point_tol,
        fixed_point_max_iters=config.fixed_point_max_iters,
        forcing=config.forcing,
    )


def build_scenario(config: RunConfig) -> Scenario:
    mesh = build_disk_mesh(config.n_rings, BoundaryGrid(config.N))
    system = CoupledSystem(mesh)
    x = mesh.nodes
    eta = initial_map(x, config.shape, config.radius, config.semi_axes, config.modes)
    velocity = None
    if config.initial_velocity == "rotation":
        velocity = rotation_field(eta, config.omega)
    return Scenario(mesh, system, system.make_state(eta, velocity), scheme_params(config))
