from __future__ import annotations

import numpy as np
import pytest

from kfsi.boundary import BoundaryGrid
from kfsi.mesh import build_disk_mesh
from kfsi.stokes import inf_sup_constant, rigid_rotation, stokes_verification, zero_solution


def test_manufactured_triple_satisfies_stokes():
    # -nu Lap u + grad p = f and div u = 0, checked by finite differences
    man = rigid_rotation(0.7)
    x = np.array([[0.3, -0.2], [0.1, 0.5]])
    h = 1e-4
    e = np.eye(2) * h
    grad_p = np.stack(
        [(man.pressure(x + e[i]) - man.pressure(x - e[i])) / (2 * h) for i in range(2)], axis=-1
    )
    lap = sum(
        (man.velocity(x + e[i]) - 2 * man.velocity(x) + man.velocity(x - e[i])) / h**2
        for i in range(2)
    )
    assert np.allclose(-lap + grad_p, man.forcing(x), atol=1e-6)
    assert np.allclose(np.trace(man.velocity_gradient(x), axis1=-2, axis2=-1), 0.0)
    # traction-free on the unit circle
    y = np.array([[np.cos(0.4), np.sin(0.4)]])
    assert np.abs(man.traction(y, y, 1.0)).max() < 1e-15


def test_zero_data_gives_zero_solution(mesh8):
    r = stokes_verification(mesh8, 1.0, zero_solution())
    assert max(r.l2_velocity, r.h1_velocity, r.l2_pressure) < 1e-12


def test_rotation_recovered_at_discretization_accuracy(mesh8):
    r = stokes_verification(mesh8, 1.0, rigid_rotation(0.5))
    assert r.l2_velocity < 1e-4
    assert r.l2_pressure < 1e-2


def test_convergence_orders(mesh8):
    coarse = stokes_verification(mesh8, 1.0, rigid_rotation(0.5))
    fine = stokes_verification(build_disk_mesh(16, BoundaryGrid(128)), 1.0, rigid_rotation(0.5))
    assert coarse.l2_velocity / fine.l2_velocity >= 5
    assert np.log2(coarse.l2_velocity / fine.l2_velocity) >= 2.5
    assert np.log2(coarse.l2_pressure / fine.l2_pressure) >= 1.5


@pytest.mark.parametrize("nu", [0.1, 10.0])
def test_viscosity_does_not_matter_for_rigid_rotation(mesh8, nu):
    r = stokes_verification(mesh8, nu, rigid_rotation(0.5))
    assert r.l2_velocity < 1e-4


def test_inf_sup_constant(mesh8):
    assert inf_sup_constant(mesh8) > 1e-3
    assert inf_sup_constant(build_disk_mesh(4, BoundaryGrid(32))) > 1e-3
