from __future__ import annotations

import logging

import numpy as np
import pytest

from kfsi.errors import InvalidArgumentError, TangledMeshError
from kfsi.mesh import evaluate_at_quadrature, update_deformation
from kfsi.scenario import initial_map, rotation_field
from kfsi.shell import ShellCoefficients
from kfsi.solver import (
    Forcing,
    SchemeParams,
    assemble_divergence_block,
    assemble_pressure_mass,
    assemble_viscous_block,
    eulerian_gradients,
)


def _flat(v):
    return np.concatenate([v[:, 0], v[:, 1]])


def _perturbed(system, eps=0.05):
    return initial_map(system.mesh.nodes, modes=((2, eps),))


def test_viscous_block_kills_rotation(mesh8):
    d = update_deformation(mesh8, mesh8.nodes)
    K = assemble_viscous_block(mesh8, d, 1.0)
    v = _flat(rotation_field(mesh8.nodes, 1.0))
    assert abs(v @ (K @ v)) < 1e-12
    assert np.abs(K @ v).max() < 1e-12


def test_viscous_block_closed_form(mesh8):
    nu = 0.7
    K = assemble_viscous_block(mesh8, update_deformation(mesh8, mesh8.nodes), nu)
    x = mesh8.nodes
    v = _flat(np.stack([x[:, 0], -x[:, 1]], axis=1))
    # (nu/2) int |diag(2, -2)|^2 over the isoparametric disk
    area = np.sum(mesh8.geometry.dx)
    assert v @ (K @ v) == pytest.approx(0.5 * nu * 8 * area, rel=1e-12)
    assert v @ (K @ v) == pytest.approx(4 * nu * np.pi, rel=1e-4)


def test_viscous_block_symmetric_psd(mesh8):
    x = mesh8.nodes
    d = update_deformation(mesh8, initial_map(x, modes=((2, 0.1),)))
    K = assemble_viscous_block(mesh8, d, 1.0).toarray()
    assert np.abs(K - K.T).max() < 1e-12 * np.abs(K).max()
    assert np.linalg.eigvalsh(K).min() > -1e-10


def test_viscous_kernel_is_rigid_motion_of_current_configuration(mesh8):
    x = mesh8.nodes
    eta = initial_map(x, modes=((2, 0.1), (3, 0.05)))
    K = assemble_viscous_block(mesh8, update_deformation(mesh8, eta), 1.0)
    for v in (rotation_field(eta, 1.0), np.tile([0.3, -0.7], (len(x), 1))):
        assert np.abs(K @ _flat(v)).max() < 1e-11


def test_viscous_block_against_pointwise_oracle(mesh8, rng):
    x = mesh8.nodes
    eta = initial_map(x, modes=((2, 0.08),))
    d = update_deformation(mesh8, eta)
    K = assemble_viscous_block(mesh8, d, 1.3)
    v = rng.standard_normal((len(x), 2))
    # D_eta v at every quadrature point from the chain rule, integrated directly
    grad_ref = np.zeros(mesh8.geometry.dx.shape + (2, 2))
    ve = v[mesh8.elements]
    for a in range(6):
        grad_ref += ve[:, None, a, :, None] * mesh8.geometry.grad[:, :, a, None, :]
    grad = np.einsum("eqik,eqkj->eqij", grad_ref, d.a_matrices)
    D = grad + np.swapaxes(grad, -1, -2)
    oracle = 0.5 * 1.3 * np.sum(mesh8.geometry.dx * np.sum(D**2, axis=(-1, -2)))
    assert _flat(v) @ (K @ _flat(v)) == pytest.approx(oracle, rel=1e-9)


def test_eulerian_gradients_reproduce_identity(mesh8):
    # differentiating the current position with respect to itself gives I
    eta = initial_map(mesh8.nodes, modes=((3, 0.1),))
    d = update_deformation(mesh8, eta)
    c = eulerian_gradients(mesh8, d)
    grad = np.einsum("eai,eqaj->eqij", eta[mesh8.elements], c)
    assert np.abs(grad - np.eye(2)).max() < 1e-12


def test_divergence_block_on_rotation(mesh8):
    B = assemble_divergence_block(mesh8, update_deformation(mesh8, mesh8.nodes))
    assert np.abs(B @ _flat(rotation_field(mesh8.nodes, 1.0))).max() < 1e-12


def test_divergence_block_on_dilation_field(mesh8):
    B = assemble_divergence_block(mesh8, update_deformation(mesh8, mesh8.nodes))
    Mp = assemble_pressure_mass(mesh8)
    lumped = np.asarray(Mp.sum(axis=1)).ravel()
    assert np.abs(B @ _flat(mesh8.nodes) - 2 * lumped).max() < 1e-12


def test_divergence_block_on_deformed_mesh(mesh8):
    x = mesh8.nodes
    y = 2 * x
    # u = curl of psi = y1 y2 + |y|^2 / 2 sampled at eta(x); linear in y so
    # that the P2 interpolant is exact on the curved boundary elements too
    u = np.stack([y[:, 0] + y[:, 1], -y[:, 0] - y[:, 1]], axis=1)
    B = assemble_divergence_block(mesh8, update_deformation(mesh8, y))
    assert np.abs(B @ _flat(u)).max() < 1e-10


def test_saddle_blocks_are_symmetric(system8):
    K = assemble_viscous_block(system8.mesh, update_deformation(system8.mesh, system8.mesh.nodes), 1.0)
    for A in (K, system8.mass2, assemble_pressure_mass(system8.mesh)):
        A = A.toarray()
        assert np.abs(A - A.T).max() < 1e-12 * np.abs(A).max()


def test_shell_loads_vanish_at_reference(system8):
    rest = system8.rest_state()
    loads = system8.assemble_shell_loads(rest.boundary, ShellCoefficients(), 1e-3)
    assert not np.any(loads.explicit)
    assert not np.any(loads.implicit @ np.zeros(2 * system8.grid.count))


def test_membrane_load_on_scaled_circle(system8):
    R = 1.1
    state = system8.make_state(R * system8.mesh.nodes)
    loads = system8.assemble_shell_loads(state.boundary, ShellCoefficients(1.0, 0.0, 0.0), 1e-3)
    expected = system8.grid.spacing * 4 * (R**2 - 1) * state.boundary.position
    assert np.abs(loads.explicit - expected).max() < 1e-9


def test_kappa_block_is_symmetric(system8, rng):
    state = system8.make_state(_perturbed(system8))
    loads = system8.assemble_shell_loads(state.boundary, ShellCoefficients(0.0, 0.0, 0.01), 1e-3)
    u, w = rng.standard_normal((2, 2 * system8.grid.count))
    assert abs(w @ (loads.implicit @ u) - u @ (loads.implicit @ w)) < 1e-10


def test_rest_state_is_a_fixed_point(system8):
    rest = system8.rest_state()
    state, budget = system8.step(rest, SchemeParams())
    assert np.array_equal(state.eta, rest.eta)
    assert not np.any(state.velocity)
    assert budget.residual == 0.0


def test_rest_fixed_point_iteration_converges_at_once(system8):
    res = system8.fixed_point_step(system8.rest_state(), SchemeParams(fixed_point_max_iters=5))
    assert res.converged and res.iterations == 1


def test_single_iteration_matches_step_bitwise(system8):
    state = system8.make_state(_perturbed(system8))
    params = SchemeParams(fixed_point_max_iters=1)
    s1, b1 = system8.step(state, params)
    res = system8.fixed_point_step(state, params)
    assert np.array_equal(s1.velocity, res.state.velocity)
    assert np.array_equal(s1.pressure, res.state.pressure)
    assert b1 == res.budget


def test_fixed_point_contracts_geometrically(system8):
    state = system8.make_state(_perturbed(system8))
    params = SchemeParams(fixed_point_max_iters=8, fixed_point_tol=1e-12)
    inc = system8.fixed_point_step(state, params).increments
    ratios = np.array(inc[2:]) / np.array(inc[1:-1])
    assert len(inc) == 8
    assert ratios.max() < 0.5


def test_fixed_point_flags_non_convergence(system8):
    state = system8.make_state(_perturbed(system8))
    res = system8.fixed_point_step(state, SchemeParams(fixed_point_max_iters=2, fixed_point_tol=1e-14))
    assert not res.converged and res.iterations == 2


def test_rigid_rotation_short_run(system8):
    omega, dt = 0.5, 1e-3
    x = system8.mesh.nodes
    state = system8.make_state(x, rotation_field(x, omega))
    params = SchemeParams(dt=dt, shell=ShellCoefficients(1.0, 1.0, 0.01))
    for _ in range(10):
        state, budget = system8.step(state, params)
    exact = rotation_field(state.eta, omega)
    assert np.abs(state.velocity - exact).max() < 10 * dt
    p_exact = 0.5 * omega**2 * (np.sum(state.eta[: system8.mesh.n_vertices] ** 2, axis=1) - 1)
    assert np.abs(state.pressure - p_exact).max() < 1e-2
    assert budget.dissipation_rate < 1e-6


def test_constant_force_translates_rigidly(system8):
    f = (0.3, -0.2)
    params = SchemeParams(dt=1e-3, forcing=Forcing("constant", f))
    state, budget = system8.step(system8.rest_state(), params)
    assert np.abs(state.velocity - 1e-3 * np.array(f)).max() < 1e-12
    assert budget.work_rate > 0


def test_budget_nonnegativity(system8):
    state = system8.make_state(_perturbed(system8), rotation_field(_perturbed(system8), 0.2))
    params = SchemeParams(forcing=Forcing("vortex", (1.0,)))
    for _ in range(3):
        state, b = system8.step(state, params)
        for v in (b.kinetic, b.membrane, b.bending, b.kappa_energy, b.dissipation_rate):
            assert v >= 0


def test_residual_scales_with_dt(system8):
    eta = _perturbed(system8)
    res = []
    for dt in (4e-3, 1e-3):
        _, b = system8.step(system8.make_state(eta), SchemeParams(dt=dt))
        res.append(b.residual)
    assert res[1] < res[0]


def test_huge_step_tangles(system8):
    state = system8.make_state(_perturbed(system8))
    params = SchemeParams(dt=0.2)
    with pytest.raises(TangledMeshError) as info:
        for _ in range(20):
            state, _ = system8.step(state, params)
    assert info.value.time is not None


def test_step_guard_warns_once(mesh8, caplog):
    from kfsi.solver import CoupledSystem

    system = CoupledSystem(mesh8)
    state = system.make_state(_perturbed(system))
    with caplog.at_level(logging.WARNING, logger="kfsi.solver"):
        state, _ = system.step(state, SchemeParams(dt=0.03))
        system.step(state, SchemeParams(dt=0.03))
    assert sum("step guard" in r.message for r in caplog.records) == 1


def test_scheme_params_validation():
    with pytest.raises(InvalidArgumentError):
        SchemeParams(dt=0.0)
    with pytest.raises(InvalidArgumentError):
        SchemeParams(nu=-1.0)
    with pytest.raises(InvalidArgumentError):
        SchemeParams(fixed_point_max_iters=0)
    with pytest.raises(InvalidArgumentError):
        Forcing("constant", (1.0,))
    with pytest.raises(InvalidArgumentError):
        Forcing("gravity")


def test_forcing_evaluation():
    y = np.array([[1.0, 2.0], [-0.5, 0.0]])
    assert np.array_equal(Forcing()(y), np.zeros_like(y))
    assert np.array_equal(Forcing("constant", (1.0, 2.0))(y), [[1, 2], [1, 2]])
    assert np.array_equal(Forcing("vortex", (2.0,))(y), [[-4, 2], [0, -1]])
    assert str(Forcing("constant", (1.0, 2.0))) == "constant(1.0, 2.0)"


def test_kinetic_energy_of_rotation(system8):
    omega = 0.5
    v = rotation_field(system8.mesh.nodes, omega)
    # 1/2 int omega^2 |x|^2 over the unit disk
    assert system8.kinetic_energy(v) == pytest.approx(omega**2 * np.pi / 4, rel=1e-4)
    xq = evaluate_at_quadrature(system8.mesh, system8.mesh.nodes)
    direct = 0.5 * omega**2 * np.sum(system8.mesh.geometry.dx * np.sum(xq**2, axis=-1))
    assert system8.kinetic_energy(v) == pytest.approx(direct, rel=1e-12)
