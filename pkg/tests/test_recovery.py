from __future__ import annotations

import numpy as np
import pytest

from kfsi.boundary import BoundaryGrid, build_state, circle, spectral_derivative
from kfsi.errors import InconsistentDataError, InvalidArgumentError
from kfsi.recovery import (
    RecoveryProblem,
    normal_rhs,
    solve_normal_equation,
    solve_tangential_equation,
    tangential_rhs,
)
from kfsi.shell import ShellReference, bending_traction, membrane_traction
from kfsi.verification import random_curve


def _own_traction(state, ref, c_mem=1.0, c_ben=1.0):
    return c_mem * membrane_traction(state, ref) + c_ben * bending_traction(state, ref)


def test_reference_with_zero_traction(grid64, unit_ref):
    p = RecoveryProblem(np.zeros((64, 2)), unit_ref.ref_state, unit_ref)
    assert np.abs(solve_normal_equation(p) - unit_ref.ref_state.curvature).max() < 1e-14
    assert np.abs(solve_tangential_equation(p) - unit_ref.ref_state.metric).max() < 1e-14


def test_scaled_circle(grid64, unit_ref):
    s = build_state(circle(grid64, 1.1), grid64)
    h = 4 * (1.1**2 - 1) * s.position + 0.2 * s.normal
    p = RecoveryProblem(h, s, unit_ref)
    assert np.abs(solve_normal_equation(p) + 1.1).max() < 1e-9
    assert np.abs(solve_tangential_equation(p) - 1.1**2).max() < 1e-9


def test_round_trip(rng):
    # the module-level tolerance 1e-7 needs the random family resolved: N = 128
    grid = BoundaryGrid(128)
    ref = ShellReference.from_position(circle(grid))
    for _ in range(5):
        s = build_state(random_curve(grid, rng), grid)
        p = RecoveryProblem(_own_traction(s, ref), s, ref)
        assert np.abs(solve_normal_equation(p) - s.curvature).max() < 1e-7
        assert np.abs(solve_tangential_equation(p) - s.metric).max() < 1e-7


def test_round_trip_with_coefficients(grid64, unit_ref, rng):
    s = build_state(random_curve(grid64, rng), grid64)
    p = RecoveryProblem(_own_traction(s, unit_ref, 3.0, 0.5), s, unit_ref, 3.0, 0.5)
    assert np.abs(solve_normal_equation(p) - s.curvature).max() < 1e-6
    assert np.abs(solve_tangential_equation(p) - s.metric).max() < 1e-6


def test_equation_residuals(rng):
    # a first derivative cannot reproduce the Nyquist mode of the data, so the
    # residual check needs a grid on which that mode is at roundoff level
    grid = BoundaryGrid(128)
    unit_ref = ShellReference.from_position(circle(grid))
    s = build_state(random_curve(grid, rng), grid)
    p = RecoveryProblem(_own_traction(s, unit_ref), s, unit_ref)
    w = unit_ref.weight
    rhs = normal_rhs(p)
    W = w * (solve_normal_equation(p) - unit_ref.ref_state.curvature)
    assert np.abs(2 * spectral_derivative(W, 2) - (rhs - rhs.mean())).max() < 1e-8 * (
        1 + np.abs(rhs).max()
    )
    trhs = tangential_rhs(p)
    dg = solve_tangential_equation(p) - unit_ref.ref_state.metric
    lhs = 4 * w * s.speed * spectral_derivative(dg, 1)
    assert np.abs(lhs - trhs).max() < 1e-8 * (1 + np.abs(trhs).max())


def test_gauge_is_linear(grid64, unit_ref, rng):
    s = build_state(random_curve(grid64, rng), grid64)
    p = RecoveryProblem(_own_traction(s, unit_ref), s, unit_ref)
    b = solve_normal_equation(p)
    W = unit_ref.weight * (b - unit_ref.ref_state.curvature)
    target = np.mean(unit_ref.weight * (s.curvature - unit_ref.ref_state.curvature))
    assert np.mean(W) == pytest.approx(target, abs=1e-14)
    g = solve_tangential_equation(p)
    assert np.mean(g) == pytest.approx(np.mean(s.metric), abs=1e-13)


def test_inconsistent_traction_rejected(grid64, unit_ref, rng):
    s = build_state(random_curve(grid64, rng), grid64)
    # a uniform push along the normal has nonzero mean in the normal equation
    h = _own_traction(s, unit_ref) + 0.5 * s.normal
    with pytest.raises(InconsistentDataError):
        solve_normal_equation(RecoveryProblem(h, s, unit_ref))
    h = _own_traction(s, unit_ref) + 0.5 * s.tangent
    with pytest.raises(InconsistentDataError):
        solve_tangential_equation(RecoveryProblem(h, s, unit_ref))


def test_problem_validation(grid64, unit_ref):
    with pytest.raises(InvalidArgumentError):
        RecoveryProblem(np.zeros((32, 2)), unit_ref.ref_state, unit_ref)
    with pytest.raises(InvalidArgumentError):
        RecoveryProblem(np.zeros((64, 2)), unit_ref.ref_state, unit_ref, c_ben=0.0)
