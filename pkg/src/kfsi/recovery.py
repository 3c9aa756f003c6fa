"""Recover curvature and metric from a given boundary traction.

Given ``h = c_mem L_m(eta) + c_ben L_b(eta)``, the normal component is a
periodic second-order equation for ``W = w (b - b_0)`` and the tangential
component a first-order equation for ``g - g_0``. Lower-order coefficients are
taken from ``state`` (a single Picard sweep), so the solvers act as a
consistency oracle for the shell operators rather than as a nonlinear solve.
Both periodic inversions leave one constant free; it is fixed by matching the
mean of the corresponding quantity in ``state``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .boundary import BoundaryState, dot, periodic_antiderivative, spectral_derivative
from .errors import InconsistentDataError, InvalidArgumentError
from .shell import ShellReference

SOLVABILITY_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class RecoveryProblem:
    h: NDArray[np.float64]
    state: BoundaryState
    ref: ShellReference
    c_mem: float = 1.0
    c_ben: float = 1.0

    def __post_init__(self):
        n = self.state.grid.count
        if self.ref.grid.count != n or self.h.shape != (n, 2):
            raise InvalidArgumentError("recovery data must share one boundary grid")
        if self.c_ben <= 0 or self.c_mem <= 0:
            raise InvalidArgumentError("recovery needs positive shell coefficients")


def normal_rhs(p: RecoveryProblem) -> NDArray[np.float64]:
    """Right side of ``2 W'' = rhs`` with the state's lower-order terms."""
    s, r = p.state, p.ref
    g, b = s.metric, s.curvature
    w = r.weight
    db = b - r.ref_state.curvature
    dg = g - r.ref_state.metric
    hn = dot(p.h, s.normal)
    rhs = (
        hn / p.c_ben
        + 4.0 * (p.c_mem / p.c_ben) * w * dg * b
        + 2.0 * w * b**2 * db / g
        - spectral_derivative(w * s.metric_rate * db / g, 1)
    )
    return rhs


def solve_normal_equation(p: RecoveryProblem) -> NDArray[np.float64]:
    """Return the curvature ``b`` solving the normal equation."""
    rhs = normal_rhs(p)
    mean = float(np.mean(rhs))
    if abs(mean) > SOLVABILITY_TOL * float(np.abs(rhs).max()) + 1e-12:
        raise InconsistentDataError(
            f"normal equation not solvable: mean of right side is {mean:.3e}"
        )
    w = p.ref.weight
    b0 = p.ref.ref_state.curvature
    W = 0.5 * periodic_antiderivative(rhs, 2)
    W += np.mean(w * (p.state.curvature - b0)) - np.mean(W)
    return b0 + W / w


def tangential_rhs(p: RecoveryProblem) -> NDArray[np.float64]:
    """Right side of ``4 w sqrt(g) (g - g_0)' = rhs``."""
    s, r = p.state, p.ref
    g, b = s.metric, s.curvature
    w = r.weight
    rg = np.sqrt(g)
    dg = g - r.ref_state.metric
    W = w * (b - r.ref_state.curvature)
    Wp = spectral_derivative(W, 1)
    bp = spectral_derivative(b, 1)
    ht = dot(p.h, s.tangent)
    return (
        -ht / p.c_mem
        - 4.0 * spectral_derivative(w * rg, 1) * dg
        - (p.c_ben / p.c_mem) * (4.0 * Wp * b + 2.0 * W * bp) / rg
    )


def solve_tangential_equation(p: RecoveryProblem) -> NDArray[np.float64]:
    """Return the metric ``g`` solving the tangential equation."""
    s, r = p.state, p.ref
    slope = tangential_rhs(p) / (4.0 * r.weight * s.speed)
    mean = float(np.mean(slope))
    if abs(mean) > SOLVABILITY_TOL:
        raise InconsistentDataError(
            f"tangential equation not periodic: mean slope is {mean:.3e}"
        )
    g0 = r.ref_state.metric
    dg = periodic_antiderivative(slope, 1)
    dg += np.mean(s.metric - g0) - np.mean(dg)
    return g0 + dg
