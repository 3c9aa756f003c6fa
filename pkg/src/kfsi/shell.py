"""Koiter shell energies and tractions for a closed curve.

All energies are trapezoidal sums over the reference parameter with weight
``w = |eta_0'|^{-3}``. Tractions are the strong-form first variations, so that
``d/ds E(eta + s phi) = h * sum(L(eta) . phi)`` holds on the grid; this needs
the odd derivative matrix to be antisymmetric and the even ones symmetric,
which :func:`kfsi.boundary.spectral_derivative` guarantees, and needs
``g'`` evaluated as ``2 eta' . eta''``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .boundary import BoundaryState, build_state, spectral_derivative
from .errors import InvalidArgumentError


@dataclass(frozen=True, eq=False)
class ShellReference:
    """Unstressed configuration of the shell."""

    ref_state: BoundaryState
    weight: NDArray[np.float64]

    @classmethod
    def from_state(cls, state: BoundaryState) -> ShellReference:
        return cls(state, state.metric**-1.5)

    @classmethod
    def from_position(cls, position: NDArray) -> ShellReference:
        return cls.from_state(build_state(position))

    @property
    def grid(self):
        return self.ref_state.grid


@dataclass(frozen=True)
class ShellCoefficients:
    c_mem: float = 1.0
    c_ben: float = 1.0
    kappa: float = 1e-3

    def __post_init__(self):
        for name in ("c_mem", "c_ben", "kappa"):
            if not getattr(self, name) >= 0:
                raise InvalidArgumentError(f"{name} must be nonnegative")


def _check(state: BoundaryState, ref: ShellReference) -> None:
    if state.grid.count != ref.grid.count:
        raise InvalidArgumentError(
            f"state has {state.grid.count} nodes, reference has {ref.grid.count}"
        )


def _integrate(state: BoundaryState, f: NDArray) -> float:
    return float(state.grid.spacing * np.sum(f))


def membrane_energy(state: BoundaryState, ref: ShellReference) -> float:
    _check(state, ref)
    dg = state.metric - ref.ref_state.metric
    return _integrate(state, ref.weight * dg**2)


def bending_energy(state: BoundaryState, ref: ShellReference) -> float:
    _check(state, ref)
    db = state.curvature - ref.ref_state.curvature
    return _integrate(state, ref.weight * db**2)


def membrane_traction(state: BoundaryState, ref: ShellReference) -> NDArray[np.float64]:
    """``L_m = -4 [w (g - g_0) eta']'``."""
    _check(state, ref)
    dg = state.metric - ref.ref_state.metric
    return -4.0 * spectral_derivative((ref.weight * dg)[:, None] * state.d1, 1)


def bending_traction(state: BoundaryState, ref: ShellReference) -> NDArray[np.float64]:
    """``L_b = 2 [w (b - b_0) n]'' + [w g^{-1} g' (b - b_0) n]'``."""
    _check(state, ref)
    wdb = ref.weight * (state.curvature - ref.ref_state.curvature)
    n = state.normal
    lower = (wdb * state.metric_rate / state.metric)[:, None] * n
    return 2.0 * spectral_derivative(wdb[:, None] * n, 2) + spectral_derivative(lower, 1)


def shell_traction(
    state: BoundaryState, ref: ShellReference, coeffs: ShellCoefficients
) -> NDArray[np.float64]:
    out = np.zeros_like(state.position)
    if coeffs.c_mem:
        out += coeffs.c_mem * membrane_traction(state, ref)
    if coeffs.c_ben:
        out += coeffs.c_ben * bending_traction(state, ref)
    return out


@dataclass(frozen=True)
class TractionParts:
    membrane_normal: NDArray[np.float64]
    bending_normal: NDArray[np.float64]
    membrane_tangent: NDArray[np.float64]
    bending_tangent: NDArray[np.float64]


def traction_decomposition(state: BoundaryState, ref: ShellReference) -> TractionParts:
    """Normal and tangential components of ``L_m`` and ``L_b`` in closed form.

    With ``W = w (b - b_0)``::

        L_m . n   = -4 w (g - g_0) b
        L_m . tau = -4 (w sqrt(g) (g - g_0))'
        L_b . n   = 2 W'' - 2 w g^{-1} b^2 (b - b_0) + (w g^{-1} g' (b - b_0))'
        L_b . tau = -g^{-1/2} (4 W' b + 2 W b')
    """
    _check(state, ref)
    g, b = state.metric, state.curvature
    w = ref.weight
    rg = np.sqrt(g)
    dg = g - ref.ref_state.metric
    W = w * (b - ref.ref_state.curvature)
    Wp = spectral_derivative(W, 1)
    Wpp = spectral_derivative(W, 2)
    bp = spectral_derivative(b, 1)
    gp = state.metric_rate
    m_n = -4.0 * w * dg * b
    m_t = -4.0 * spectral_derivative(w * rg * dg, 1)
    b_n = 2.0 * Wpp - 2.0 * W * b**2 / g + spectral_derivative(W * gp / g, 1)
    b_t = -(4.0 * Wp * b + 2.0 * W * bp) / rg
    return TractionParts(m_n, b_n, m_t, b_t)


def regularization_traction(state: BoundaryState, kappa: float) -> NDArray[np.float64]:
    """``kappa * eta''''`` on the grid."""
    if kappa < 0:
        raise InvalidArgumentError("kappa must be nonnegative")
    if kappa == 0:
        return np.zeros_like(state.position)
    return kappa * spectral_derivative(state.position, 4)


def _second_derivative_defect(state: BoundaryState, ref: ShellReference):
    """``eta'' - (b_0 n + s_0 tau)`` written as ``(b - b_0) n + (s - s_0) tau``.

    The frame form vanishes bitwise in the unstressed configuration.
    """
    r = ref.ref_state
    db = state.curvature - r.curvature
    ds = state.stretch_rate - r.stretch_rate
    return db[:, None] * state.normal + ds[:, None] * state.tangent


def relative_regularization_energy(
    state: BoundaryState, ref: ShellReference, kappa: float
) -> float:
    """``kappa/2 * int |eta'' - (b_0 n + s_0 tau)|^2`` with ``s = g'/(2 sqrt g)``.

    Same principal part as ``kappa/2 int |eta''|^2`` but invariant under rigid
    motions and zero in the unstressed configuration.
    """
    _check(state, ref)
    if kappa == 0:
        return 0.0
    r = ref.ref_state
    db = state.curvature - r.curvature
    ds = state.stretch_rate - r.stretch_rate
    return 0.5 * kappa * _integrate(state, db**2 + ds**2)


def relative_regularization_traction(
    state: BoundaryState, ref: ShellReference, kappa: float
) -> NDArray[np.float64]:
    """First variation of :func:`relative_regularization_energy`.

    ``kappa { [eta'' - b_0 n - s_0 tau]'' - [g^{-1/2} (b_0 s - s_0 b) n]' }``;
    its leading term is ``kappa * eta''''``.
    """
    _check(state, ref)
    if kappa == 0:
        return np.zeros_like(state.position)
    r = ref.ref_state
    e = _second_derivative_defect(state, ref)
    s = state.stretch_rate
    c = (r.curvature * s - r.stretch_rate * state.curvature) / state.speed
    return kappa * (
        spectral_derivative(e, 2) - spectral_derivative(c[:, None] * state.normal, 1)
    )
