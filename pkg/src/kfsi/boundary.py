"""Closed boundary curves on a uniform periodic parameter grid.

Curves are sampled at ``theta_k = 2*pi*k/N`` and stored clockwise, so that the
normal ``(-x', y')`` rotated from the tangent points out of the enclosed
region. Derivatives are taken with the discrete Fourier transform.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.typing import NDArray

from .errors import DegenerateCurveError, InvalidArgumentError, OrientationError

METRIC_FLOOR = 1e-10


@dataclass(frozen=True)
class BoundaryGrid:
    """Uniform grid on the reference parameter circle ``[0, 2*pi)``."""

    count: int

    def __post_init__(self):
        if self.count < 16 or self.count % 2:
            raise InvalidArgumentError(
                f"boundary grid needs an even node count >= 16, got {self.count}"
            )

    @property
    def spacing(self) -> float:
        return 2.0 * np.pi / self.count

    @cached_property
    def nodes(self) -> NDArray[np.float64]:
        return self.spacing * np.arange(self.count)

    def check(self, f: NDArray) -> None:
        if f.shape[0] != self.count:
            raise InvalidArgumentError(
                f"field has {f.shape[0]} samples, grid has {self.count}"
            )


def _wavenumbers(n: int) -> NDArray[np.float64]:
    return np.arange(n // 2 + 1, dtype=float)


def spectral_derivative(
    f: NDArray, order: int = 1, grid: BoundaryGrid | None = None
) -> NDArray[np.float64]:
    """Derivative of the trigonometric interpolant of ``f`` along axis 0.

    Works for scalar fields of shape ``(N,)`` and vector fields ``(N, 2)``.
    The Nyquist coefficient is dropped for odd orders and kept for even ones,
    so the second and fourth derivative operators are symmetric.
    """
    if order not in (1, 2, 3, 4):
        raise InvalidArgumentError(f"derivative order must be 1..4, got {order}")
    f = np.asarray(f, dtype=float)
    if grid is not None:
        grid.check(f)
    n = f.shape[0]
    if n % 2:
        raise InvalidArgumentError("spectral differentiation needs an even node count")
    mult = (1j * _wavenumbers(n)) ** order
    if order % 2:
        mult[-1] = 0.0
    else:
        mult[-1] = mult[-1].real
    shape = (-1,) + (1,) * (f.ndim - 1)
    fh = np.fft.rfft(f, axis=0)
    return np.fft.irfft(fh * mult.reshape(shape), n=n, axis=0)


def differentiation_matrix(n: int, order: int) -> NDArray[np.float64]:
    """Dense circulant matrix of :func:`spectral_derivative`.

    Even orders are exactly symmetric, odd orders exactly antisymmetric.
    """
    col = spectral_derivative(np.eye(n)[:, 0], order)
    back = np.roll(col[::-1], 1)
    col = 0.5 * (col + back) if order % 2 == 0 else 0.5 * (col - back)
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return col[idx]


def periodic_antiderivative(f: NDArray, order: int = 1) -> NDArray[np.float64]:
    """Zero-mean periodic solution ``u`` of ``u^(order) = f - mean(f)``."""
    f = np.asarray(f, dtype=float)
    n = f.shape[0]
    k = _wavenumbers(n)
    fh = np.fft.rfft(f, axis=0)
    inv = np.zeros_like(fh)
    mult = (1j * k[1:]) ** order
    if order % 2:
        mult[-1] = 0.0
    else:
        mult[-1] = mult[-1].real
    shape = (-1,) + (1,) * (f.ndim - 1)
    safe = np.where(mult == 0, 1.0, mult).reshape(shape)
    inv[1:] = np.where(mult.reshape(shape) == 0, 0.0, fh[1:] / safe)
    return np.fft.irfft(inv, n=n, axis=0)


def rotate90(v: NDArray) -> NDArray[np.float64]:
    """Apply the rotation ``(x, y) -> (-y, x)`` to the last axis."""
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def dot(u: NDArray, v: NDArray) -> NDArray[np.float64]:
    return u[..., 0] * v[..., 0] + u[..., 1] * v[..., 1]


def curve_area(position: NDArray) -> tuple[float, int]:
    """Enclosed area of a closed curve and its orientation sign.

    Uses Green's theorem on the trigonometric interpolant, so the result is
    exact for band-limited curves. The sign is ``+1`` for counterclockwise
    and ``-1`` for clockwise curves.
    """
    position = np.asarray(position, dtype=float)
    d1 = spectral_derivative(position, 1)
    h = 2.0 * np.pi / position.shape[0]
    signed = 0.5 * h * np.sum(position[:, 0] * d1[:, 1] - position[:, 1] * d1[:, 0])
    return abs(signed), (1 if signed >= 0 else -1)


@dataclass(frozen=True, eq=False)
class BoundaryState:
    """A discrete closed curve with its metric, curvature and moving frame.

    ``metric`` is ``g = |eta'|^2``, ``curvature`` is ``b = eta'' . n``.
    ``d1`` and ``d2`` hold the spectral first and second derivatives of the
    position and are kept because every shell operator reuses them.
    """

    grid: BoundaryGrid
    position: NDArray[np.float64]
    d1: NDArray[np.float64]
    d2: NDArray[np.float64]
    metric: NDArray[np.float64]
    curvature: NDArray[np.float64]
    normal: NDArray[np.float64]
    tangent: NDArray[np.float64]

    @property
    def speed(self) -> NDArray[np.float64]:
        return np.sqrt(self.metric)

    @property
    def metric_rate(self) -> NDArray[np.float64]:
        """``g'`` written as ``2 eta' . eta''``."""
        return 2.0 * dot(self.d1, self.d2)

    @property
    def stretch_rate(self) -> NDArray[np.float64]:
        """Tangential part of ``eta''``, equal to ``g' / (2 sqrt(g))``."""
        return dot(self.d2, self.tangent)


def build_state(position: NDArray, grid: BoundaryGrid | None = None) -> BoundaryState:
    """Derive metric, curvature and frame from clockwise node positions."""
    position = np.array(position, dtype=float)
    if position.ndim != 2 or position.shape[1] != 2:
        raise InvalidArgumentError("boundary position must have shape (N, 2)")
    if grid is None:
        grid = BoundaryGrid(position.shape[0])
    grid.check(position)
    d1 = spectral_derivative(position, 1)
    d2 = spectral_derivative(position, 2)
    g = dot(d1, d1)
    gmin = float(g.min())
    if not gmin >= METRIC_FLOOR:
        raise DegenerateCurveError(f"boundary metric degenerated: min g = {gmin:.3e}")
    _, sign = curve_area(position)
    if sign > 0:
        raise OrientationError("boundary curves must be stored clockwise")
    speed = np.sqrt(g)
    tangent = d1 / speed[:, None]
    normal = rotate90(tangent)
    b = dot(d2, normal)
    position.setflags(write=False)
    return BoundaryState(grid, position, d1, d2, g, b, normal, tangent)


def check_identities(state: BoundaryState) -> float:
    """Largest nodal residual of the frame derivative identities.

    Checks ``n' = -g^{-1/2} b tau``, ``eta'' = b n + g'/(2 sqrt g) tau`` and
    the second derivative of the normal, all with spectral derivatives.
    """
    g, b, n, tau = state.metric, state.curvature, state.normal, state.tangent
    rg = np.sqrt(g)
    gp = spectral_derivative(g, 1)
    bp = spectral_derivative(b, 1)
    n1 = spectral_derivative(n, 1)
    n2 = spectral_derivative(n, 2)
    r1 = n1 + (b / rg)[:, None] * tau
    r2 = state.d2 - b[:, None] * n - (gp / (2 * rg))[:, None] * tau
    coef = 0.5 * g**-1.5 * gp * b - bp / rg
    r3 = n2 + (b**2 / g)[:, None] * n - coef[:, None] * tau
    return float(max(np.abs(r).max() for r in (r1, r2, r3)))


def circle(grid: BoundaryGrid, radius: float = 1.0) -> NDArray[np.float64]:
    t = grid.nodes
    return radius * np.stack([np.cos(t), -np.sin(t)], axis=1)


def ellipse(grid: BoundaryGrid, a: float, b: float) -> NDArray[np.float64]:
    t = grid.nodes
    return np.stack([a * np.cos(t), -b * np.sin(t)], axis=1)
