"""Stationary Stokes solves on the fixed reference disk with manufactured data.

With traction data on the whole boundary the velocity is only determined up
to rigid motions; three multipliers pin the rigid-motion moments
``int u . r`` to those of the manufactured velocity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.typing import NDArray

from .errors import SingularSystemError
from .mesh import FluidMesh, evaluate_at_quadrature, update_deformation
from .solver import _local_sum, assemble_divergence_block, assemble_viscous_block

Field = Callable[[NDArray], NDArray]

# 3-point Gauss rule on [0, 1]
_GAUSS_S = 0.5 + 0.5 * np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
_GAUSS_W = 0.5 * np.array([5.0, 8.0, 5.0]) / 9.0


@dataclass(frozen=True)
class Manufactured:
    """Exact Stokes pair with matching body force; traction follows from them."""

    velocity: Field
    velocity_gradient: Field  # returns (..., 2, 2) with [i, j] = du_i/dx_j
    pressure: Field
    forcing: Field

    def traction(self, x: NDArray, normal: NDArray, nu: float) -> NDArray:
        g = self.velocity_gradient(x)
        sym = g + np.swapaxes(g, -1, -2)
        sigma = nu * sym - self.pressure(x)[..., None, None] * np.eye(2)
        return np.einsum("...ij,...j->...i", sigma, normal)


def rigid_rotation(omega: float = 1.0) -> Manufactured:
    """``u = omega (-y, x)``, ``p = omega^2 (|x|^2 - 1)/2``, ``f = grad p``.

    ``Delta u = 0`` and ``Def u = 0``, so the traction on the unit circle is
    ``-p n = 0``.
    """
    def u(x):
        return omega * np.stack([-x[..., 1], x[..., 0]], axis=-1)

    def du(x):
        g = np.zeros(x.shape[:-1] + (2, 2))
        g[..., 0, 1] = -omega
        g[..., 1, 0] = omega
        return g

    def p(x):
        return 0.5 * omega**2 * (np.sum(x**2, axis=-1) - 1.0)

    def f(x):
        return omega**2 * x

    return Manufactured(u, du, p, f)


def zero_solution() -> Manufactured:
    return Manufactured(
        lambda x: np.zeros_like(x),
        lambda x: np.zeros(x.shape[:-1] + (2, 2)),
        lambda x: np.zeros(x.shape[:-1]),
        lambda x: np.zeros_like(x),
    )


@dataclass(frozen=True)
class StokesReport:
    h: float
    l2_velocity: float
    h1_velocity: float
    l2_pressure: float


def _boundary_traction_load(mesh: FluidMesh, man: Manufactured, nu: float) -> NDArray:
    """``int_Gamma t . phi ds`` over the curved boundary edges."""
    n = mesh.n_nodes
    out = np.zeros((n, 2))
    bmap = mesh.boundary_map
    nb = len(bmap)
    s = _GAUSS_S
    shape = np.stack([(1 - s) * (1 - 2 * s), 4 * s * (1 - s), s * (2 * s - 1)], axis=1)
    dshape = np.stack([4 * s - 3, 4 - 8 * s, 4 * s - 1], axis=1)
    X = mesh.nodes
    for j in range(0, nb, 2):
        ids = bmap[[j, j + 1, (j + 2) % nb]]
        pts = shape @ X[ids]
        tan = dshape @ X[ids]
        ds = np.linalg.norm(tan, axis=1)
        # clockwise traversal: rotating the tangent by +90 degrees points outward
        normal = np.stack([-tan[:, 1], tan[:, 0]], axis=1) / ds[:, None]
        t = man.traction(pts, normal, nu)
        for a in range(3):
            out[ids[a]] += np.sum((_GAUSS_W * ds * shape[:, a])[:, None] * t, axis=0)
    return out


def stokes_verification(mesh: FluidMesh, nu: float, man: Manufactured) -> StokesReport:
    """Solve ``-nu div Def u + grad p = f``, ``div u = 0`` with traction data."""
    n = mesh.n_nodes
    nv = mesh.n_vertices
    geo = mesh.geometry
    d = update_deformation(mesh, mesh.nodes)
    K = assemble_viscous_block(mesh, d, nu)
    B = assemble_divergence_block(mesh, d)

    xq = evaluate_at_quadrature(mesh, mesh.nodes)
    fq = man.forcing(xq)
    load = np.zeros((n, 2))
    rigid = np.zeros((3, n, 2))
    modes = [
        np.broadcast_to([1.0, 0.0], xq.shape),
        np.broadcast_to([0.0, 1.0], xq.shape),
        np.stack([-xq[..., 1], xq[..., 0]], axis=-1),
    ]
    uq = man.velocity(xq)
    moments = np.array([np.sum(geo.dx * np.sum(r * uq, axis=-1)) for r in modes])
    for a in range(6):
        ids = mesh.elements[:, a]
        for i in range(2):
            np.add.at(load[:, i], ids, _local_sum(geo.dx, geo.shape[None, :, a] * fq[..., i]))
            for k, r in enumerate(modes):
                np.add.at(rigid[k, :, i], ids, _local_sum(geo.dx, geo.shape[None, :, a] * r[..., i]))
    load += _boundary_traction_load(mesh, man, nu)

    R = sp.csr_matrix(np.stack([np.concatenate([r[:, 0], r[:, 1]]) for r in rigid]))
    system = sp.bmat(
        [[K, -B.T, R.T], [-B, None, None], [R, None, None]], format="csc"
    )
    rhs = np.concatenate([load[:, 0], load[:, 1], np.zeros(nv), moments])
    try:
        sol = spla.splu(system).solve(rhs)
    except RuntimeError as exc:
        raise SingularSystemError(f"Stokes solve failed: {exc}") from exc
    u = np.stack([sol[:n], sol[n:2 * n]], axis=1)
    p = sol[2 * n:2 * n + nv]

    uh = evaluate_at_quadrature(mesh, u)
    ph = np.zeros(geo.dx.shape)
    for a in range(3):
        ph += geo.pshape[None, :, a] * p[mesh.triangles[:, a]][:, None]
    grad_h = np.zeros(geo.dx.shape + (2, 2))
    ue = u[mesh.elements]
    for a in range(6):
        grad_h += ue[:, None, a, :, None] * geo.grad[:, :, a, None, :]
    eu = uh - uq
    eg = grad_h - man.velocity_gradient(xq)
    ep = ph - man.pressure(xq)
    l2u = np.sqrt(np.sum(geo.dx * np.sum(eu**2, axis=-1)))
    h1u = np.sqrt(l2u**2 + np.sum(geo.dx * np.sum(eg**2, axis=(-1, -2))))
    l2p = np.sqrt(np.sum(geo.dx * ep**2))
    return StokesReport(1.0 / mesh.n_rings, float(l2u), float(h1u), float(l2p))


def inf_sup_constant(mesh: FluidMesh) -> float:
    """Discrete inf-sup constant of the P2/P1 pair on the reference mesh.

    Square root of the smallest eigenvalue of ``B G^{-1} B^T`` relative to the
    pressure mass matrix, with ``G`` the velocity H1 Gram matrix.
    """
    from scipy.linalg import eigh

    from .solver import assemble_pressure_mass, assemble_scalar_mass, assemble_scalar_stiffness

    d = update_deformation(mesh, mesh.nodes)
    B = assemble_divergence_block(mesh, d).toarray()
    gram = (assemble_scalar_mass(mesh) + assemble_scalar_stiffness(mesh)).toarray()
    Mp = assemble_pressure_mass(mesh).toarray()
    n = mesh.n_nodes
    ginv_bt = np.vstack(
        [np.linalg.solve(gram, B[:, :n].T), np.linalg.solve(gram, B[:, n:].T)]
    )
    S = B @ ginv_bt
    S = 0.5 * (S + S.T)
    lam = eigh(S, Mp, eigvals_only=True)
    return float(np.sqrt(max(lam[0], 0.0)))
