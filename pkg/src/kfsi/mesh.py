"""Reference disk triangulation and Lagrangian deformation bookkeeping.

The disk is meshed with concentric rings of vertices; each ring ``i`` carries
``round(i * M / n_rings)`` vertices, where ``M`` is half the boundary grid
count, and neighbouring rings are stitched by merging their angular orders.
Elements are isoparametric 6-node triangles: boundary edge midpoints sit on
the unit circle so that, together with the outer vertices, the mesh boundary
nodes are exactly the boundary grid nodes ``(cos t_k, -sin t_k)``.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.typing import NDArray

from .boundary import BoundaryGrid
from .errors import InvalidArgumentError, TangledMeshError

JACOBIAN_FLOOR = 1e-10

# 7-point, degree-5 rule on the unit reference triangle (weights sum to 1/2).
_a1, _b1 = 0.059715871789770, 0.470142064105115
_a2, _b2 = 0.797426985353087, 0.101286507323456
QUAD_POINTS = np.array(
    [
        [1.0 / 3.0, 1.0 / 3.0],
        [_b1, _b1],
        [_a1, _b1],
        [_b1, _a1],
        [_b2, _b2],
        [_a2, _b2],
        [_b2, _a2],
    ]
)
QUAD_WEIGHTS = 0.5 * np.array(
    [0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3
)


def p2_basis(xi: NDArray) -> tuple[NDArray, NDArray]:
    """Values ``(P, 6)`` and reference gradients ``(P, 6, 2)`` of the P2 basis.

    Local node order: three vertices, then midpoints of edges 01, 12, 20.
    """
    x, y = xi[:, 0], xi[:, 1]
    l0, l1, l2 = 1.0 - x - y, x, y
    val = np.stack(
        [l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
         4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0],
        axis=1,
    )
    dl = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    lam = np.stack([l0, l1, l2], axis=1)
    grad = np.empty(xi.shape[:1] + (6, 2))
    for i in range(3):
        grad[:, i, :] = (4 * lam[:, i] - 1)[:, None] * dl[i]
    for k, (i, j) in enumerate([(0, 1), (1, 2), (2, 0)]):
        grad[:, 3 + k, :] = 4 * (lam[:, j, None] * dl[i] + lam[:, i, None] * dl[j])
    return val, grad


def p1_basis(xi: NDArray) -> NDArray:
    x, y = xi[:, 0], xi[:, 1]
    return np.stack([1.0 - x - y, x, y], axis=1)


def worker_count() -> int:
    """Assembly worker cap from ``KFSI_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("KFSI_THREADS", "1")))
    except ValueError:
        return 1


def map_elements(func, n_elements: int, workers: int | None = None):
    """Evaluate ``func(lo, hi)`` over element chunks and gather in order.

    Per-element results never depend on the chunking, so the gathered arrays
    are bitwise identical for any worker count.
    """
    workers = worker_count() if workers is None else workers
    if workers <= 1 or n_elements < 64:
        return func(0, n_elements)
    bounds = np.linspace(0, n_elements, workers + 1).astype(int)
    spans = list(zip(bounds[:-1], bounds[1:]))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda s: func(*s), spans))
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(p, axis=0) for p in zip(*parts))
    return np.concatenate(parts, axis=0)


def _ring_angles(m: int) -> NDArray:
    # clockwise from angle zero, matching the boundary parameter direction
    return -2.0 * np.pi * np.arange(m) / m


def _stitch(inner: list[int], outer: list[int]) -> list[tuple[int, int, int]]:
    """Triangulate the annulus strip between two rings of vertex ids."""
    ma, mb = len(inner), len(outer)
    tris = []
    i = j = 0
    while i < ma or j < mb:
        if j >= mb or (i < ma and (i + 1) / ma <= (j + 1) / mb):
            tris.append((inner[i % ma], inner[(i + 1) % ma], outer[j % mb]))
            i += 1
        else:
            tris.append((inner[i % ma], outer[(j + 1) % mb], outer[j % mb]))
            j += 1
    return tris


@dataclass(frozen=True)
class NodeCircle:
    """Boundary node layout for meshes too coarse for a spectral grid."""

    count: int

    @property
    def nodes(self) -> NDArray[np.float64]:
        return 2.0 * np.pi * np.arange(self.count) / self.count


@dataclass(frozen=True, eq=False)
class FluidMesh:
    """Quadratic triangulation of the reference unit disk.

    ``elements`` holds 6 node ids per triangle (vertices, then edge nodes);
    node ids ``< n_vertices`` are vertices, the rest edge midpoints in the
    order of ``edges``. ``boundary_map[k]`` is the node sitting at boundary
    grid index ``k``.
    """

    grid: BoundaryGrid | NodeCircle
    n_rings: int
    vertices: NDArray[np.float64]
    triangles: NDArray[np.int64]
    edges: NDArray[np.int64]
    edge_midpoints: NDArray[np.float64]
    elements: NDArray[np.int64]
    boundary_map: NDArray[np.int64]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_nodes(self) -> int:
        return len(self.vertices) + len(self.edges)

    @property
    def n_elements(self) -> int:
        return len(self.triangles)

    @cached_property
    def nodes(self) -> NDArray[np.float64]:
        return np.vstack([self.vertices, self.edge_midpoints])

    @cached_property
    def interior_nodes(self) -> NDArray[np.int64]:
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.boundary_map] = False
        return np.flatnonzero(mask)

    @cached_property
    def geometry(self) -> ReferenceGeometry:
        return ReferenceGeometry.build(self)

    def vertex_areas(self) -> NDArray[np.float64]:
        """Signed areas of the straight-sided vertex triangles."""
        p = self.vertices[self.triangles]
        e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def min_angle(self) -> float:
        p = self.vertices[self.triangles]
        worst = np.pi
        for k in range(3):
            u = p[:, (k + 1) % 3] - p[:, k]
            v = p[:, (k + 2) % 3] - p[:, k]
            c = np.sum(u * v, 1) / np.linalg.norm(u, axis=1) / np.linalg.norm(v, axis=1)
            worst = min(worst, float(np.arccos(np.clip(c, -1, 1)).min()))
        return np.degrees(worst)


def build_disk_mesh(n_rings: int, grid: BoundaryGrid | int) -> FluidMesh:
    """Ring-structured quadratic mesh of the unit disk matching ``grid``.

    ``grid`` may be a plain node count, which allows fans smaller than any
    admissible spectral grid.
    """
    if isinstance(grid, (int, np.integer)):
        grid = BoundaryGrid(int(grid)) if grid >= 16 and grid % 2 == 0 else NodeCircle(int(grid))
    n_gamma = grid.count
    if n_rings < 1:
        raise InvalidArgumentError("n_rings must be positive")
    if n_gamma % 4:
        raise InvalidArgumentError(f"boundary grid count {n_gamma} not divisible by 4")
    m_outer = n_gamma // 2
    counts = [int(round(i * m_outer / n_rings)) for i in range(1, n_rings + 1)]
    if counts[0] < 3:
        raise InvalidArgumentError(
            f"{n_rings} rings need at least {3 * n_rings * 2} boundary nodes"
        )

    verts = [np.zeros(2)]
    rings: list[list[int]] = [[0]]
    for i, m in enumerate(counts, start=1):
        r = i / n_rings
        ang = _ring_angles(m)
        ids = list(range(len(verts), len(verts) + m))
        verts.extend(r * np.stack([np.cos(ang), np.sin(ang)], axis=1))
        rings.append(ids)
    vertices = np.array(verts)
    # the outer ring must coincide bitwise with the boundary grid nodes
    t = grid.nodes[::2]
    vertices[rings[-1]] = np.stack([np.cos(t), -np.sin(t)], axis=1)

    tris: list[tuple[int, int, int]] = []
    for j in range(counts[0]):
        tris.append((0, rings[1][j], rings[1][(j + 1) % counts[0]]))
    for a, b in zip(rings[1:-1], rings[2:]):
        tris.extend(_stitch(a, b))
    triangles = np.array(tris, dtype=np.int64)
    area = _signed_area(vertices, triangles)
    flip = area < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]

    local = [(0, 1), (1, 2), (2, 0)]
    edge_ids: dict[tuple[int, int], int] = {}
    edge_list = []
    elements = np.empty((len(triangles), 6), dtype=np.int64)
    elements[:, :3] = triangles
    for e, tri in enumerate(triangles):
        for k, (i, j) in enumerate(local):
            key = (min(tri[i], tri[j]), max(tri[i], tri[j]))
            if key not in edge_ids:
                edge_ids[key] = len(edge_list)
                edge_list.append(key)
            elements[e, 3 + k] = edge_ids[key]
    edges = np.array(edge_list, dtype=np.int64)
    nv = len(vertices)
    elements[:, 3:] += nv
    midpoints = 0.5 * (vertices[edges[:, 0]] + vertices[edges[:, 1]])

    outer = rings[-1]
    boundary_map = np.empty(n_gamma, dtype=np.int64)
    for j in range(m_outer):
        a, b = outer[j], outer[(j + 1) % m_outer]
        eid = edge_ids[(min(a, b), max(a, b))]
        k = 2 * j + 1
        th = grid.nodes[k]
        midpoints[eid] = (np.cos(th), -np.sin(th))
        boundary_map[2 * j] = a
        boundary_map[k] = nv + eid

    return FluidMesh(
        grid, n_rings, vertices, triangles, edges, midpoints, elements, boundary_map
    )


def _signed_area(vertices, triangles):
    p = vertices[triangles]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _inv2(m: NDArray) -> tuple[NDArray, NDArray]:
    det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    inv = np.empty_like(m)
    inv[..., 0, 0] = m[..., 1, 1] / det
    inv[..., 1, 1] = m[..., 0, 0] / det
    inv[..., 0, 1] = -m[..., 0, 1] / det
    inv[..., 1, 0] = -m[..., 1, 0] / det
    return inv, det


def _jacobian(coords: NDArray, dshape: NDArray) -> NDArray:
    """``J[e, q, i, j] = sum_a coords[e, a, i] * dshape[q, a, j]``."""
    jac = np.zeros(coords.shape[:1] + dshape.shape[:1] + (2, 2))
    for a in range(dshape.shape[1]):
        jac += coords[:, None, a, :, None] * dshape[None, :, a, None, :]
    return jac


@dataclass(frozen=True, eq=False)
class ReferenceGeometry:
    """Per-element quadrature data of the reference (isoparametric) mesh."""

    shape: NDArray  # (Q, 6)
    pshape: NDArray  # (Q, 3)
    grad: NDArray  # (T, Q, 6, 2) reference-coordinate gradients of P2 basis
    dx: NDArray  # (T, Q) quadrature weight times reference Jacobian

    @classmethod
    def build(cls, mesh: FluidMesh) -> ReferenceGeometry:
        shape, dshape = p2_basis(QUAD_POINTS)
        coords = mesh.nodes[mesh.elements]
        jac = _jacobian(coords, dshape)
        jinv, det = _inv2(jac)
        if det.min() <= 0:
            raise InvalidArgumentError("reference mesh is not positively oriented")
        grad = np.zeros(jac.shape[:2] + (6, 2))
        for a in range(6):
            for j in range(2):
                for k in range(2):
                    grad[:, :, a, j] += dshape[None, :, a, k] * jinv[:, :, k, j]
        return cls(shape, p1_basis(QUAD_POINTS), grad, QUAD_WEIGHTS[None, :] * det)


@dataclass(frozen=True, eq=False)
class Deformation:
    """Lagrangian placement ``eta`` with ``grad eta``, its inverse and determinant.

    Arrays are per element and quadrature point: ``a_matrices[e, q]`` is
    ``(grad eta)^{-1}`` and ``jacobians[e, q]`` is ``det grad eta``.
    """

    eta: NDArray[np.float64]
    gradients: NDArray[np.float64]
    a_matrices: NDArray[np.float64]
    jacobians: NDArray[np.float64]


def update_deformation(
    mesh: FluidMesh, eta: NDArray, time: float | None = None
) -> Deformation:
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (mesh.n_nodes, 2):
        raise InvalidArgumentError(f"eta must have shape ({mesh.n_nodes}, 2)")
    geo = mesh.geometry
    coords = eta[mesh.elements]

    def chunk(lo, hi):
        grad = _jacobian_from_grad(coords[lo:hi], geo.grad[lo:hi])
        a, det = _inv2(grad)
        return grad, a, det

    grad, a, det = map_elements(chunk, mesh.n_elements)
    if not det.min() > JACOBIAN_FLOOR:
        worst = int(np.argmin(det.min(axis=1)))
        raise TangledMeshError(
            f"Lagrangian map tangled in element {worst} "
            f"(det grad eta = {det.min():.3e})",
            worst,
            time,
        )
    eta = eta.copy()
    eta.setflags(write=False)
    return Deformation(eta, grad, a, det)


def _jacobian_from_grad(coords: NDArray, grad: NDArray) -> NDArray:
    """``F[e, q, i, j] = sum_a coords[e, a, i] * grad[e, q, a, j]``."""
    out = np.zeros(grad.shape[:2] + (2, 2))
    for a in range(grad.shape[2]):
        out += coords[:, None, a, :, None] * grad[:, :, a, None, :]
    return out


def mesh_quality(mesh: FluidMesh, d: Deformation) -> tuple[float, float]:
    """Smallest ``det grad eta`` and largest deformed edge-length ratio."""
    p = d.eta[mesh.triangles]
    lengths = np.stack(
        [np.linalg.norm(p[:, (k + 1) % 3] - p[:, k], axis=1) for k in range(3)], axis=1
    )
    aspect = lengths.max(axis=1) / lengths.min(axis=1)
    return float(d.jacobians.min()), float(aspect.max())


def evaluate_at_quadrature(mesh: FluidMesh, nodal: NDArray) -> NDArray:
    """Interpolate a nodal P2 field to all quadrature points, shape ``(T, Q, ...)``."""
    shape = mesh.geometry.shape
    vals = nodal[mesh.elements]  # (T, 6, ...)
    out = np.zeros((mesh.n_elements, shape.shape[0]) + nodal.shape[1:])
    for a in range(6):
        w = shape[:, a].reshape((1, -1) + (1,) * (nodal.ndim - 1))
        out += w * vals[:, None, a]
    return out
