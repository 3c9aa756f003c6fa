"""Lagrangian fluid/shell coupling: assembly, time stepping and energy budgets.

Unknowns are P2 velocities on all mesh nodes and P1 pressures on vertices,
laid out as ``[v_x (n), v_y (n), q (n_vertices)]``. Integrals are taken over
the reference disk; ``grad`` of a test function is pulled back through
``a = (grad eta)^{-1}`` frozen at the coefficient state.

A backward Euler step solves::

    (M/dt + K + S) v - B^T q = M v_old/dt + F - P
                     -B v    = 0

where ``K`` is the viscous form, ``P`` the boundary pairing of the explicit
shell loads and ``S`` the implicit bending and regularization operator acting
on boundary velocities through ``eta_new = eta_old + dt v``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.typing import NDArray

from .boundary import BoundaryState, build_state, curve_area, differentiation_matrix
from .errors import InvalidArgumentError, SingularSystemError
from .mesh import (
    Deformation,
    FluidMesh,
    evaluate_at_quadrature,
    map_elements,
    update_deformation,
)
from .shell import (
    ShellCoefficients,
    ShellReference,
    bending_energy,
    bending_traction,
    membrane_energy,
    membrane_traction,
    relative_regularization_energy,
    relative_regularization_traction,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Forcing:
    """Body force ``f`` evaluated at material points ``eta(t, x)``.

    ``kind`` is one of ``zero``, ``constant`` (``params = (fx, fy)``) or
    ``vortex`` (``params = (amplitude,)``, ``f(y) = A (-y_2, y_1)``).
    """

    kind: str = "zero"
    params: tuple[float, ...] = ()

    def __post_init__(self):
        arity = {"zero": 0, "constant": 2, "vortex": 1}
        if self.kind not in arity:
            raise InvalidArgumentError(f"unknown forcing kind {self.kind!r}")
        if len(self.params) != arity[self.kind]:
            raise InvalidArgumentError(
                f"forcing {self.kind} takes {arity[self.kind]} parameters"
            )

    def __call__(self, y: NDArray) -> NDArray:
        if self.kind == "zero":
            return np.zeros_like(y)
        if self.kind == "constant":
            return np.broadcast_to(np.array(self.params, dtype=float), y.shape).copy()
        amp = self.params[0]
        return amp * np.stack([-y[..., 1], y[..., 0]], axis=-1)

    def __str__(self):
        if self.kind == "zero":
            return "zero"
        return f"{self.kind}({', '.join(repr(float(p)) for p in self.params)})"


@dataclass(frozen=True)
class SchemeParams:
    dt: float = 1e-3
    nu: float = 1.0
    shell: ShellCoefficients = field(default_factory=ShellCoefficients)
    fixed_point_tol: float = 1e-8
    fixed_point_max_iters: int = 1
    forcing: Forcing = field(default_factory=Forcing)

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidArgumentError("dt must be positive")
        if not self.nu > 0:
            raise InvalidArgumentError("nu must be positive")
        if self.fixed_point_max_iters < 1:
            raise InvalidArgumentError("fixed_point_max_iters must be at least 1")
        if not self.fixed_point_tol > 0:
            raise InvalidArgumentError("fixed_point_tol must be positive")
        if self.shell.kappa == 0:
            log.warning("kappa = 0: unregularized evolution is experimental")


@dataclass(frozen=True, eq=False)
class SolutionState:
    velocity: NDArray[np.float64]
    pressure: NDArray[np.float64]
    boundary: BoundaryState
    deformation: Deformation
    time: float = 0.0

    @property
    def eta(self) -> NDArray[np.float64]:
        return self.deformation.eta


@dataclass(frozen=True)
class EnergyBudget:
    kinetic: float
    membrane: float
    bending: float
    kappa_energy: float
    dissipation_rate: float = 0.0
    work_rate: float = 0.0
    residual: float = 0.0

    @property
    def total(self) -> float:
        return self.kinetic + self.membrane + self.bending + self.kappa_energy


@dataclass(frozen=True, eq=False)
class StepResult:
    state: SolutionState
    budget: EnergyBudget
    iterations: int = 1
    converged: bool = True
    increments: tuple[float, ...] = ()


def _coo(rows, cols, vals, shape):
    return sp.coo_matrix(
        (vals.ravel(), (rows.ravel(), cols.ravel())), shape=shape
    ).tocsr()


def eulerian_gradients(mesh: FluidMesh, d: Deformation) -> NDArray:
    """Basis gradients with respect to current positions, ``(T, Q, 6, 2)``."""
    grad = mesh.geometry.grad

    def chunk(lo, hi):
        g, a = grad[lo:hi], d.a_matrices[lo:hi]
        out = np.zeros(g.shape)
        for j in range(2):
            for k in range(2):
                out[..., k] += g[..., j] * a[:, :, None, j, k]
        return out

    return map_elements(chunk, mesh.n_elements)


def _local_sum(dx, f):
    # explicit loop over quadrature points keeps per-element sums chunk-independent
    acc = dx[:, 0] * f[:, 0]
    for q in range(1, dx.shape[1]):
        acc = acc + dx[:, q] * f[:, q]
    return acc


def assemble_viscous_block(mesh: FluidMesh, d: Deformation, nu: float) -> sp.csr_matrix:
    """``(nu/2) int D_eta v : D_eta phi`` over the reference disk.

    For basis functions ``N_a e_i`` and ``N_b e_l`` with pulled-back
    gradients ``c_a``, ``c_b`` the integrand is
    ``nu (delta_il c_a . c_b + c_a^l c_b^i)``.
    """
    c = eulerian_gradients(mesh, d)
    dx = mesh.geometry.dx
    n = mesh.n_nodes
    el = mesh.elements

    def chunk(lo, hi):
        cc, w = c[lo:hi], dx[lo:hi]
        local = np.zeros((hi - lo, 2, 2, 6, 6))
        for a in range(6):
            for b in range(6):
                dot = cc[:, :, a, 0] * cc[:, :, b, 0] + cc[:, :, a, 1] * cc[:, :, b, 1]
                for i in range(2):
                    for l in range(2):
                        f = cc[:, :, a, l] * cc[:, :, b, i]
                        if i == l:
                            f = f + dot
                        local[:, i, l, a, b] = _local_sum(w, f)
        return local

    local = nu * map_elements(chunk, mesh.n_elements)
    rows, cols, vals = [], [], []
    for i in range(2):
        for l in range(2):
            rows.append(i * n + np.repeat(el[:, :, None], 6, axis=2))
            cols.append(l * n + np.repeat(el[:, None, :], 6, axis=1))
            vals.append(local[:, i, l])
    return _coo(np.stack(rows), np.stack(cols), np.stack(vals), (2 * n, 2 * n))


def assemble_divergence_block(mesh: FluidMesh, d: Deformation) -> sp.csr_matrix:
    """``B[p, (b, l)] = int psi_p a_l^j N_b,j``: the pulled-back divergence."""
    c = eulerian_gradients(mesh, d)
    dx = mesh.geometry.dx
    psi = mesh.geometry.pshape
    n = mesh.n_nodes
    tri, el = mesh.triangles, mesh.elements

    def chunk(lo, hi):
        cc, w = c[lo:hi], dx[lo:hi]
        local = np.zeros((hi - lo, 2, 3, 6))
        for p in range(3):
            for b in range(6):
                for l in range(2):
                    local[:, l, p, b] = _local_sum(w, psi[None, :, p] * cc[:, :, b, l])
        return local

    local = map_elements(chunk, mesh.n_elements)
    rows, cols, vals = [], [], []
    for l in range(2):
        rows.append(np.repeat(tri[:, :, None], 6, axis=2))
        cols.append(l * n + np.repeat(el[:, None, :], 3, axis=1))
        vals.append(local[:, l])
    return _coo(np.stack(rows), np.stack(cols), np.stack(vals), (mesh.n_vertices, 2 * n))


def assemble_scalar_mass(mesh: FluidMesh) -> sp.csr_matrix:
    geo = mesh.geometry
    local = np.zeros((mesh.n_elements, 6, 6))
    for a in range(6):
        for b in range(6):
            local[:, a, b] = _local_sum(geo.dx, np.broadcast_to(
                geo.shape[None, :, a] * geo.shape[None, :, b], geo.dx.shape))
    el = mesh.elements
    rows = np.repeat(el[:, :, None], 6, axis=2)
    cols = np.repeat(el[:, None, :], 6, axis=1)
    return _coo(rows, cols, local, (mesh.n_nodes, mesh.n_nodes))


def assemble_scalar_stiffness(mesh: FluidMesh) -> sp.csr_matrix:
    geo = mesh.geometry
    g = geo.grad
    local = np.zeros((mesh.n_elements, 6, 6))
    for a in range(6):
        for b in range(6):
            f = g[:, :, a, 0] * g[:, :, b, 0] + g[:, :, a, 1] * g[:, :, b, 1]
            local[:, a, b] = _local_sum(geo.dx, f)
    el = mesh.elements
    rows = np.repeat(el[:, :, None], 6, axis=2)
    cols = np.repeat(el[:, None, :], 6, axis=1)
    return _coo(rows, cols, local, (mesh.n_nodes, mesh.n_nodes))


def assemble_pressure_mass(mesh: FluidMesh) -> sp.csr_matrix:
    geo = mesh.geometry
    local = np.zeros((mesh.n_elements, 3, 3))
    for a in range(3):
        for b in range(3):
            local[:, a, b] = _local_sum(geo.dx, np.broadcast_to(
                geo.pshape[None, :, a] * geo.pshape[None, :, b], geo.dx.shape))
    tri = mesh.triangles
    rows = np.repeat(tri[:, :, None], 3, axis=2)
    cols = np.repeat(tri[:, None, :], 3, axis=1)
    return _coo(rows, cols, local, (mesh.n_vertices, mesh.n_vertices))


def forcing_load(mesh: FluidMesh, d: Deformation, forcing: Forcing) -> NDArray:
    """``int F . phi`` with ``F = f(eta(x))``, returned as ``(n_nodes, 2)``."""
    out = np.zeros((mesh.n_nodes, 2))
    if forcing.kind == "zero":
        return out
    geo = mesh.geometry
    y = evaluate_at_quadrature(mesh, d.eta)
    f = forcing(y)
    for a in range(6):
        for i in range(2):
            np.add.at(out[:, i], mesh.elements[:, a],
                      _local_sum(geo.dx, geo.shape[None, :, a] * f[..., i]))
    return out


@dataclass(frozen=True, eq=False)
class ShellLoads:
    """Boundary loads paired with nodal test traces.

    ``explicit`` is ``(N, 2)``, already multiplied by the grid spacing.
    ``implicit`` is a dense ``(2N, 2N)`` operator on stacked boundary
    velocities ``[v_x; v_y]``.
    """

    explicit: NDArray[np.float64]
    implicit: NDArray[np.float64]


class CoupledSystem:
    """A fluid mesh enclosed by a Koiter shell whose unstressed shape is the
    mesh's reference boundary."""

    def __init__(self, mesh: FluidMesh, ref: ShellReference | None = None):
        self.mesh = mesh
        if ref is None:
            ref = ShellReference.from_position(mesh.nodes[mesh.boundary_map])
        if ref.grid.count != mesh.grid.count:
            raise InvalidArgumentError("shell reference and mesh boundary differ")
        self.ref = ref
        self.grid = ref.grid
        n = mesh.n_nodes
        self.mass = assemble_scalar_mass(mesh)
        self.mass2 = sp.block_diag([self.mass, self.mass]).tocsr()
        stiff = assemble_scalar_stiffness(mesh)
        self.h1_gram = sp.block_diag([self.mass + stiff] * 2).tocsr()
        self.d2 = differentiation_matrix(self.grid.count, 2)
        self.d4 = differentiation_matrix(self.grid.count, 4)
        bmap = mesh.boundary_map
        self._bdofs = np.concatenate([bmap, n + bmap])
        self._dt_warned = False

    # -- states -------------------------------------------------------------

    def make_state(
        self,
        eta: NDArray,
        velocity: NDArray | None = None,
        pressure: NDArray | None = None,
        time: float = 0.0,
    ) -> SolutionState:
        mesh = self.mesh
        eta = np.asarray(eta, dtype=float)
        d = update_deformation(mesh, eta, time)
        boundary = build_state(d.eta[mesh.boundary_map], self.grid)
        if velocity is None:
            velocity = np.zeros((mesh.n_nodes, 2))
        if pressure is None:
            pressure = np.zeros(mesh.n_vertices)
        velocity = np.array(velocity, dtype=float)
        velocity.setflags(write=False)
        return SolutionState(velocity, np.asarray(pressure, float), boundary, d, time)

    def rest_state(self) -> SolutionState:
        return self.make_state(self.mesh.nodes.copy())

    # -- energies -----------------------------------------------------------

    def kinetic_energy(self, v: NDArray) -> float:
        mv = self.mass @ v
        return 0.5 * float(np.sum(mv * v))

    def energies(self, state: SolutionState, coeffs: ShellCoefficients) -> EnergyBudget:
        b = state.boundary
        return EnergyBudget(
            kinetic=self.kinetic_energy(state.velocity),
            membrane=coeffs.c_mem * membrane_energy(b, self.ref),
            bending=coeffs.c_ben * bending_energy(b, self.ref),
            kappa_energy=relative_regularization_energy(b, self.ref, coeffs.kappa),
        )

    def h1_norm(self, v: NDArray) -> float:
        x = np.concatenate([v[:, 0], v[:, 1]])
        return float(np.sqrt(max(x @ (self.h1_gram @ x), 0.0)))

    def enclosed_area(self, state: SolutionState) -> float:
        return curve_area(state.boundary.position)[0]

    # -- boundary loads -----------------------------------------------------

    def assemble_shell_loads(
        self, boundary: BoundaryState, coeffs: ShellCoefficients, dt: float
    ) -> ShellLoads:
        """Split the shell loads at a frozen coefficient state.

        Membrane, bending and regularization tractions of ``boundary`` are
        explicit. The implicit part is the bending term linear in the new
        ``eta''`` along the frozen normal, ``2 [w (eta'' . n) n]''``, plus
        ``kappa eta''''``, both applied to ``dt * v``.
        """
        h = self.grid.spacing
        load = np.zeros_like(boundary.position)
        if coeffs.c_mem:
            load += coeffs.c_mem * membrane_traction(boundary, self.ref)
        if coeffs.c_ben:
            load += coeffs.c_ben * bending_traction(boundary, self.ref)
        if coeffs.kappa:
            load += relative_regularization_traction(boundary, self.ref, coeffs.kappa)
        nb = self.grid.count
        op = np.zeros((2 * nb, 2 * nb))
        if coeffs.c_ben:
            wn = self.ref.weight[:, None] * boundary.normal
            n = boundary.normal
            for i in range(2):
                for j in range(2):
                    op[i * nb:(i + 1) * nb, j * nb:(j + 1) * nb] = (
                        2.0 * coeffs.c_ben * self.d2 @ ((wn[:, i] * n[:, j])[:, None] * self.d2)
                    )
        if coeffs.kappa:
            op[:nb, :nb] += coeffs.kappa * self.d4
            op[nb:, nb:] += coeffs.kappa * self.d4
        return ShellLoads(h * load, dt * h * op)

    # -- stepping -----------------------------------------------------------

    def stable_dt(self, boundary: BoundaryState, coeffs: ShellCoefficients) -> float:
        """Step-size guard for the explicit membrane load."""
        if coeffs.c_mem == 0:
            return np.inf
        g = boundary.metric
        return 0.25 * g.min() * self.grid.spacing / np.sqrt(coeffs.c_mem * g.max())

    def _solve(self, state: SolutionState, coef: SolutionState, params: SchemeParams):
        """One linear solve with coefficients (``a``, ``n``, loads) from ``coef``."""
        mesh = self.mesh
        n = mesh.n_nodes
        nv = mesh.n_vertices
        dt = params.dt
        d = coef.deformation
        K = assemble_viscous_block(mesh, d, params.nu)
        B = assemble_divergence_block(mesh, d)
        loads = self.assemble_shell_loads(coef.boundary, params.shell, dt)
        bd = self._bdofs
        S = sp.coo_matrix(
            (loads.implicit.ravel(),
             (np.repeat(bd, len(bd)), np.tile(bd, len(bd)))),
            shape=(2 * n, 2 * n),
        ).tocsr()
        A = self.mass2 / dt + K + S
        system = sp.bmat([[A, -B.T], [-B, None]], format="csc")

        v_old = np.concatenate([state.velocity[:, 0], state.velocity[:, 1]])
        fload = forcing_load(mesh, d, params.forcing)
        f = np.concatenate([fload[:, 0], fload[:, 1]])
        explicit = np.concatenate([loads.explicit[:, 0], loads.explicit[:, 1]])
        if coef is not state:
            # linearize about the iterate: L(eta~) + S (eta_old + dt v - eta~)
            shift = coef.boundary.position - state.boundary.position
            explicit -= loads.implicit @ np.concatenate([shift[:, 0], shift[:, 1]]) / dt
        rhs_v = self.mass2 @ v_old / dt + f
        rhs_v[bd] -= explicit
        rhs = np.concatenate([rhs_v, np.zeros(nv)])
        try:
            sol = spla.splu(system).solve(rhs)
        except RuntimeError as exc:
            raise SingularSystemError(f"saddle-point solve failed: {exc}") from exc
        if not np.all(np.isfinite(sol)):
            raise SingularSystemError("saddle-point solve produced non-finite values")
        v = np.stack([sol[:n], sol[n:2 * n]], axis=1)
        q = sol[2 * n:]
        x = sol[:2 * n]
        dissipation = float(x @ (K @ x))
        work = float(f @ x)
        return v, q, dissipation, work

    def _advance(self, state, v, q, params) -> SolutionState:
        t = state.time + params.dt
        eta = state.eta + params.dt * v
        return self.make_state(eta, v, q, t)

    def _budget(self, old, new, params, dissipation, work) -> EnergyBudget:
        e0 = self.energies(old, params.shell)
        e1 = self.energies(new, params.shell)
        dt = params.dt
        residual = abs(e1.total - e0.total + dt * dissipation - dt * work)
        return replace(e1, dissipation_rate=dissipation, work_rate=work, residual=residual)

    def _check_dt(self, state, params):
        limit = self.stable_dt(state.boundary, params.shell)
        if params.dt > limit and not self._dt_warned:
            self._dt_warned = True
            log.warning("dt = %g exceeds the membrane step guard %.3g", params.dt, limit)

    def step(self, state: SolutionState, params: SchemeParams) -> tuple[SolutionState, EnergyBudget]:
        """One backward Euler step with all coefficients frozen at ``state``."""
        self._check_dt(state, params)
        v, q, diss, work = self._solve(state, state, params)
        new = self._advance(state, v, q, params)
        return new, self._budget(state, new, params, diss, work)

    def fixed_point_step(self, state: SolutionState, params: SchemeParams) -> StepResult:
        """Iterate the step map with coefficients taken from the latest iterate.

        The first pass is exactly :meth:`step`; later passes freeze ``a``, the
        frame and the explicit loads at ``eta_old + dt * v_k``. Iteration stops
        when successive velocities differ by less than ``fixed_point_tol`` in
        the discrete H1 norm.
        """
        self._check_dt(state, params)
        coef = state
        prev = state.velocity
        increments = []
        best = None
        for it in range(1, params.fixed_point_max_iters + 1):
            v, q, diss, work = self._solve(state, coef, params)
            inc = self.h1_norm(v - prev)
            increments.append(inc)
            if best is None or inc <= best[0]:
                best = (inc, v, q, diss, work)
            if inc < params.fixed_point_tol:
                break
            if it == params.fixed_point_max_iters:
                break
            prev = v
            coef = self._advance(state, v, q, params)
        converged = increments[-1] < params.fixed_point_tol
        if not converged and params.fixed_point_max_iters > 1:
            log.info("fixed point not converged after %d iterations", len(increments))
        # non-converged runs keep the iterate with the smallest increment
        _, v, q, diss, work = best
        new = self._advance(state, v, q, params)
        budget = self._budget(state, new, params, diss, work)
        return StepResult(new, budget, len(increments), converged, tuple(increments))

