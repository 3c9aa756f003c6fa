"""Property and exact-solution checks, grouped into named suites.

Each check returns a list of :class:`CheckResult`, one per sub-criterion, and
runs at desk scale (``N = 64``, ``n_rings = 8`` unless noted). All random
draws come from fixed seeds, so reruns are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .boundary import (
    BoundaryGrid,
    build_state,
    check_identities,
    circle,
    dot,
    ellipse,
    spectral_derivative,
)
from .mesh import build_disk_mesh
from .recovery import RecoveryProblem, solve_normal_equation, solve_tangential_equation
from .scenario import initial_map, rotation_field
from .shell import (
    ShellCoefficients,
    ShellReference,
    bending_energy,
    bending_traction,
    membrane_energy,
    membrane_traction,
)
from .solver import CoupledSystem, SchemeParams
from .stokes import inf_sup_constant, rigid_rotation, stokes_verification, zero_solution


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def _result(name: str, value: float, limit: float, fmt: str = ".3e") -> CheckResult:
    return CheckResult(name, bool(value < limit), f"{value:{fmt}} < {limit:g}")


# -- random data -------------------------------------------------------------


def random_curve(
    grid: BoundaryGrid, rng: np.random.Generator, amp: float = 0.1, decay: float = 0.5
) -> NDArray[np.float64]:
    """Clockwise star-shaped curve ``r(theta)`` with geometrically decaying modes.

    Modes run up to ``N/4`` so that the coordinates stay band-limited well
    below the grid's Nyquist frequency.
    """
    t = grid.nodes
    r = np.ones_like(t)
    for k in range(1, grid.count // 4 + 1):
        r += amp * decay ** (k - 1) * rng.uniform(-1, 1) * np.cos(k * t + rng.uniform(0, 2 * np.pi))
    shift = 0.1 * rng.standard_normal(2)
    return np.stack([r * np.cos(t), -r * np.sin(t)], axis=1) + shift


def random_field(grid: BoundaryGrid, rng: np.random.Generator, kmax: int = 8) -> NDArray[np.float64]:
    t = grid.nodes
    out = np.zeros((grid.count, 2))
    for k in range(kmax + 1):
        c = rng.standard_normal((2, 2)) / (1 + k) ** 2
        out += np.cos(k * t)[:, None] * c[0] + np.sin(k * t)[:, None] * c[1]
    return out


# -- criteria ----------------------------------------------------------------


def check_geometric_identities(n: int = 128, curves: int = 20, seed: int = 1) -> list[CheckResult]:
    grid = BoundaryGrid(n)
    rng = np.random.default_rng(seed)
    res = [
        _result("identities on circle", check_identities(build_state(circle(grid), grid)), 1e-8),
        _result(
            "identities on ellipse (2, 1)",
            check_identities(build_state(ellipse(grid, 2.0, 1.0), grid)),
            1e-8,
        ),
    ]
    worst = max(
        check_identities(build_state(random_curve(grid, rng), grid)) for _ in range(curves)
    )
    res.append(_result(f"identities on {curves} random curves", worst, 1e-8))
    return res


def _fd_relative_errors(n: int, pairs: int, seed: int, step: float = 1e-5):
    grid = BoundaryGrid(n)
    rng = np.random.default_rng(seed)
    ref = ShellReference.from_position(circle(grid))
    h = grid.spacing
    errs = {"membrane": [], "bending": []}
    for _ in range(pairs):
        eta = random_curve(grid, rng)
        phi = random_field(grid, rng)
        state = build_state(eta, grid)
        for name, energy, traction in (
            ("membrane", membrane_energy, membrane_traction),
            ("bending", bending_energy, bending_traction),
        ):
            plus = energy(build_state(eta + step * phi, grid), ref)
            minus = energy(build_state(eta - step * phi, grid), ref)
            fd = (plus - minus) / (2 * step)
            exact = h * float(np.sum(traction(state, ref) * phi))
            errs[name].append(abs(fd - exact) / max(abs(exact), 1e-14))
    return errs


def weak_strong_defect(state, ref, phi) -> float:
    """Relative gap between the weak boundary form and ``int (L_m + L_b) . phi``."""
    h = state.grid.spacing
    w = ref.weight
    dg = state.metric - ref.ref_state.metric
    db = state.curvature - ref.ref_state.curvature
    p1 = spectral_derivative(phi, 1)
    p2 = spectral_derivative(phi, 2)
    n = state.normal
    weak = h * np.sum(
        w * (4 * dg * dot(state.d1, p1) + 2 * db * dot(p2, n))
        - w * db * state.metric_rate / state.metric * dot(p1, n)
    )
    strong = h * np.sum((membrane_traction(state, ref) + bending_traction(state, ref)) * phi)
    return float(abs(weak - strong) / max(abs(strong), 1.0))


def check_variational(n: int = 64, pairs: int = 20, seed: int = 2) -> list[CheckResult]:
    errs = _fd_relative_errors(n, pairs, seed)
    grid = BoundaryGrid(n)
    rng = np.random.default_rng(seed + 100)
    ref = ShellReference.from_position(circle(grid))
    ws = max(
        weak_strong_defect(build_state(random_curve(grid, rng), grid), ref, random_field(grid, rng))
        for _ in range(pairs)
    )
    return [
        _result(f"membrane first variation, {pairs} pairs (relative)", max(errs["membrane"]), 1e-6),
        _result(f"bending first variation, {pairs} pairs (relative)", max(errs["bending"]), 1e-6),
        _result("weak-strong boundary form", ws, 1e-9),
    ]


def check_closed_form_tractions(n: int = 64, radius: float = 1.1) -> list[CheckResult]:
    grid = BoundaryGrid(n)
    ref = ShellReference.from_position(circle(grid))
    state = build_state(circle(grid, radius), grid)
    em = np.abs(membrane_traction(state, ref) - 4 * (radius**2 - 1) * state.position).max()
    eb = np.abs(bending_traction(state, ref) - 2 * (radius - 1) * state.normal).max()
    return [
        _result(f"L_m on circle R={radius}", float(em), 1e-9),
        _result(f"L_b on circle R={radius}", float(eb), 1e-9),
    ]


def check_recovery(n: int = 64, states: int = 10, seed: int = 3) -> list[CheckResult]:
    grid = BoundaryGrid(n)
    rng = np.random.default_rng(seed)
    ref = ShellReference.from_position(circle(grid))
    eb = eg = 0.0
    for _ in range(states):
        state = build_state(random_curve(grid, rng), grid)
        h = membrane_traction(state, ref) + bending_traction(state, ref)
        prob = RecoveryProblem(h, state, ref)
        eb = max(eb, float(np.abs(solve_normal_equation(prob) - state.curvature).max()))
        eg = max(eg, float(np.abs(solve_tangential_equation(prob) - state.metric).max()))
    return [
        _result(f"curvature round trip, {states} states", eb, 1e-6),
        _result(f"metric round trip, {states} states", eg, 1e-6),
    ]


def check_stokes(levels: tuple[int, int] = (8, 16), nu: float = 1.0, omega: float = 0.5) -> list[CheckResult]:
    reports = [
        stokes_verification(build_disk_mesh(r, BoundaryGrid(8 * r)), nu, rigid_rotation(omega))
        for r in levels
    ]
    coarse, fine = reports
    ratio = coarse.l2_velocity / fine.l2_velocity
    order_u = np.log2(ratio) / np.log2(levels[1] / levels[0])
    order_p = np.log2(coarse.l2_pressure / fine.l2_pressure) / np.log2(levels[1] / levels[0])
    mesh = build_disk_mesh(levels[0], BoundaryGrid(8 * levels[0]))
    zero = stokes_verification(mesh, nu, zero_solution())
    zmax = max(zero.l2_velocity, zero.h1_velocity, zero.l2_pressure)
    beta = inf_sup_constant(mesh)
    return [
        CheckResult(
            f"velocity L2 error ratio n_rings {levels[0]}->{levels[1]}",
            bool(ratio >= 5),
            f"{coarse.l2_velocity:.3e} -> {fine.l2_velocity:.3e}, ratio {ratio:.2f} >= 5",
        ),
        CheckResult("velocity L2 order", bool(order_u >= 2.5), f"{order_u:.2f} >= 2.5"),
        CheckResult("pressure L2 order", bool(order_p >= 1.5), f"{order_p:.2f} >= 1.5"),
        _result("zero data gives zero solution", zmax, 1e-12),
        CheckResult("discrete inf-sup constant", bool(beta > 1e-3), f"{beta:.3f} > 0.001"),
    ]


def _system(n: int = 64, rings: int = 8) -> CoupledSystem:
    return CoupledSystem(build_disk_mesh(rings, BoundaryGrid(n)))


def _rotation_run(system: CoupledSystem, dt: float, steps: int, omega: float, kappa: float):
    params = SchemeParams(dt=dt, shell=ShellCoefficients(1.0, 1.0, kappa))
    x = system.mesh.nodes
    state = system.make_state(x, rotation_field(x, omega))
    area0 = system.enclosed_area(state)
    energy = system.energies(state, params.shell).total
    out = dict(load=0.0, drift=0.0, c=0.0, ke_excess=0.0, residual=0.0)
    for _ in range(steps):
        ke0 = system.kinetic_energy(state.velocity)
        loads = system.assemble_shell_loads(state.boundary, ShellCoefficients(1.0, 1.0, 0.0), dt)
        out["load"] = max(out["load"], float(np.abs(loads.explicit).max() / system.grid.spacing))
        state, budget = system.step(state, params)
        dke = abs(budget.kinetic - ke0)
        out["ke_excess"] = max(out["ke_excess"], dke - budget.residual)
        out["residual"] = max(out["residual"], budget.residual)
        out["c"] = max(out["c"], budget.residual / (dt * (energy + 1.0)))
        energy = budget.total
        out["drift"] = max(out["drift"], abs(system.enclosed_area(state) - area0) / area0)
    return out


def check_rigid_rotation(
    dts: tuple[float, ...] = (4e-3, 2e-3, 1e-3), steps: int = 100, omega: float = 0.5, kappa: float = 1e-2
) -> list[CheckResult]:
    system = _system()
    runs = {dt: _rotation_run(system, dt, steps, omega, kappa) for dt in dts}
    fine = runs[dts[-1]]
    cs = [runs[dt]["c"] for dt in dts]
    res = [
        _result(f"shell loads over {steps} steps, dt={dts[-1]:g}", fine["load"], 1e-8),
        _result(
            f"relative area drift over {steps} steps, dt={dts[-1]:g}", fine["drift"], 1e-3
        ),
        CheckResult(
            "per-step kinetic energy change bounded by budget residual",
            bool(max(r["ke_excess"] for r in runs.values()) <= 0.0),
            "max(|dKE| - residual) = "
            + ", ".join(f"{runs[dt]['ke_excess']:.2e}" for dt in dts),
        ),
        CheckResult(
            "budget residual <= C dt (E + 1) with one C across dt",
            bool(all(c <= cs[0] * (1 + 1e-9) for c in cs)),
            "C(dt) = " + ", ".join(f"{c:.3e}" for c in cs)
            + "; max residual = " + ", ".join(f"{runs[dt]['residual']:.2e}" for dt in dts),
        ),
    ]
    return res


def mode_amplitude(position: NDArray, k: int) -> float:
    r = np.linalg.norm(position, axis=1)
    return float(2 * abs(np.fft.rfft(r)[k]) / len(r))


def perturbed_eta(system: CoupledSystem, eps: float = 0.05, k: int = 2) -> NDArray:
    return initial_map(system.mesh.nodes, modes=((k, eps),))


def check_dissipation(steps: int = 200, dt: float = 1e-3, eps: float = 0.05) -> list[CheckResult]:
    system = _system()
    params = SchemeParams(dt=dt)
    state = system.make_state(perturbed_eta(system, eps))
    e_prev = system.energies(state, params.shell).total
    amp0 = mode_amplitude(state.boundary.position, 2)
    worst = -np.inf
    for _ in range(steps):
        state, budget = system.step(state, params)
        worst = max(worst, budget.total - e_prev - budget.residual)
        e_prev = budget.total
    amp1 = mode_amplitude(state.boundary.position, 2)
    return [
        CheckResult(
            f"total energy nonincreasing over {steps} steps",
            bool(worst <= 0.0),
            f"max(E_m+1 - E_m - residual) = {worst:.3e} <= 0",
        ),
        CheckResult(
            "mode-2 boundary amplitude decays", bool(amp1 < amp0), f"{amp0:.4f} -> {amp1:.4f}"
        ),
    ]


def kappa_differences(
    kappas: tuple[float, ...] = (1e-2, 5e-3, 2.5e-3), steps: int = 100, dt: float = 1e-3
) -> list[float]:
    """Discrete ``L2(0, T; H1)`` distances between runs at successive kappa."""
    system = _system()
    eta = perturbed_eta(system)
    runs = []
    for kappa in kappas:
        params = SchemeParams(dt=dt, shell=ShellCoefficients(1.0, 1.0, kappa))
        state = system.make_state(eta)
        vs = []
        for _ in range(steps):
            state, _ = system.step(state, params)
            vs.append(state.velocity)
        runs.append(vs)
    return [
        float(np.sqrt(sum(dt * system.h1_norm(u - v) ** 2 for u, v in zip(a, b))))
        for a, b in zip(runs[:-1], runs[1:])
    ]


def check_kappa_limit() -> list[CheckResult]:
    diffs = kappa_differences()
    ok = all(b < a for a, b in zip(diffs[:-1], diffs[1:]))
    return [
        CheckResult(
            "successive kappa differences decrease",
            bool(ok),
            " > ".join(f"{d:.3e}" for d in diffs),
        )
    ]


def check_equilibrium(steps: int = 50) -> list[CheckResult]:
    system = _system()
    state = rest = system.rest_state()
    params = SchemeParams()
    same = True
    for _ in range(steps):
        state, budget = system.step(state, params)
        same &= bool(
            np.array_equal(state.eta, rest.eta)
            and not np.any(state.velocity)
            and not np.any(state.pressure)
            and budget.residual == 0.0
        )
    return [CheckResult(f"rest state reproduced bitwise for {steps} steps", same, "eta, v, q, residual")]


SUITES: dict[str, list[Callable[[], list[CheckResult]]]] = {
    "geometry-identities": [check_geometric_identities, check_closed_form_tractions],
    "variational": [check_variational],
    "recovery": [check_recovery],
    "stokes": [check_stokes],
    "energy": [check_rigid_rotation, check_dissipation, check_equilibrium],
    "kappa-limit": [check_kappa_limit],
}


def run_suite(name: str) -> list[CheckResult]:
    out: list[CheckResult] = []
    for check in SUITES[name]:
        out.extend(check())
    return out
