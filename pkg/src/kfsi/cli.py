"""Batch driver: ``kfsi --config PATH [--output-dir PATH] [--mode M] [--frames-every K]``.

Exit status: 0 completed or all checks passed, 1 unexpected failure,
2 configuration error, 3 tangled mesh or degenerate curve, 4 failed check.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import RunConfig, load_config, validate
from .errors import (
    ConfigError,
    DegenerateCurveError,
    KfsiError,
    OrientationError,
    TangledMeshError,
)
from .mesh import mesh_quality
from .scenario import build_scenario
from .solver import CoupledSystem, EnergyBudget, SolutionState

log = logging.getLogger("kfsi")

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_TANGLED, EXIT_CHECK = 0, 1, 2, 3, 4

COLUMNS = (
    "t",
    "kinetic",
    "membrane",
    "bending",
    "kappa_energy",
    "dissipation_rate",
    "work_rate",
    "budget_residual",
    "enclosed_area",
    "min_jacobian",
    "fp_iters",
)

_FATAL = (TangledMeshError, DegenerateCurveError, OrientationError)


def _num(x: float) -> str:
    return repr(float(x))


def _row(system: CoupledSystem, state: SolutionState, budget: EnergyBudget, iters: int) -> list[str]:
    min_jac, _ = mesh_quality(system.mesh, state.deformation)
    values = (
        state.time,
        budget.kinetic,
        budget.membrane,
        budget.bending,
        budget.kappa_energy,
        budget.dissipation_rate,
        budget.work_rate,
        budget.residual,
        system.enclosed_area(state),
        min_jac,
    )
    return [_num(v) for v in values] + [str(iters)]


def write_frame(path: Path, system: CoupledSystem, state: SolutionState) -> None:
    mesh = system.mesh
    eta, v = state.eta, state.velocity
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["node_kind", "index", "x", "y", "vx", "vy"])
        for k, node in enumerate(mesh.boundary_map):
            out.writerow(["boundary", k, *(_num(c) for c in (*eta[node], *v[node]))])
        for node in mesh.interior_nodes:
            out.writerow(["interior", int(node), *(_num(c) for c in (*eta[node], *v[node]))])


def simulate(config: RunConfig, output_dir: Path) -> int:
    output_dir.mkdir(parents=True, exist_ok=True)
    try:
        scen = build_scenario(config)
    except _FATAL as exc:
        print(f"initial configuration is not admissible: {exc}", file=sys.stderr)
        return EXIT_TANGLED
    system, state, params = scen.system, scen.initial, scen.params
    stride = config.frame_stride
    with open(output_dir / "timeseries.csv", "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(COLUMNS)
        out.writerow(_row(system, state, system.energies(state, params.shell), 0))
        write_frame(output_dir / "frame_000000.csv", system, state)
        for step in range(1, config.n_steps + 1):
            try:
                result = system.fixed_point_step(state, params)
            except _FATAL as exc:
                fh.flush()
                write_frame(output_dir / "final_state.csv", system, state)
                where = f" in element {exc.element}" if isinstance(exc, TangledMeshError) else ""
                print(
                    f"stopped at step {step} (t = {state.time + params.dt:.6g}){where}: {exc}; "
                    f"last valid state written to {output_dir / 'final_state.csv'}",
                    file=sys.stderr,
                )
                return EXIT_TANGLED
            state = result.state
            out.writerow(_row(system, state, result.budget, result.iterations))
            if step % stride == 0:
                write_frame(output_dir / f"frame_{step:06d}.csv", system, state)
    return EXIT_OK


def verify(suite: str) -> int:
    from .verification import run_suite

    results = run_suite(suite)
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{suite}: {len(results) - failed}/{len(results)} passed")
    return EXIT_OK if failed == 0 else EXIT_CHECK


def run(config: RunConfig, output_dir: str | Path | None = None) -> int:
    if config.suite is not None:
        return verify(config.suite)
    return simulate(config, Path(output_dir or config.output_dir))


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kfsi", description="Fluid inside an elastic Koiter shell.")
    p.add_argument("--config", required=True, help="key = value configuration file")
    p.add_argument("--output-dir", help="overrides output_dir")
    p.add_argument("--mode", help="simulate or verify:<suite>; overrides mode")
    p.add_argument("--frames-every", type=int, metavar="K", help="overrides frame_stride")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        config = load_config(args.config)
        overrides = {}
        if args.output_dir is not None:
            overrides["output_dir"] = args.output_dir
        if args.mode is not None:
            overrides["mode"] = args.mode
        if args.frames_every is not None:
            overrides["frame_stride"] = args.frames_every
        config = validate(replace(config, **overrides))
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return run(config)
    except KfsiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
