"""
convecta command line.

Runs the direct method (time integration to steady state) and the eigenvalue
method (linear stability of the diffusive equilibrium) on catalog scenarios,
plus the gap sweep, the critical Rayleigh search, catalog browsing and run
comparison.
"""

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent))

from config.settings import settings
from utils.diagnostics import fit_growth_rate, peclet, rayleigh
from utils.exceptions import (
    AnalysisError,
    ConfigError,
    IoError,
    MeshError,
    NoConvergence,
    SolverError,
)
from utils.field_export import projection_frame, sherwood_frame, write_fields, write_mode
from utils.fv_discretization import FluxStencil
from utils.gap_study import monotonicity_violations, sweep_gap
from utils.model import SECONDS_PER_YEAR, Scenario, list_catalog, load_scenario
from utils.run_monitor import PhaseTimer, RunReport, StepLog, compare_reports, load_report, write_frame
from utils.stability import assess_stability, critical_rayleigh, grid_check
from utils.timestepping import advance_to_steady, run_elder

# Configure logging
logging.basicConfig(level=getattr(logging, settings.LOG_LEVEL))
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_SOLVER = 2
EXIT_CONFIG = 3


def parse_until(value: Optional[str]):
    """'steady', 'convection', seconds, or years with a 'yr' suffix."""
    if value is None or value in ("steady", "convection"):
        return value
    try:
        if value.endswith("yr"):
            return float(value[:-2]) * SECONDS_PER_YEAR
        return float(value)
    except ValueError:
        raise ConfigError(f"Invalid --until value '{value}'")


def with_seed(scenario: Scenario, seed: Optional[int]) -> Scenario:
    if seed is None:
        return scenario
    return replace(scenario, run=replace(scenario.run, seed=seed), eig=replace(scenario.eig, seed=seed))


def output_dir(out: Optional[str], scenario: Scenario, method: str) -> Path:
    path = Path(out) if out else settings.OUTPUT_DIR / f"{scenario.name}-{method}"
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoError(f"Failed to create output directory {path}: {e}")
    return path


def _report(scenario: Scenario, method: str, stencil: FluxStencil) -> RunReport:
    mesh = stencil.mesh
    return RunReport(
        scenario=scenario.name,
        method=method,
        grid={f"{d}d": n for d, n in mesh.cells_per_dimension().items()},
        rayleigh=rayleigh(scenario.params, scenario.height),
        peclet=peclet(scenario.params, scenario.height, float(np.max(mesh.spacing))),
        metadata={
            "provenance": scenario.provenance,
            "seed": scenario.run.seed,
            "intersection_aperture": "min",
            "interface_trace": "bulk",
        },
    )


def cmd_run(args) -> int:
    """Direct method."""
    scenario = with_seed(load_scenario(args.scenario), args.seed)
    out = output_dir(args.out, scenario, "direct")
    timer = PhaseTimer()
    step_log = StepLog()
    written: List[Path] = []

    if args.level is not None:
        scenario = scenario.with_resolution((2 ** (args.level + 1), 2 ** args.level))
    stencil = None
    projection = None
    if args.project:
        analysis = assess_stability(scenario, k=args.project, classify=False, timer=timer)
        stencil = analysis.stencil
        projection = analysis.result.eigenvectors
    if stencil is None:
        with timer.phase("init"):
            stencil = FluxStencil.build(scenario.build_mesh(), scenario.params, scenario.bc)

    def on_snapshot(t, snap):
        if args.vtk:
            stem = out / f"fields_{t / SECONDS_PER_YEAR:g}yr"
            written.extend(write_fields(snap, stencil.mesh, stem, stencil))

    if args.level is not None:
        state, diag = run_elder(args.level, scenario=scenario, stencil=stencil, projection=projection,
                                on_snapshot=on_snapshot, timer=timer, step_log=step_log)
    else:
        state, diag = advance_to_steady(
            scenario, until=parse_until(args.until), stencil=stencil, projection=projection,
            on_snapshot=on_snapshot, timer=timer, step_log=step_log,
        )

    written.append(step_log.to_csv(out / "steps.csv"))
    written.append(write_frame(sherwood_frame(diag), out / "sherwood.csv"))
    results = {
        "sherwood": diag.sherwood[-1] if diag.sherwood else None,
        "steps": state.steps,
        "t_final": state.t,
        "stop_reason": state.stop_reason,
        "reference_sherwood": scenario.reference.get("sherwood"),
    }
    if projection is not None:
        written.append(write_frame(projection_frame(diag), out / "projections.csv"))
        try:
            rate = fit_growth_rate(diag.times, diag.perturbation_max, 0.01 * scenario.params.omega_max)
            results["growth_rate"] = rate * scenario.diffusive_time
        except AnalysisError as e:
            logger.warning(f"No growth rate fitted: {e}")
    if args.vtk:
        written.extend(write_fields(state.state, stencil.mesh, out / "fields_final", stencil))

    report = _report(scenario, "direct", stencil)
    report.results = results
    for path in written:
        report.add_file(path)
    report.finalize(timer)
    report.save(out)
    print(f"{scenario.name}: Sh = {results['sherwood']} after {state.steps} steps ({state.stop_reason})")
    return EXIT_OK


def _save_eigen(scenario, analysis, out: Path, timer: PhaseTimer, vtk: bool) -> RunReport:
    result = analysis.result
    written = [write_frame(result.to_frame(), out / "eigenvalues.csv")]
    if vtk:
        for i in range(result.eigenvectors.shape[1]):
            written.extend(write_mode(result.eigenvectors[:, i], analysis.stencil.mesh, out / f"mode_{i + 1}"))
    report = _report(scenario, "eig", analysis.stencil)
    report.results = {
        "eigenvalues": np.asarray(result.eigenvalues).tolist(),
        "errors": result.errors.tolist(),
        "grid_errors": None if result.grid_errors is None else result.grid_errors.tolist(),
        "labels": result.labels,
        "verdict": analysis.verdict,
        "matvecs": result.matvecs,
        "restarts": result.restarts,
        "converged": result.converged,
        "early_exit": result.early_exit,
        "norm": "euclidean",
        "reference_eigenvalues": scenario.reference.get("eigenvalues"),
    }
    for path in written:
        report.add_file(path)
    report.finalize(timer)
    report.save(out)
    return report


def cmd_eig(args) -> int:
    """Eigenvalue method."""
    scenario = with_seed(load_scenario(args.scenario), args.seed)
    out = output_dir(args.out, scenario, "eig")
    timer = PhaseTimer()
    try:
        analysis = assess_stability(scenario, k=args.k, tol=args.tol, early_exit=args.early_exit,
                                    timer=timer)
    except NoConvergence as e:
        logger.warning(f"Eigensolver did not converge: {e}")
        if e.partial is not None:
            write_frame(e.partial.to_frame(), out / "eigenvalues_partial.csv")
        raise
    if args.grid_check:
        grid_check(scenario, analysis)
    _save_eigen(scenario, analysis, out, timer, args.vtk)
    result = analysis.result
    for i, value in enumerate(np.asarray(result.eigenvalues, dtype=complex)):
        label = result.labels[i] if i < len(result.labels) else ""
        print(f"lambda_{i + 1} = {value.real:.6g}{value.imag:+.6g}j  err = {result.errors[i]:.2e}  {label}")
    print(f"{scenario.name}: {analysis.verdict}")
    return EXIT_OK


def cmd_sweep_gap(args) -> int:
    scenario = with_seed(load_scenario(args.scenario), args.seed)
    out = output_dir(args.out, scenario, "sweep")
    frame = sweep_gap(scenario, args.km, args.eps, args.area, k=args.k, threads=args.threads)
    path = write_frame(frame, out / "sweep.csv")
    for problem in monotonicity_violations(frame):
        logger.warning(problem)
    print(f"Wrote {len(frame)} sweep points to {path}")
    return EXIT_OK


def cmd_critical_ra(args) -> int:
    scenario = with_seed(load_scenario(args.scenario), args.seed)
    out = output_dir(args.out, scenario, "critical-ra")
    found = critical_rayleigh(scenario, bracket=(args.lo, args.hi), max_solves=args.max_solves)
    write_frame(pd.DataFrame(found.history, columns=["rayleigh", "lambda1"]), out / "critical_ra.csv")
    print(f"{scenario.name}: critical Ra = {found.rayleigh:.6g} (bracket {found.bracket[0]:.6g}..{found.bracket[1]:.6g})")
    return EXIT_OK


def cmd_catalog(args) -> int:
    if args.action == "list":
        frame = pd.DataFrame(list_catalog(str(settings.SCENARIO_DIR)))
        print(frame.to_string(index=False))
        return EXIT_OK
    if not args.name:
        raise ConfigError("catalog show needs a scenario name")
    print(json.dumps(load_scenario(args.name).to_dict(), indent=2, default=str))
    return EXIT_OK


def cmd_compare(args) -> int:
    comparison = compare_reports(load_report(args.run_a), load_report(args.run_b))
    print(json.dumps(comparison, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="convecta", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="direct method: time integration")
    run.add_argument("scenario")
    run.add_argument("--until", help="steady, convection, <seconds> or <years>yr")
    run.add_argument("--level", type=int, help="Elder refinement level (fixed-step benchmark run)")
    run.add_argument("--project", type=int, default=0, metavar="K",
                     help="project the perturbation on K eigenvectors")
    run.add_argument("--vtk", action="store_true", help="write VTK fields")
    run.add_argument("--out")
    run.add_argument("--seed", type=int)
    run.set_defaults(handler=cmd_run)

    eig = sub.add_parser("eig", help="eigenvalue method: linear stability")
    eig.add_argument("scenario")
    eig.add_argument("-k", type=int)
    eig.add_argument("--tol", type=float)
    eig.add_argument("--grid-check", action="store_true")
    eig.add_argument("--early-exit", action="store_true")
    eig.add_argument("--vtk", action="store_true", help="write eigenvector fields")
    eig.add_argument("--out")
    eig.add_argument("--seed", type=int)
    eig.set_defaults(handler=cmd_eig)

    gap = sub.add_parser("sweep-gap", help="broken-circuit parameter study")
    gap.add_argument("scenario", nargs="?", default="hrl-gap")
    gap.add_argument("--km", type=float, nargs="+", default=[1e-16, 3e-16, 1e-15])
    gap.add_argument("--eps", type=float, nargs="+", default=[0.25, 0.5, 1.0])
    gap.add_argument("--area", type=float, nargs="+", default=[0.5, 1.0, 2.0])
    gap.add_argument("-k", type=int, default=2)
    gap.add_argument("--threads", type=int)
    gap.add_argument("--out")
    gap.add_argument("--seed", type=int)
    gap.set_defaults(handler=cmd_sweep_gap)

    ra = sub.add_parser("critical-ra", help="bisect the Rayleigh number of marginal stability")
    ra.add_argument("scenario")
    ra.add_argument("--lo", type=float, default=10.0)
    ra.add_argument("--hi", type=float, default=100.0)
    ra.add_argument("--max-solves", type=int, default=8)
    ra.add_argument("--out")
    ra.add_argument("--seed", type=int)
    ra.set_defaults(handler=cmd_critical_ra)

    catalog = sub.add_parser("catalog", help="list or show catalog scenarios")
    catalog.add_argument("action", choices=["list", "show"])
    catalog.add_argument("name", nargs="?")
    catalog.set_defaults(handler=cmd_catalog)

    compare = sub.add_parser("compare", help="Sherwood and eigenvalue deltas of two runs")
    compare.add_argument("run_a")
    compare.add_argument("run_b")
    compare.set_defaults(handler=cmd_compare)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings.validate()
        return args.handler(args)
    except (ConfigError, MeshError, IoError) as e:
        logger.error(f"Configuration error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, AnalysisError) as e:
        logger.error(f"Solver error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
