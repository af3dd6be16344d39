"""
The direct method: implicit Euler in time, Newton on each step, adaptive
time steps and steady-state detection.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from config.settings import settings
from utils.cache_manager import cached
from utils.diagnostics import (
    Diagnostics,
    cell_peclet,
    concentration_range,
    peclet,
    perturbation_norms,
    project_on_eigenbasis,
    rayleigh,
    sherwood,
    solute_balance,
)
from utils.exceptions import (
    ConfigError,
    MaxStepsExceeded,
    MissingInflowSurface,
    NewtonDiverged,
    SingularMatrix,
)
from utils.fv_discretization import DofState, FluxStencil, residual_and_jacobian
from utils.model import SECONDS_PER_YEAR, Scenario, load_scenario
from utils.run_monitor import PhaseTimer, StepLog
from utils.sparse import lu_factor

# Configure logging
logging.basicConfig(level=getattr(logging, settings.LOG_LEVEL))
logger = logging.getLogger(__name__)

ELDER_SNAPSHOT_YEARS = (1.0, 2.0, 10.0, 20.0)


@dataclass
class NewtonStats:
    iterations: int
    residual: float
    increment: float


@dataclass
class RunState:
    """Mutable state of a direct run."""
    state: DofState
    previous: DofState
    t: float = 0.0
    dt: float = 0.0
    steps: int = 0
    newton_history: List[int] = field(default_factory=list)
    sherwood_history: List[float] = field(default_factory=list)
    snapshots: Dict[float, DofState] = field(default_factory=dict)
    stop_reason: str = ""
    equilibrium: Optional[DofState] = None


def newton_solve(
    x_guess: np.ndarray,
    x_old: Optional[np.ndarray],
    dt: Optional[float],
    stencil: FluxStencil,
    tol: float = settings.NEWTON_TOL,
    max_iter: int = settings.NEWTON_MAX_ITER,
    timer: Optional[PhaseTimer] = None,
) -> Tuple[np.ndarray, NewtonStats]:
    """
    Solve one implicit step (or the steady system when ``dt`` is None).

    Convergence is declared when the next Newton increment in concentration
    is below ``tol``; that increment is applied before returning, so a linear
    residual converges in one iteration.

    Args:
        x_guess: initial iterate
        x_old: previous time level (ignored for the steady system)
        dt: time step [s], or None for the steady residual
        stencil: flux stencil of the mesh
        tol: bound on the max-norm of the concentration increment
        max_iter: iteration cap

    Returns:
        (converged unknowns, NewtonStats)

    Raises:
        NewtonDiverged: iteration cap, residual growth, non-finite values or
            a singular Jacobian
    """
    if dt is not None and not dt > 0:
        raise ConfigError(f"Time step must be positive, got {dt}")
    timer = timer or PhaseTimer()
    W = stencil.layout.W

    def increment(x):
        with timer.phase("assembly"):
            r, J = residual_and_jacobian(x, x_old, dt, stencil)
        if not np.all(np.isfinite(r)):
            raise NewtonDiverged("Residual is not finite")
        try:
            with timer.phase("lu"):
                factors = lu_factor(J)
            with timer.phase("linsolve"):
                dx = -factors.solve(r)
        except SingularMatrix as e:
            logger.error(f"Newton Jacobian is singular: {e}")
            raise NewtonDiverged(f"Failed to solve the Newton system: {e}")
        if not np.all(np.isfinite(dx)):
            raise NewtonDiverged("Newton increment is not finite")
        return r, dx

    x = np.asarray(x_guess, dtype=float).copy()
    r, dx = increment(x)
    r0 = max(np.max(np.abs(r)), np.finfo(float).tiny)
    for it in range(1, max_iter + 1):
        x = x + dx
        r, dx = increment(x)
        res = float(np.max(np.abs(r)))
        dw = float(np.max(np.abs(dx[W]))) if dx[W].size else 0.0
        if dw <= tol:
            x = x + dx
            logger.debug(f"Newton converged in {it} iterations, residual {res:.3e}")
            return x, NewtonStats(iterations=it, residual=res, increment=dw)
        if res > settings.NEWTON_DIVERGENCE_FACTOR * r0:
            raise NewtonDiverged(f"Residual grew from {r0:.3e} to {res:.3e} at iteration {it}")
    raise NewtonDiverged(f"Newton did not converge in {max_iter} iterations")


def initial_guess_state(stencil: FluxStencil) -> np.ndarray:
    return np.zeros(stencil.layout.size)


def equilibrium_state(scenario: Scenario, stencil: Optional[FluxStencil] = None) -> np.ndarray:
    """
    Steady diffusive state of the full system.

    The transport problem without buoyancy is solved first (it is linear); the
    result starts a Newton solve of the steady system with buoyancy.
    """
    return _equilibrium(scenario, stencil)


def _scenario_key(scenario: Scenario, stencil: Optional[FluxStencil] = None) -> str:
    return scenario.fingerprint()


@cached(ttl=settings.CACHE_TTL, key_prefix="equilibrium", key_fn=_scenario_key)
def _equilibrium(scenario: Scenario, stencil: Optional[FluxStencil] = None) -> np.ndarray:
    mesh = stencil.mesh if stencil is not None else scenario.build_mesh()
    full = stencil or FluxStencil.build(mesh, scenario.params, scenario.bc)
    decoupled = FluxStencil.build(mesh, scenario.params, scenario.bc, gravity=False,
                                  partition=full.partition)
    x0, _ = newton_solve(initial_guess_state(decoupled), None, None, decoupled)
    if not full.gravity or scenario.params.buoyancy == 0:
        return x0
    x, stats = newton_solve(x0, None, None, full, tol=settings.EQUILIBRIUM_TOL * scenario.params.omega_max)
    logger.info(f"Equilibrium of {scenario.name} reached in {stats.iterations} Newton iterations")
    return x


def perturb(x: np.ndarray, stencil: FluxStencil, amplitude: float, seed: int) -> np.ndarray:
    """Add a seeded uniform perturbation of the given amplitude to W, zero on Dirichlet cells."""
    rng = np.random.default_rng(seed)
    noise = amplitude * rng.uniform(-1.0, 1.0, stencil.layout.num_cells)
    noise[stencil.dirichlet_transport_cells()] = 0.0
    x = x.copy()
    x[stencil.layout.W] += noise
    return x


def initial_state(scenario: Scenario, stencil: FluxStencil) -> Tuple[np.ndarray, np.ndarray]:
    """(initial unknowns, equilibrium unknowns) for the scenario's initial condition."""
    if scenario.initial == "zero-solute":
        x = initial_guess_state(stencil)
        return x, x.copy()
    eq = equilibrium_state(scenario, stencil)
    if scenario.initial == "diffusive-steady":
        return eq.copy(), eq
    amplitude = scenario.run.perturbation * scenario.params.omega_max
    return perturb(eq, stencil, amplitude, scenario.run.seed), eq


Until = Union[None, str, float]


def advance_to_steady(
    scenario: Scenario,
    until: Until = None,
    stencil: Optional[FluxStencil] = None,
    projection: Optional[np.ndarray] = None,
    on_step: Optional[Callable[[RunState], None]] = None,
    on_snapshot: Optional[Callable[[float, DofState], None]] = None,
    timer: Optional[PhaseTimer] = None,
    step_log: Optional[StepLog] = None,
) -> Tuple[RunState, Diagnostics]:
    """
    Integrate a scenario in time.

    Args:
        scenario: scenario to run
        until: None uses the scenario's run controls; "steady" runs to steady
            state; "convection" stops once Sh exceeds 1 by the detection
            margin; a number is an end time in seconds
        stencil: prebuilt flux stencil (built from the scenario if None)
        projection: optional (n_cells, k) eigenvectors for projections
        on_step: called after every accepted step
        on_snapshot: called at each requested snapshot time
        timer: phase timer to accumulate into
        step_log: per-step log to append to

    Returns:
        (final RunState, Diagnostics)

    Raises:
        MaxStepsExceeded: step budget exhausted
        NewtonDiverged: failure at the minimum (or fixed) time step
    """
    timer = timer or PhaseTimer()
    run = scenario.run
    params = scenario.params
    with timer.phase("init"):
        if stencil is None:
            stencil = FluxStencil.build(scenario.build_mesh(), params, scenario.bc)
        mesh = stencil.mesh
        x, x_eq = initial_state(scenario, stencil)

    T_diff = scenario.diffusive_time
    t_end = run.t_end
    steady = run.steady
    if until == "steady":
        steady, t_end = True, None
    elif until == "convection":
        steady = True
    elif isinstance(until, (int, float)) and not isinstance(until, bool):
        steady, t_end = False, float(until)
    if not steady and t_end is None:
        raise ConfigError(f"Scenario {scenario.name} has neither an end time nor a steady target")

    dt_max = settings.DT_MAX_FRACTION * T_diff
    dt_min = settings.DT_MIN_FRACTION * T_diff
    dt = run.dt0 if run.dt0 is not None else settings.DT_INITIAL_FRACTION * T_diff
    snapshots = sorted(s for s in run.snapshots if s > 0 and (t_end is None or s <= t_end * (1 + 1e-12)))
    has_inflow = scenario.inflow_side is not None

    diag = Diagnostics(
        rayleigh=rayleigh(params, mesh.height),
        peclet=peclet(params, mesh.height, float(np.max(mesh.spacing))),
    )
    W_eq = x_eq[stencil.layout.W]
    state = RunState(
        state=DofState.from_vector(x, stencil.layout),
        previous=DofState.from_vector(x, stencil.layout),
        dt=dt,
        equilibrium=DofState.from_vector(x_eq, stencil.layout),
    )
    logger.info(
        f"Running {scenario.name}: {mesh.num_cells} cells, Ra = {diag.rayleigh:.4g}, "
        f"T_diff = {T_diff:.4g} s, initial dt = {dt:.4g} s"
    )

    while True:
        if state.steps >= run.max_steps:
            raise MaxStepsExceeded(f"Reached {run.max_steps} steps at t = {state.t:.6g} s")
        step_dt = dt
        limit = t_end
        if snapshots:
            limit = snapshots[0] if limit is None else min(limit, snapshots[0])
        if limit is not None:
            step_dt = min(step_dt, limit - state.t)

        try:
            x_new, stats = newton_solve(
                x, x, step_dt, stencil, tol=run.newton_tol, max_iter=run.newton_max_iter, timer=timer,
            )
        except NewtonDiverged as e:
            if run.fixed_dt or step_dt <= dt_min:
                logger.error(f"Newton failed at t = {state.t:.6g} s with dt = {step_dt:.4g} s: {e}")
                raise NewtonDiverged(f"Failed to advance {scenario.name} at t = {state.t:.6g} s: {e}")
            dt = max(step_dt * settings.DT_SHRINK_FACTOR, dt_min)
            logger.warning(f"Newton failed ({e}); halving time step to {dt:.4g} s")
            continue

        old = DofState.from_vector(x, stencil.layout)
        new = DofState.from_vector(x_new, stencil.layout)
        dW = float(np.max(np.abs(new.W - old.W)))
        x = x_new
        state.previous, state.state = old, new
        state.t += step_dt
        state.steps += 1
        state.dt = step_dt
        state.newton_history.append(stats.iterations)

        sh = None
        if has_inflow:
            try:
                sh = sherwood(new, stencil, scenario.inflow_side)
            except MissingInflowSurface:
                has_inflow = False
        state.sherwood_history.append(np.nan if sh is None else sh)
        w_min, w_max, overshoot = concentration_range(new.W, params.omega_max)
        if overshoot > 0.01 * params.omega_max:
            logger.warning(f"Concentration overshoot {overshoot:.3e} at t = {state.t:.6g} s")
        alpha = None
        if projection is not None:
            alpha = project_on_eigenbasis(new.W, W_eq, projection, stencil.mass)
        diag.record(state.t, sh, perturbation_norms(new.W, W_eq, stencil.mass), alpha)
        balance = solute_balance(new, old, step_dt, stencil)
        if step_log is not None:
            step_log.append(
                step=state.steps, t=state.t, dt=step_dt, newton_iterations=stats.iterations,
                residual=stats.residual, sherwood=np.nan if sh is None else sh,
                w_min=w_min, w_max=w_max, peclet=cell_peclet(new, stencil),
                solute_balance=balance,
            )
        logger.debug(
            f"step {state.steps}: t = {state.t:.6g} s, dt = {step_dt:.4g} s, "
            f"newton {stats.iterations}, |dW| = {dW:.3e}, Sh = {sh}"
        )
        if on_step is not None:
            on_step(state)

        if snapshots and state.t >= snapshots[0] * (1 - 1e-12):
            t_snap = snapshots.pop(0)
            state.snapshots[t_snap] = new.copy()
            logger.info(f"Snapshot at t = {t_snap / SECONDS_PER_YEAR:.4g} yr: "
                        f"W in [{w_min:.4g}, {w_max:.4g}]")
            if on_snapshot is not None:
                on_snapshot(t_snap, new)

        if until == "convection" and sh is not None and sh > 1.0 + settings.SHERWOOD_CONVECTION_MARGIN:
            state.stop_reason = "convection"
            break
        if steady and step_dt >= settings.STEADY_DT_FRACTION * T_diff \
                and dW / step_dt <= settings.STEADY_RATE * params.omega_max:
            state.stop_reason = "steady"
            break
        if t_end is not None and state.t >= t_end * (1 - 1e-12):
            state.stop_reason = "end_time"
            break

        if not run.fixed_dt:
            if stats.iterations <= settings.DT_GROW_MAX_NEWTON \
                    and dW <= settings.DW_GROW_LIMIT * params.omega_max:
                dt = min(dt * settings.DT_GROW_FACTOR, dt_max)
            elif stats.iterations >= settings.DT_SHRINK_MIN_NEWTON:
                dt = max(dt * settings.DT_SHRINK_FACTOR, dt_min)

    logger.info(
        f"Finished {scenario.name} after {state.steps} steps at t = {state.t:.6g} s "
        f"({state.stop_reason}); Sh = {state.sherwood_history[-1] if state.sherwood_history else None}"
    )
    return state, diag


def run_elder(
    level: int,
    dt: float = SECONDS_PER_YEAR / 12.0,
    scenario: Optional[Scenario] = None,
    gravity: bool = True,
    stencil: Optional[FluxStencil] = None,
    projection: Optional[np.ndarray] = None,
    on_snapshot: Optional[Callable[[float, DofState], None]] = None,
    timer: Optional[PhaseTimer] = None,
    step_log: Optional[StepLog] = None,
) -> Tuple[RunState, Diagnostics]:
    """
    Elder problem on 2^(2l+1) cells with a fixed time step up to 20 years.

    Args:
        level: refinement level l (4, 5 and 6 are the reference grids)
        dt: fixed time step [s]
        scenario: base scenario (the catalog ``elder`` entry if None)
        gravity: False runs the pure-diffusion fill
        stencil: prebuilt flux stencil of the level grid (built if None)
        projection: optional (n_cells, k) eigenvectors on that grid

    Returns:
        (RunState with snapshots at 1, 2, 10 and 20 years, Diagnostics)

    Raises:
        ConfigError: level below 2, or a stencil built on another grid
    """
    if level < 2:
        raise ConfigError(f"Elder level must be at least 2, got {level}")
    base = scenario or load_scenario("elder" if gravity else "elder-nogravity")
    if not gravity and base.params.g != 0:
        base = base.with_params(g=0.0)
    snapshots = tuple(y * SECONDS_PER_YEAR for y in ELDER_SNAPSHOT_YEARS)
    elder = replace(
        base.with_resolution((2 ** (level + 1), 2 ** level)),
        run=replace(base.run, dt0=dt, fixed_dt=True, steady=False,
                    t_end=snapshots[-1], snapshots=snapshots),
    )
    if stencil is not None and tuple(stencil.mesh.resolution) != elder.resolution:
        raise ConfigError(
            f"Stencil grid {tuple(stencil.mesh.resolution)} does not match Elder level {level} "
            f"grid {elder.resolution}"
        )
    state, diag = advance_to_steady(elder, stencil=stencil, projection=projection,
                                    on_snapshot=on_snapshot, timer=timer, step_log=step_log)
    for t_snap, snap in state.snapshots.items():
        lo, hi, _ = concentration_range(snap.W, elder.params.omega_max)
        logger.info(f"Elder l={level} at {t_snap / SECONDS_PER_YEAR:.0f} yr: min W = {lo:.4g}, max W = {hi:.4g}")
    return state, diag
