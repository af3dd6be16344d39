"""
Broken fracture circuits: a rectangular loop of fractures whose top edge is
split into two overlapping plates offset by a gap. The sweep relates the
leading eigenvalue to the conductance ratio of the gap.
"""

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd

from config.settings import settings
from utils.diagnostics import gap_criterion
from utils.exceptions import ConfigError
from utils.mesh import Fracture
from utils.model import Scenario
from utils.stability import assess_stability

# Configure logging
logging.basicConfig(level=getattr(logging, settings.LOG_LEVEL))
logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ["k_m", "eps", "A", "dx", "criterion", "lambda1", "unstable"]


def loop_box(scenario: Scenario) -> Tuple[float, float, float, float]:
    """(x0, x1, z0, z1) of the circuit from the scenario's [geometry] table."""
    try:
        geo = scenario.geometry
        return float(geo["x0"]), float(geo["x1"]), float(geo["z0"]), float(geo["z1"])
    except KeyError as e:
        raise ConfigError(f"Scenario {scenario.name} has no gap loop geometry: missing {e}")


def plate_length(scenario: Scenario, A: float) -> float:
    """Length of each top plate so that the two overlap by A."""
    x0, x1, _, _ = loop_box(scenario)
    return 0.5 * (x1 - x0 + A)


def gap_fractures(scenario: Scenario, eps: float, A: float) -> Tuple[Fracture, ...]:
    """
    Fractures of the broken circuit.

    The left plate lies on the loop top, the right plate eps below it; the
    right wall stops at the lower plate.

    Raises:
        ConfigError: non-positive gap or overlap, or plates longer than the loop
    """
    x0, x1, z0, z1 = loop_box(scenario)
    if not eps > 0 or not A > 0:
        raise ConfigError(f"Gap offset and overlap must be positive, got eps = {eps}, A = {A}")
    if not A < x1 - x0 or not eps < z1 - z0:
        raise ConfigError(f"Gap (eps = {eps}, A = {A}) does not fit the loop box")
    dx = plate_length(scenario, A)
    b = scenario.params.b
    k_f = scenario.params.k_f
    z_low = z1 - eps
    segments = [
        ("left-wall", (x0, z0), (x0, z1)),
        ("bottom", (x0, z0), (x1, z0)),
        ("right-wall", (x1, z0), (x1, z_low)),
        ("upper-plate", (x0, z1), (x0 + dx, z1)),
        ("lower-plate", (x1 - dx, z_low), (x1, z_low)),
    ]
    return tuple(Fracture(points=(p, q), aperture=b, permeability=k_f, name=name)
                 for name, p, q in segments)


def gap_scenario(base: Scenario, k_m: float, eps: float, A: float) -> Scenario:
    """Base scenario with matrix permeability k_m and the circuit for (eps, A)."""
    return replace(
        base.with_params(k=k_m),
        name=f"{base.name}-k{k_m:g}-e{eps:g}-A{A:g}",
        fractures=gap_fractures(base, eps, A),
    )


def _sweep_point(args: Tuple[Scenario, float, float, float, int]) -> Dict[str, Any]:
    base, k_m, eps, A, k = args
    scenario = gap_scenario(base, k_m, eps, A)
    dx = plate_length(base, A)
    analysis = assess_stability(scenario, k=k, classify=False)
    lam = float(np.real(analysis.result.leading))
    return {
        "k_m": k_m,
        "eps": eps,
        "A": A,
        "dx": dx,
        "criterion": gap_criterion(k_m, base.params.k_f, base.params.b, A, dx, eps),
        "lambda1": lam,
        "unstable": lam > 0,
    }


def sweep_gap(
    base: Scenario,
    k_m_values: Iterable[float],
    eps_values: Iterable[float],
    A_values: Iterable[float],
    k: int = 2,
    threads: Optional[int] = None,
) -> pd.DataFrame:
    """
    Leading eigenvalue over a grid of (k_m, eps, A).

    Points run in a process pool of ``threads`` workers (settings.THREADS by
    default); rows come back in grid order whatever the worker count.

    Returns:
        DataFrame with columns SWEEP_COLUMNS
    """
    threads = settings.THREADS if threads is None else threads
    if threads < 1:
        raise ConfigError(f"Worker count must be >= 1, got {threads}")
    points = [(base, float(km), float(e), float(a), k)
              for km, e, a in itertools.product(k_m_values, eps_values, A_values)]
    for _, _, eps, A, _ in points:
        gap_fractures(base, eps, A)
    logger.info(f"Gap sweep over {len(points)} points with {threads} worker(s)")
    if threads == 1:
        rows = [_sweep_point(p) for p in points]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_sweep_point, points))
    return pd.DataFrame(rows, columns=SWEEP_COLUMNS)


def monotonicity_violations(frame: pd.DataFrame, tol: float = 1e-6) -> List[str]:
    """
    Sweep rows where the leading eigenvalue moves the wrong way: it should
    not decrease with k_m or A, nor increase with eps.
    """
    problems = []
    trends = (("k_m", ("eps", "A"), 1.0), ("A", ("k_m", "eps"), 1.0), ("eps", ("k_m", "A"), -1.0))
    for axis, fixed, sign in trends:
        for key, group in frame.groupby(list(fixed)):
            values = group.sort_values(axis)["lambda1"].to_numpy()
            steps = sign * np.diff(values)
            scale = max(float(np.max(np.abs(values))), 1.0)
            for i in np.flatnonzero(steps < -tol * scale):
                problems.append(f"lambda1 not monotone in {axis} at {dict(zip(fixed, key))} (step {i})")
    return problems
