"""
The eigenvalue method: linear stability of the diffusive equilibrium.

Linearizing the steady residual at an equilibrium splits the Jacobian into
blocks for the evolving concentrations W and the non-evolving unknowns
Y = [P, Lambda, Theta, mu]. Eliminating Y gives the reduced operator

    S = M^-1 (A_wy A_yy^-1 A_yw - A_ww)

whose eigenvalues are the growth rates of small perturbations. S is never
formed: each product costs one solve with the factored A_yy. The leading
eigenvalues (largest real part) come from a restarted Krylov-Schur iteration
in the M-inner product.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.linalg as la
import scipy.sparse as sp

from config.settings import settings
from utils.diagnostics import rayleigh
from utils.exceptions import (
    AnalysisError,
    ConfigError,
    CountMismatch,
    NoConvergence,
    NotAnEquilibrium,
    SingularAyy,
    SingularMatrix,
)
from utils.fv_discretization import FluxStencil, residual_and_jacobian
from utils.mesh import DofLayout, MixedDimMesh
from utils.model import Scenario, coarse_resolution
from utils.run_monitor import PhaseTimer
from utils.sparse import LUFactors, SchurForm, dense_eig_small, lu_factor
from utils.timestepping import equilibrium_state

# Configure logging
logging.basicConfig(level=getattr(logging, settings.LOG_LEVEL))
logger = logging.getLogger(__name__)

# Reorthogonalize when a Gram-Schmidt pass keeps less than this share of the norm
DGKS_ETA = 1.0 / np.sqrt(2.0)
BREAKDOWN_TOL = 1e-12

# Mode labels
MATRIX = "matrix"
INTRAFRACTURE = "intrafracture"
INTERFRACTURE = "interfracture"
UNCLASSIFIED = "unclassified"

DOMINANT_SHARE = 0.8
SECONDARY_SHARE = 0.1
COUPLING_MIN = 0.05


@dataclass
class SystemBlocks:
    """Blocks of the steady Jacobian at an equilibrium and the factored A_yy.

    ``time_scale`` multiplies S so eigenvalues come out in units of
    1/time_scale (T_diff for scenario runs).
    """
    A_ww: sp.csr_matrix
    A_wy: sp.csr_matrix
    A_yw: sp.csr_matrix
    A_yy: sp.csr_matrix
    mass: np.ndarray
    lu: LUFactors
    layout: DofLayout
    time_scale: float = 1.0
    timer: PhaseTimer = field(default_factory=PhaseTimer)
    matvecs: int = 0

    @property
    def size(self) -> int:
        return self.A_ww.shape[0]

    def eliminate(self, w: np.ndarray) -> np.ndarray:
        """Response of the non-evolving unknowns, dY = -A_yy^-1 A_yw w."""
        return -self.lu.solve(self.A_yw @ w)


def linearize_at(
    equilibrium: np.ndarray,
    stencil: FluxStencil,
    time_scale: float = 1.0,
    tol: float = settings.EQUILIBRIUM_TOL,
    timer: Optional[PhaseTimer] = None,
) -> SystemBlocks:
    """
    Split the steady Jacobian at ``equilibrium`` into W and Y blocks.

    The state must be steady: the Newton correction it would receive has to
    be below ``tol`` times omega_max in W and ``tol`` times the buoyant
    pressure scale in P.

    Raises:
        NotAnEquilibrium: the state is not steady
        SingularAyy: the non-evolving block cannot be factored
    """
    timer = timer or PhaseTimer()
    layout = stencil.layout
    params = stencil.params
    x = np.asarray(equilibrium, dtype=float)
    with timer.phase("assembly"):
        r, J = residual_and_jacobian(x, None, None, stencil)

    try:
        with timer.phase("lu"):
            correction = lu_factor(J).solve(r)
    except SingularMatrix as e:
        raise NotAnEquilibrium(f"Cannot verify the equilibrium, steady Jacobian is singular: {e}")
    dW = float(np.max(np.abs(correction[layout.W])))
    dP = float(np.max(np.abs(correction[layout.P])))
    p_scale = max(float(np.max(np.abs(x[layout.P]))),
                  params.buoyancy * params.omega_max * stencil.mesh.height, 1.0)
    if not np.all(np.isfinite(r)) or dW > tol * params.omega_max or dP > tol * p_scale:
        raise NotAnEquilibrium(
            f"State is not steady: Newton correction |dW| = {dW:.3e}, |dP| = {dP:.3e}"
        )

    W, Y = layout.W, layout.Y
    A_ww = J[W][:, W].tocsr()
    A_wy = J[W][:, Y].tocsr()
    A_yw = J[Y][:, W].tocsr()
    A_yy = J[Y][:, Y].tocsr()
    try:
        with timer.phase("lu"):
            lu = lu_factor(A_yy)
    except SingularMatrix as e:
        logger.error(f"A_yy factorization failed: {e}")
        raise SingularAyy(f"Failed to factor the non-evolving block: {e}")
    logger.debug(f"Linearized: {A_ww.shape[0]} evolving and {A_yy.shape[0]} non-evolving unknowns")
    return SystemBlocks(A_ww=A_ww, A_wy=A_wy, A_yw=A_yw, A_yy=A_yy, mass=stencil.mass.copy(),
                        lu=lu, layout=layout, time_scale=time_scale, timer=timer)


def apply_S(blocks: SystemBlocks, v: np.ndarray) -> np.ndarray:
    """Product S v for a real or complex vector (or block of columns)."""
    v = np.asarray(v)
    if np.iscomplexobj(v):
        return apply_S(blocks, v.real) + 1j * apply_S(blocks, v.imag)
    with blocks.timer.phase("matvec"):
        z = blocks.lu.solve(blocks.A_yw @ v)
        out = blocks.A_wy @ z - blocks.A_ww @ v
        mass = blocks.mass if out.ndim == 1 else blocks.mass[:, None]
        blocks.matvecs += 1 if v.ndim == 1 else v.shape[1]
    return blocks.time_scale * out / mass


def dense_S(blocks: SystemBlocks) -> np.ndarray:
    """S as a dense matrix; only for small problems."""
    n = blocks.size
    if n > 4000:
        raise ValueError(f"Refusing to densify S of dimension {n}")
    return apply_S(blocks, np.eye(n))


@dataclass
class EigenResult:
    """Leading eigenpairs of S, ordered by descending real part."""
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray          # (n, k), M-normalized columns
    errors: np.ndarray                # ||S e - lambda e|| / ||lambda e|| (Euclidean)
    matvecs: int
    restarts: int
    converged: bool = True
    early_exit: bool = False
    grid_errors: Optional[np.ndarray] = None
    labels: List[str] = field(default_factory=list)
    time_scale: float = 1.0

    @property
    def leading(self) -> complex:
        return self.eigenvalues[0]

    @property
    def is_unstable(self) -> bool:
        return bool(np.real(self.eigenvalues[0]) > 0)

    def to_frame(self) -> pd.DataFrame:
        values = np.asarray(self.eigenvalues)
        n = len(values)
        grid = self.grid_errors if self.grid_errors is not None else np.full(n, np.nan)
        labels = self.labels if len(self.labels) == n else [""] * n
        return pd.DataFrame({
            "index": np.arange(1, n + 1),
            "real": np.real(values),
            "imag": np.imag(values),
            "error": self.errors,
            "grid_error": grid,
            "label": labels,
        })


def eigen_residuals(
    apply: Callable[[np.ndarray], np.ndarray],
    values: np.ndarray,
    vectors: np.ndarray,
) -> np.ndarray:
    """Relative Euclidean residuals ||S x - lambda x|| / ||lambda x|| per column."""
    errors = np.empty(len(values))
    for i, theta in enumerate(values):
        x = vectors[:, i]
        r = apply(x) - theta * x
        denom = np.linalg.norm(theta * x)
        if denom == 0:
            denom = max(np.linalg.norm(x), np.finfo(float).tiny)
        errors[i] = np.linalg.norm(r) / denom
    return errors


def _m_norm(w: np.ndarray, mass: np.ndarray) -> float:
    return float(np.sqrt(np.dot(w, mass * w)))


def _orthogonalize(V: np.ndarray, w: np.ndarray, mass: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
    """M-orthogonalize ``w`` against the columns of V (classical Gram-Schmidt with DGKS)."""
    norm0 = _m_norm(w, mass)
    h = V.T @ (mass * w)
    w = w - V @ h
    beta = _m_norm(w, mass)
    if beta < DGKS_ETA * norm0:
        c = V.T @ (mass * w)
        w = w - V @ c
        h = h + c
        beta = _m_norm(w, mass)
    return w, h, beta


def _ritz(H: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Ritz values (descending real part), unit eigenvectors of H and residual estimates."""
    values, Y = la.eig(H)
    order = np.lexsort((-values.imag, -values.real))
    values, Y = values[order], Y[:, order]
    Y = Y / np.linalg.norm(Y, axis=0)
    estimates = np.abs(b @ Y) / np.maximum(np.abs(values), np.finfo(float).tiny)
    return values, Y, estimates


def _tie_slack(values: np.ndarray) -> float:
    return 1e-10 * max(float(np.max(np.abs(values))), np.finfo(float).tiny)


def _restart_size(values: np.ndarray, k: int, nconv: int, m: int) -> int:
    keep = min(k + min(nconv, (m - k) // 2), m - 1)
    slack = _tie_slack(values)
    # Never cut through a cluster of equal real parts (conjugate pairs included)
    while 0 < keep < m - 1 and abs(values[keep].real - values[keep - 1].real) <= slack:
        keep += 1
    return keep


def _restart_basis(H: np.ndarray, values: np.ndarray, keep: int) -> Tuple[SchurForm, int]:
    """Schur form of H with the ``keep`` leading Ritz values first, and the retained size."""
    m = H.shape[0]
    hi, lo = values[keep - 1].real, values[keep].real
    slack = _tie_slack(values)
    cut = 0.5 * (hi + lo) if hi - lo > slack else hi - slack
    schur = dense_eig_small(H, select=lambda re, im: re >= cut)
    p = schur.num_selected
    if not 0 < p < m:
        # Every Ritz value on one side of the cut: any leading block is wanted
        p = keep
        if schur.T[p, p - 1] != 0.0:
            p = p + 1 if p + 1 < m else p - 1
    return schur, p


def krylov_schur_operator(
    apply: Callable[[np.ndarray], np.ndarray],
    mass: np.ndarray,
    k: int,
    tol: float = settings.EIG_TOL,
    m: Optional[int] = None,
    max_matvecs: int = settings.EIG_MAX_MATVECS,
    v0: Optional[np.ndarray] = None,
    seed: int = settings.SEED,
    early_exit: bool = False,
    timer: Optional[PhaseTimer] = None,
) -> EigenResult:
    """
    Leading eigenpairs of a non-symmetric operator, orthogonalizing in the
    M-inner product.

    Args:
        apply: the product v -> S v on real vectors
        mass: diagonal of M (positive)
        k: number of wanted eigenvalues (largest real part)
        tol: bound on the relative Euclidean residual of each pair
        m: basis size (default max(40, 4k), at most the dimension)
        max_matvecs: product budget
        v0: start vector (seeded Gaussian if None)
        seed: seed of the start vector and of breakdown replacements
        early_exit: stop once the leading Ritz value is positive beyond its
            error estimate
        timer: phase timer for the orthogonalization cost

    Returns:
        EigenResult

    Raises:
        ConfigError: k or m out of range
        NoConvergence: budget exhausted; ``partial`` holds the current Ritz pairs
    """
    timer = timer or PhaseTimer()
    mass = np.asarray(mass, dtype=float)
    n = mass.shape[0]
    m = min(m if m is not None else max(settings.EIG_BASIS_MIN, 4 * k), n)
    if k < 1 or k + 2 > m:
        raise ConfigError(f"Need 1 <= k <= m - 2 with m <= {n}, got k = {k}, m = {m}")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n) if v0 is None else np.asarray(v0, dtype=float).copy()
    norm_v = _m_norm(v, mass)
    if norm_v == 0:
        raise ConfigError("Start vector is zero")

    V = np.zeros((n, m + 1))
    B = np.zeros((m + 1, m))
    V[:, 0] = v / norm_v
    p = 0
    matvecs = 0
    restarts = 0
    inner_tol = tol

    def product(x):
        nonlocal matvecs
        matvecs += 1
        return apply(x)

    def apply_any(x):
        if np.iscomplexobj(x):
            return product(x.real) + 1j * product(x.imag)
        return product(x)

    def finish(values, Y, converged, exited):
        X = V[:, :m] @ Y[:, :k]
        if np.all(values[:k].imag == 0):
            X = X.real
            vals = values[:k].real.copy()
        else:
            vals = values[:k].copy()
        for i in range(k):
            norm = np.sqrt(np.real(np.vdot(X[:, i], mass * X[:, i])))
            if norm > 0:
                X[:, i] = X[:, i] / norm
        errors = eigen_residuals(apply_any, vals, X)
        return EigenResult(eigenvalues=vals, eigenvectors=X, errors=errors, matvecs=matvecs,
                           restarts=restarts, converged=converged, early_exit=exited)

    while True:
        for j in range(p, m):
            w = product(V[:, j])
            with timer.phase("ortho"):
                w, h, beta = _orthogonalize(V[:, :j + 1], w, mass)
                B[:j + 1, j] = h
                if beta <= BREAKDOWN_TOL * max(np.linalg.norm(h), np.finfo(float).tiny):
                    # Invariant subspace: continue with a fresh direction
                    B[j + 1, j] = 0.0
                    if j + 1 < m:
                        fresh, _, fnorm = _orthogonalize(V[:, :j + 1], rng.standard_normal(n), mass)
                        V[:, j + 1] = fresh / fnorm
                    else:
                        V[:, j + 1] = 0.0
                else:
                    B[j + 1, j] = beta
                    V[:, j + 1] = w / beta

        H = B[:m, :m]
        b = B[m, :m]
        values, Y, estimates = _ritz(H, b)
        nconv = int(np.sum(estimates[:k] <= inner_tol))
        logger.debug(f"Krylov-Schur cycle {restarts}: {nconv}/{k} converged, "
                     f"leading {values[0]:.6g}, {matvecs} products")

        if early_exit and values[0].real > 0 and estimates[0] <= settings.EIG_EARLY_EXIT_TOL \
                and values[0].real > estimates[0] * abs(values[0]):
            logger.info(f"Positive eigenvalue {values[0].real:.6g} found after {matvecs} products")
            return finish(values, Y, converged=False, exited=True)

        if nconv >= k:
            result = finish(values, Y, converged=True, exited=False)
            if np.all(result.errors <= tol) or inner_tol <= 1e-14:
                result.converged = bool(np.all(result.errors <= tol))
                return result
            # M-norm estimate converged but the Euclidean residual did not
            inner_tol *= 0.1
            nconv = int(np.sum(estimates[:k] <= inner_tol))

        if matvecs >= max_matvecs:
            partial = finish(values, Y, converged=False, exited=False)
            raise NoConvergence(
                f"Krylov-Schur used {matvecs} products with {nconv}/{k} eigenvalues converged",
                partial=partial,
            )

        keep = _restart_size(values, k, nconv, m)
        schur, p = _restart_basis(H, values, keep)
        with timer.phase("ortho"):
            V[:, :p] = V[:, :m] @ schur.Z[:, :p]
            V[:, p] = V[:, m]
            V[:, p + 1:] = 0.0
            spike = b @ schur.Z[:, :p]
            B = np.zeros((m + 1, m))
            B[:p, :p] = schur.T[:p, :p]
            B[p, :p] = spike
        restarts += 1


def start_vector(stencil: FluxStencil, seed: int = settings.SEED) -> np.ndarray:
    """Seeded Gaussian start vector, zero on prescribed-concentration cells, unit M-norm."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(stencil.layout.num_cells)
    v[stencil.dirichlet_transport_cells()] = 0.0
    return v / _m_norm(v, stencil.mass)


def krylov_schur(
    blocks: SystemBlocks,
    k: int,
    tol: float = settings.EIG_TOL,
    m: Optional[int] = None,
    max_matvecs: int = settings.EIG_MAX_MATVECS,
    v0: Optional[np.ndarray] = None,
    seed: int = settings.SEED,
    early_exit: bool = False,
) -> EigenResult:
    """Leading k eigenpairs of the reduced operator of ``blocks``."""
    result = krylov_schur_operator(
        lambda v: apply_S(blocks, v), blocks.mass, k, tol=tol, m=m, max_matvecs=max_matvecs,
        v0=v0, seed=seed, early_exit=early_exit, timer=blocks.timer,
    )
    result.time_scale = blocks.time_scale
    return result


@dataclass
class StabilityAnalysis:
    """Outcome of the eigenvalue method on one scenario."""
    verdict: str
    result: EigenResult
    equilibrium: np.ndarray
    stencil: FluxStencil
    blocks: SystemBlocks


def assess_stability(
    scenario: Scenario,
    k: Optional[int] = None,
    tol: Optional[float] = None,
    m: Optional[int] = None,
    early_exit: bool = False,
    seed: Optional[int] = None,
    classify: bool = True,
    timer: Optional[PhaseTimer] = None,
) -> StabilityAnalysis:
    """
    Eigenvalue method: equilibrium, linearization and leading eigenpairs.

    Eigenvalues are scaled by T_diff = H^2 / D.

    Returns:
        StabilityAnalysis with verdict "unstable" if the leading eigenvalue
        has positive real part, else "stable"

    Raises:
        NoConvergence: eigensolver budget exhausted
        SingularAyy: non-evolving block singular
    """
    timer = timer or PhaseTimer()
    controls = scenario.eig
    k = controls.k if k is None else k
    tol = controls.tol if tol is None else tol
    m = controls.m if m is None else m
    m = m if m is not None else max(settings.EIG_BASIS_MIN, 4 * k)
    seed = controls.seed if seed is None else seed

    with timer.phase("init"):
        stencil = FluxStencil.build(scenario.build_mesh(), scenario.params, scenario.bc)
    x_eq = equilibrium_state(scenario, stencil)
    blocks = linearize_at(x_eq, stencil, time_scale=scenario.diffusive_time, timer=timer)
    logger.info(
        f"Eigenvalue method on {scenario.name}: {blocks.size} evolving unknowns, "
        f"k = {k}, m = {m}, tol = {tol:g}"
    )
    result = krylov_schur(
        blocks, k, tol=tol, m=m, max_matvecs=controls.max_matvecs,
        v0=start_vector(stencil, seed), seed=seed, early_exit=early_exit,
    )
    if classify:
        result.labels = [classify_mode_3d(np.real(result.eigenvectors[:, i]), blocks, stencil)
                         for i in range(result.eigenvectors.shape[1])]
    verdict = "unstable" if result.is_unstable else "stable"
    logger.info(
        f"{scenario.name}: leading eigenvalue {result.leading:.6g} ({verdict}), "
        f"{result.matvecs} products, {result.restarts} restarts"
    )
    return StabilityAnalysis(verdict=verdict, result=result, equilibrium=x_eq,
                             stencil=stencil, blocks=blocks)


def grid_error(fine: EigenResult, coarse: EigenResult) -> np.ndarray:
    """
    Relative differences |lambda - lambda_g| / |lambda| of paired eigenvalues.

    Raises:
        CountMismatch: the results hold different numbers of eigenvalues
    """
    a = np.asarray(fine.eigenvalues)
    g = np.asarray(coarse.eigenvalues)
    if a.shape != g.shape:
        raise CountMismatch(f"Cannot pair {a.size} fine with {g.size} coarse eigenvalues")
    return np.abs(a - g) / np.maximum(np.abs(a), np.finfo(float).tiny)


def grid_check(
    scenario: Scenario,
    analysis: StabilityAnalysis,
    ratio: float = settings.GRID_CHECK_RATIO,
) -> np.ndarray:
    """Repeat the eigenvalue method on a coarser grid and store the grid errors."""
    coarse = scenario.with_resolution(coarse_resolution(scenario, ratio))
    logger.info(f"Grid check of {scenario.name} on {coarse.resolution}")
    k = len(analysis.result.eigenvalues)
    coarse_analysis = assess_stability(coarse, k=k, classify=False, timer=analysis.blocks.timer)
    analysis.result.grid_errors = grid_error(analysis.result, coarse_analysis.result)
    return analysis.result.grid_errors


def classify_energies(
    matrix_energy: float,
    plane_energies: Sequence[float],
    circulation: float,
    exchange: float,
    coupling: float,
) -> str:
    """
    Label a mode from its energy distribution.

    Args:
        matrix_energy: kinetic-energy proxy of the bulk
        plane_energies: the same per fracture
        circulation: total in-plane flux of the dominant fracture
        exchange: net flux between the dominant fracture and the bulk
        coupling: peak flux through intersections over peak in-plane flux
    """
    energies = np.sort(np.asarray(plane_energies, dtype=float))[::-1]
    total = float(energies.sum()) if energies.size else 0.0
    if total <= 0 or matrix_energy > total:
        return MATRIX
    shares = energies / total
    if shares[0] >= DOMINANT_SHARE and circulation > exchange:
        return INTRAFRACTURE
    if shares.size > 1 and shares[1] >= SECONDARY_SHARE and coupling >= COUPLING_MIN:
        return INTERFRACTURE
    return UNCLASSIFIED


def mode_energies(w: np.ndarray, blocks: SystemBlocks, stencil: FluxStencil) -> Dict[str, object]:
    """Flow response of a concentration mode and its energy per fracture."""
    mesh: MixedDimMesh = stencil.mesh
    faces, itf = mesh.faces, mesh.interfaces
    nc = mesh.num_cells
    dY = blocks.eliminate(w)
    dP = dY[:nc]
    dlam = dY[nc:nc + itf.size]
    dU = stencil.pressure_flux @ dP + stencil.gravity_flux @ w

    cross = faces.areas * stencil.face_factor
    velocity = dU / cross
    energy = velocity ** 2 * cross * faces.dist.sum(axis=1)
    owner = mesh.fracture_ids[faces.cells[:, 0]]
    on_plane = faces.level == 1
    planes = np.arange(len(mesh.fracture_names))
    plane_energy = np.array([energy[on_plane & (owner == p)].sum() for p in planes])
    circulation = np.array([np.abs(dU[on_plane & (owner == p)]).sum() for p in planes])
    bulk_link = itf.level == 1
    lower_owner = mesh.fracture_ids[itf.lower]
    exchange = np.array([abs(dlam[bulk_link & (lower_owner == p)].sum()) for p in planes])
    peak_plane = float(np.max(np.abs(dU[on_plane]))) if np.any(on_plane) else 0.0
    junction = itf.level >= 2
    peak_junction = float(np.max(np.abs(dlam[junction]))) if np.any(junction) else 0.0
    return {
        "matrix": float(energy[faces.level == 0].sum()),
        "planes": plane_energy,
        "circulation": circulation,
        "exchange": exchange,
        "coupling": peak_junction / peak_plane if peak_plane > 0 else 0.0,
    }


def classify_mode_3d(w: np.ndarray, blocks: SystemBlocks, stencil: FluxStencil) -> str:
    """Label an eigenvector as a matrix, intrafracture or interfracture mode."""
    parts = mode_energies(np.asarray(w, dtype=float), blocks, stencil)
    planes = parts["planes"]
    if planes.size == 0:
        return MATRIX
    top = int(np.argmax(planes))
    return classify_energies(parts["matrix"], planes, parts["circulation"][top],
                             parts["exchange"][top], parts["coupling"])


@dataclass
class CriticalRayleigh:
    rayleigh: float
    bracket: Tuple[float, float]
    history: List[Tuple[float, float]]


def critical_rayleigh(
    scenario: Scenario,
    bracket: Tuple[float, float] = (10.0, 100.0),
    max_solves: int = 8,
    k: int = 2,
) -> CriticalRayleigh:
    """
    Rayleigh number at which the leading eigenvalue crosses zero.

    The bulk permeability is varied (Ra is proportional to k). The bracket is
    bisected geometrically and the final estimate interpolates the leading
    eigenvalue linearly inside the last bracket.

    Raises:
        AnalysisError: the bracket does not straddle the crossing
    """
    ra0 = rayleigh(scenario.params, scenario.height)
    if ra0 <= 0:
        raise AnalysisError(f"Scenario {scenario.name} has no buoyancy")
    history: List[Tuple[float, float]] = []

    def leading(ra: float) -> float:
        trial = scenario.with_params(k=scenario.params.k * ra / ra0)
        trial = replace(trial, name=f"{scenario.name}@Ra={ra:.6g}")
        lam = float(np.real(assess_stability(trial, k=k, classify=False).result.leading))
        history.append((ra, lam))
        logger.info(f"Ra = {ra:.6g}: leading eigenvalue {lam:.6g}")
        return lam

    lo, hi = bracket
    if not 0 < lo < hi:
        raise AnalysisError(f"Invalid Rayleigh bracket {bracket}")
    f_lo, f_hi = leading(lo), leading(hi)
    if np.sign(f_lo) == np.sign(f_hi):
        raise AnalysisError(
            f"Leading eigenvalue has the same sign at Ra = {lo:g} ({f_lo:.4g}) and Ra = {hi:g} ({f_hi:.4g})"
        )
    while len(history) < max_solves:
        mid = np.sqrt(lo * hi)
        f_mid = leading(mid)
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    estimate = lo - f_lo * (hi - lo) / (f_hi - f_lo)
    return CriticalRayleigh(rayleigh=float(estimate), bracket=(lo, hi), history=history)
