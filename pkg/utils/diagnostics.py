"""
Physical diagnostics: Rayleigh, Peclet and Sherwood numbers, the gap
criterion, eigenbasis projections and growth-rate fits.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config.settings import settings
from utils.exceptions import AnalysisError, DimensionMismatch, MissingInflowSurface
from utils.fv_discretization import (
    DofState,
    FluxStencil,
    boundary_flux,
    darcy_flux,
    inflow_diffusive_flux,
    solute_content,
)
from utils.mesh import side_code
from utils.model import MaterialParams

# Configure logging
logging.basicConfig(level=getattr(logging, settings.LOG_LEVEL))
logger = logging.getLogger(__name__)


@dataclass
class Diagnostics:
    """Time series collected along a direct run."""
    rayleigh: float
    peclet: float
    times: List[float] = field(default_factory=list)
    sherwood: List[float] = field(default_factory=list)
    perturbation_max: List[float] = field(default_factory=list)
    perturbation_mass: List[float] = field(default_factory=list)
    projections: List[np.ndarray] = field(default_factory=list)

    def record(self, t: float, sh: Optional[float], norms: Tuple[float, float],
               alpha: Optional[np.ndarray] = None):
        self.times.append(t)
        self.sherwood.append(np.nan if sh is None else sh)
        self.perturbation_max.append(norms[0])
        self.perturbation_mass.append(norms[1])
        if alpha is not None:
            self.projections.append(np.asarray(alpha))

    def as_dict(self) -> Dict:
        return {
            "rayleigh": self.rayleigh,
            "peclet": self.peclet,
            "final_sherwood": self.sherwood[-1] if self.sherwood else None,
        }


def rayleigh(params: MaterialParams, H: float) -> float:
    """Ra = (k/(phi mu)) rho0 alpha omega_max g / (D/H)."""
    return params.mobility * params.buoyancy * params.omega_max * H / params.D


def advective_time(params: MaterialParams, H: float) -> float:
    """T_adv = H phi mu / (k rho0 alpha omega_max g); infinite without buoyancy."""
    speed = params.mobility * params.buoyancy * params.omega_max
    return np.inf if speed == 0 else H / speed


def peclet(params: MaterialParams, H: float, h: float) -> float:
    """
    Grid Peclet number Pe = u h / D = Ra h / H with the buoyant velocity scale.

    Logs a warning above the stability limit of centered advection.
    """
    pe = rayleigh(params, H) * h / H
    if pe > settings.PECLET_WARN:
        logger.warning(f"Grid Peclet number {pe:.3g} exceeds {settings.PECLET_WARN}; "
                       f"centered advection may oscillate")
    return pe


def cell_peclet(state: DofState, stencil: FluxStencil) -> float:
    """Largest face Peclet number |u| h / D of the current flow field."""
    faces = stencil.mesh.faces
    U, _ = darcy_flux(state, stencil)
    velocity = np.abs(U) / (faces.areas * stencil.face_factor)
    length = faces.dist.sum(axis=1)
    length = np.where(faces.cells[:, 1] >= 0, length, 2.0 * faces.dist[:, 0])
    return float(np.max(velocity * length) / stencil.params.D) if faces.size else 0.0


def sherwood(state: DofState, stencil: FluxStencil, inflow_side: Optional[str] = "top") -> float:
    """
    Sherwood number: diffusive solute inflow through the inflow surface over
    the pure-diffusion inflow omega_max D / H times its area.

    Raises:
        MissingInflowSurface: no inflow side, or no Dirichlet faces on it
    """
    if inflow_side is None:
        raise MissingInflowSurface("Scenario has no diffusive inflow surface")
    side = side_code(inflow_side, stencil.mesh.ambient_dim)
    diffusive, _, area = inflow_diffusive_flux(state, stencil, side)
    if area <= 0:
        raise MissingInflowSurface(f"No prescribed-concentration faces on side '{inflow_side}'")
    params = stencil.params
    return diffusive / (params.omega_max * params.D / stencil.mesh.height * area)


def gap_criterion(k_m: float, k_f: float, b: float, A: float, dx: float, eps: float) -> float:
    """Conductance ratio (k_m A)/(k_f b) * (dx/eps) of a broken fracture circuit."""
    for name, val in (("k_m", k_m), ("k_f", k_f), ("b", b), ("A", A), ("dx", dx), ("eps", eps)):
        if not val > 0:
            raise AnalysisError(f"Gap criterion input {name} must be positive, got {val}")
    return (k_m * A) / (k_f * b) * (dx / eps)


def perturbation_norms(W: np.ndarray, W0: np.ndarray, mass: np.ndarray) -> Tuple[float, float]:
    """(max norm, M-norm) of W - W0."""
    diff = np.asarray(W) - np.asarray(W0)
    return float(np.max(np.abs(diff))) if diff.size else 0.0, float(np.sqrt(np.dot(mass, diff * diff)))


def project_on_eigenbasis(
    W: np.ndarray,
    W0: np.ndarray,
    eigvecs: np.ndarray,
    mass: np.ndarray,
) -> np.ndarray:
    """
    Projections alpha_i = <W - W0, e_i>_M on M-normalized eigenvectors.

    Args:
        W: current concentrations
        W0: baseline (equilibrium) concentrations
        eigvecs: (n, k) eigenvector columns
        mass: diagonal of M

    Raises:
        DimensionMismatch: if the sizes disagree
    """
    W = np.asarray(W)
    eigvecs = np.atleast_2d(np.asarray(eigvecs))
    if eigvecs.shape[0] != W.shape[0] and eigvecs.shape[1] == W.shape[0]:
        eigvecs = eigvecs.T
    if W.shape != np.shape(W0) or eigvecs.shape[0] != W.shape[0] or np.shape(mass) != W.shape:
        raise DimensionMismatch(
            f"Cannot project a state of size {W.shape[0]} on eigenvectors of shape {eigvecs.shape}"
        )
    alpha = eigvecs.conj().T @ (mass * (W - W0))
    return alpha.real if not np.iscomplexobj(eigvecs) else alpha


def fit_growth_rate(times: Sequence[float], norms: Sequence[float], limit: float) -> float:
    """
    Least-squares slope of log(norm) against time over the samples with
    norm <= limit.

    Raises:
        AnalysisError: fewer than two usable samples
    """
    t = np.asarray(times, dtype=float)
    n = np.asarray(norms, dtype=float)
    window = (n > 0) & (n <= limit)
    if np.count_nonzero(window) < 2:
        raise AnalysisError(f"Need at least two samples below {limit:.3g} to fit a growth rate")
    slope, _ = np.polyfit(t[window], np.log(n[window]), 1)
    return float(slope)


def fit_power_law(x: Sequence[float], y: Sequence[float]) -> Tuple[float, float]:
    """Fit y = c x^p; returns (p, c)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 2 or np.any(x <= 0) or np.any(y <= 0):
        raise AnalysisError("Power-law fit needs at least two positive samples")
    p, logc = np.polyfit(np.log(x), np.log(y), 1)
    return float(p), float(np.exp(logc))


def solute_balance(new: DofState, old: DofState, dt: float, stencil: FluxStencil) -> float:
    """
    Relative mismatch between the change of solute content and the boundary
    inflow over one implicit step.
    """
    change = solute_content(new, stencil) - solute_content(old, stencil)
    _, outflow = boundary_flux(new, stencil)
    scale = max(abs(change), abs(outflow * dt), np.finfo(float).tiny)
    return float(abs(change + outflow * dt) / scale)


def concentration_range(W: np.ndarray, omega_max: float) -> Tuple[float, float, float]:
    """(min, max, overshoot) where overshoot is the excursion outside [0, omega_max]."""
    lo, hi = float(np.min(W)), float(np.max(W))
    return lo, hi, max(0.0, -lo, hi - omega_max)
