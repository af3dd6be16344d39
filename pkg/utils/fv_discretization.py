"""
Finite-volume discretization of the mixed-dimensional density-driven flow
equations.

Face fluxes use two-point approximations with harmonic half-cell
transmissibilities. Interface fluxes couple a higher-dimensional cell to its
lower-dimensional neighbour through the bulk half cell and the half aperture
in series. Every flux is an affine map of the cell unknowns except the
advective products, so the stencil is precomputed once per mesh and the
residual is a handful of sparse products that work on plain arrays and on
``AdArray`` alike.

Unknowns are ordered [W, P, Lambda, Theta, mu]; residual rows are ordered
[transport, fluid, Lambda definitions, Theta definitions, pressure constraint].
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from config.settings import settings
from utils.autodiff import AdArray, SparseOperator, concatenate, jacobian
from utils.mesh import (
    DIRICHLET,
    NEUMANN,
    BoundaryConditions,
    DofLayout,
    FacePartition,
    MixedDimMesh,
    face_partition,
)
from utils.model import MaterialParams

# Configure logging
logging.basicConfig(level=getattr(logging, settings.LOG_LEVEL))
logger = logging.getLogger(__name__)


@dataclass
class DofState:
    """Discrete unknowns of one time level."""
    W: np.ndarray
    P: np.ndarray
    lam: np.ndarray
    theta: np.ndarray
    mu: float = 0.0

    @classmethod
    def from_vector(cls, x: np.ndarray, layout: DofLayout) -> "DofState":
        x = np.asarray(x, dtype=float)
        if x.shape[0] != layout.size:
            raise ValueError(f"State vector has {x.shape[0]} entries, layout expects {layout.size}")
        return cls(
            W=x[layout.W].copy(),
            P=x[layout.P].copy(),
            lam=x[layout.lam].copy(),
            theta=x[layout.theta].copy(),
            mu=float(x[layout.mu]),
        )

    @classmethod
    def zeros(cls, layout: DofLayout) -> "DofState":
        return cls.from_vector(np.zeros(layout.size), layout)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.W, self.P, self.lam, self.theta, [self.mu]])

    def copy(self) -> "DofState":
        return DofState(self.W.copy(), self.P.copy(), self.lam.copy(), self.theta.copy(), self.mu)


def cell_mobility(mesh: MixedDimMesh, params: MaterialParams, shift: int = 0) -> np.ndarray:
    """b^(level - shift) k / (phi mu) per cell; shift 1 gives the normal mobility."""
    k = np.where(mesh.cell_level == 0, params.k, mesh.permeabilities)
    return mesh.aperture_factor(shift) * k / (params.phi * params.mu)


def cell_diffusivity(mesh: MixedDimMesh, params: MaterialParams, shift: int = 0) -> np.ndarray:
    """b^(level - shift) D per cell."""
    return mesh.aperture_factor(shift) * params.D


def mass_matrix(mesh: MixedDimMesh) -> sp.csr_matrix:
    """Diagonal accumulation matrix, M_KK = b^(n-d) |K|."""
    return sp.diags(mass_vector(mesh), format="csr")


def mass_vector(mesh: MixedDimMesh) -> np.ndarray:
    return mesh.aperture_factor(0) * mesh.cell_volumes


def _operator(rows, cols, vals, shape, name) -> SparseOperator:
    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=int)
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=int)
    vals = np.concatenate(vals) if vals else np.zeros(0)
    return SparseOperator(sp.coo_matrix((vals, (rows, cols)), shape=shape), name)


def _half_transmissibilities(mesh: MixedDimMesh, coef: np.ndarray):
    """(t0, t1, T) per face; t1 and T use only t0 on boundary and tip faces."""
    faces = mesh.faces
    c0, c1 = faces.cells[:, 0], faces.cells[:, 1]
    internal = c1 >= 0
    t0 = faces.areas * coef[c0] / faces.dist[:, 0]
    t1 = np.zeros(faces.size)
    t1[internal] = faces.areas[internal] * coef[c1[internal]] / faces.dist[internal, 1]
    T = t0.copy()
    T[internal] = t0[internal] * t1[internal] / (t0[internal] + t1[internal])
    return t0, t1, T


@dataclass
class FluxStencil:
    """Precomputed affine pieces of every flux of a mesh.

    Face fluid flux:      U = Kp P + Kg W + u_const
    Face solute flux:     Q = Kd W + q_const + (Avg W + avg_const) * U
    Interface rows:       Lambda = Lp P + Lg W
                          Theta  = Ld W + (Tr W) * Lambda
    """
    mesh: MixedDimMesh
    params: MaterialParams
    partition: FacePartition
    layout: DofLayout
    mass: np.ndarray
    face_div: SparseOperator
    interface_div: SparseOperator
    pressure_flux: SparseOperator
    gravity_flux: SparseOperator
    flow_const: np.ndarray
    diffusive_flux: SparseOperator
    diffusive_const: np.ndarray
    face_average: SparseOperator
    average_const: np.ndarray
    lam_pressure: SparseOperator
    lam_gravity: SparseOperator
    theta_diffusive: SparseOperator
    trace: SparseOperator
    multiplier: SparseOperator
    constraint: SparseOperator
    flow_transmissibility: np.ndarray
    transport_transmissibility: np.ndarray
    face_factor: np.ndarray
    pressure_constraint: bool
    gravity: bool

    @classmethod
    def build(
        cls,
        mesh: MixedDimMesh,
        params: MaterialParams,
        bc: BoundaryConditions,
        gravity: bool = True,
        partition: Optional[FacePartition] = None,
    ) -> "FluxStencil":
        """
        Assemble the flux operators of a mesh.

        Args:
            mesh: mixed-dimensional mesh
            params: material parameters
            bc: boundary conditions of both equations
            gravity: False drops the buoyancy terms (decoupled transport)
            partition: precomputed face tags (computed from ``bc`` if None)

        Raises:
            UncoveredBoundary: if ``bc`` does not cover the outer boundary
        """
        partition = partition if partition is not None else face_partition(mesh, bc)
        faces = mesh.faces
        itf = mesh.interfaces
        nc, nf, ni = mesh.num_cells, faces.size, itf.size
        c0, c1 = faces.cells[:, 0], faces.cells[:, 1]
        internal = c1 >= 0
        fi = np.arange(nf)
        face_factor = mesh.aperture_factor(0)[c0]
        buoyancy = params.rho0 * params.alpha * params.g if gravity else 0.0

        # Fluid flux
        _, _, T = _half_transmissibilities(mesh, cell_mobility(mesh, params))
        flow_dir = partition.flow_kind == DIRICHLET
        T_flow = np.where(internal | flow_dir, T, 0.0)
        rho_g_n = -buoyancy * faces.normals[:, -1]
        pressure_flux = _operator(
            [fi, fi[internal]], [c0, c1[internal]],
            [T_flow, -T_flow[internal]], (nf, nc), "pressure_flux",
        )
        gravity_flux = _operator(
            [fi, fi[internal]], [c0, c1[internal]],
            [T_flow * rho_g_n * faces.dist[:, 0],
             (T_flow * rho_g_n * faces.dist[:, 1])[internal]],
            (nf, nc), "gravity_flux",
        )
        flow_const = np.where(flow_dir, -T_flow * partition.flow_value, 0.0)
        flow_neu = partition.flow_kind == NEUMANN
        flow_const[flow_neu] = (partition.flow_value * faces.areas * face_factor)[flow_neu]

        # Solute flux
        _, _, TD = _half_transmissibilities(mesh, cell_diffusivity(mesh, params))
        tr_dir = partition.transport_kind == DIRICHLET
        TD = np.where(internal | tr_dir, TD, 0.0)
        diffusive_flux = _operator(
            [fi, fi[internal]], [c0, c1[internal]],
            [TD, -TD[internal]], (nf, nc), "diffusive_flux",
        )
        diffusive_const = np.where(tr_dir, -TD * partition.transport_value, 0.0)
        tr_neu = partition.transport_kind == NEUMANN
        diffusive_const[tr_neu] = (partition.transport_value * faces.areas * face_factor)[tr_neu]
        half = np.full(int(internal.sum()), 0.5)
        face_average = _operator(
            [fi[internal], fi[internal]], [c0[internal], c1[internal]],
            [half, half], (nf, nc), "face_average",
        )
        average_const = np.where(tr_dir, partition.transport_value, 0.0)

        # Divergences: faces leave c0 and enter c1, interfaces leave the higher cell
        face_div = _operator(
            [c0, c1[internal]], [fi, fi[internal]],
            [np.ones(nf), -np.ones(int(internal.sum()))], (nc, nf), "face_div",
        )
        ii = np.arange(ni)
        interface_div = _operator(
            [itf.higher, itf.lower], [ii, ii],
            [np.ones(ni), -np.ones(ni)], (nc, ni), "interface_div",
        )

        # Interface fluxes: bulk half cell and half aperture in series
        h, low = itf.higher, itf.lower
        b_half = 0.5 * mesh.apertures[low]
        R_b = itf.higher_dist / (itf.areas * cell_mobility(mesh, params)[h])
        R_i = b_half / (itf.areas * cell_mobility(mesh, params, shift=1)[low])
        C = 1.0 / (R_b + R_i)
        RD_b = itf.higher_dist / (itf.areas * cell_diffusivity(mesh, params)[h])
        RD_i = b_half / (itf.areas * cell_diffusivity(mesh, params, shift=1)[low])
        C_D = 1.0 / (RD_b + RD_i)
        beta = RD_b / (RD_b + RD_i)
        rho_g_ngamma = -buoyancy * itf.normals[:, -1]
        lam_pressure = _operator([ii, ii], [h, low], [C, -C], (ni, nc), "lam_pressure")
        lam_gravity = _operator(
            [ii, ii], [h, low],
            [C * rho_g_ngamma * (itf.higher_dist + b_half * (1.0 - beta)),
             C * rho_g_ngamma * b_half * beta],
            (ni, nc), "lam_gravity",
        )
        theta_diffusive = _operator([ii, ii], [h, low], [C_D, -C_D], (ni, nc), "theta_diffusive")
        trace = _operator([ii, ii], [h, low], [1.0 - beta, beta], (ni, nc), "trace")

        # Zero-mean pressure over the bulk when no pressure is prescribed
        bulk_volumes = np.where(mesh.cell_level == 0, mesh.cell_volumes, 0.0)
        cells = np.arange(nc)
        multiplier = _operator([cells], [np.zeros(nc, dtype=int)], [bulk_volumes], (nc, 1), "multiplier")
        constraint = _operator([np.zeros(nc, dtype=int)], [cells], [bulk_volumes], (1, nc), "constraint")

        stencil = cls(
            mesh=mesh,
            params=params,
            partition=partition,
            layout=mesh.dofs,
            mass=mass_vector(mesh),
            face_div=face_div,
            interface_div=interface_div,
            pressure_flux=pressure_flux,
            gravity_flux=gravity_flux,
            flow_const=flow_const,
            diffusive_flux=diffusive_flux,
            diffusive_const=diffusive_const,
            face_average=face_average,
            average_const=average_const,
            lam_pressure=lam_pressure,
            lam_gravity=lam_gravity,
            theta_diffusive=theta_diffusive,
            trace=trace,
            multiplier=multiplier,
            constraint=constraint,
            flow_transmissibility=T_flow,
            transport_transmissibility=TD,
            face_factor=face_factor,
            pressure_constraint=not bool(np.any(flow_dir)),
            gravity=gravity,
        )
        logger.debug(
            f"Built flux stencil: {nf} faces, {ni} interfaces, "
            f"pressure constraint {'on' if stencil.pressure_constraint else 'off'}"
        )
        return stencil

    @property
    def blocks(self) -> List[slice]:
        """Partition of the unknown vector into [W, P, Lambda, Theta, mu]."""
        lay = self.layout
        return [lay.W, lay.P, lay.lam, lay.theta, slice(lay.mu, lay.mu + 1)]

    def dirichlet_transport_cells(self) -> np.ndarray:
        """Cells owning a face with prescribed concentration."""
        faces = self.mesh.faces.cells[self.partition.transport_kind == DIRICHLET, 0]
        return np.unique(faces)


def darcy_flux(state: DofState, stencil: FluxStencil) -> Tuple[np.ndarray, np.ndarray]:
    """
    Fluid fluxes of a state.

    Returns:
        (U per face, oriented along the face normal; Lambda per interface,
        from the higher cell into the lower one, evaluated from its
        constitutive law)
    """
    U = stencil.pressure_flux @ state.P + stencil.gravity_flux @ state.W + stencil.flow_const
    lam = stencil.lam_pressure @ state.P + stencil.lam_gravity @ state.W
    return U, lam


def transport_flux(
    state: DofState,
    fluid_fluxes: Tuple[np.ndarray, np.ndarray],
    stencil: FluxStencil,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Solute fluxes of a state given its fluid fluxes.

    Advection uses the arithmetic mean of the two cells on faces and the bulk
    trace on interfaces.

    Returns:
        (Q per face, Theta per interface)
    """
    U, lam = fluid_fluxes
    Q = (stencil.diffusive_flux @ state.W + stencil.diffusive_const
         + (stencil.face_average @ state.W + stencil.average_const) * U)
    theta = stencil.theta_diffusive @ state.W + (stencil.trace @ state.W) * lam
    return Q, theta


def _residual_parts(W, P, lam, theta, mu, W_old, dt, s: FluxStencil) -> list:
    U = s.pressure_flux @ P + s.gravity_flux @ W + s.flow_const
    Q = s.diffusive_flux @ W + s.diffusive_const + (s.face_average @ W + s.average_const) * U

    transport = s.face_div @ Q + s.interface_div @ theta
    if dt is not None and np.isfinite(dt):
        transport = transport + (s.mass / dt) * (W - W_old)
    fluid = s.face_div @ U + s.interface_div @ lam + s.multiplier @ mu
    lam_rows = lam - s.lam_pressure @ P - s.lam_gravity @ W
    theta_rows = theta - s.theta_diffusive @ W - (s.trace @ W) * lam
    mu_row = s.constraint @ P if s.pressure_constraint else mu
    return [transport, fluid, lam_rows, theta_rows, mu_row]


def residual(
    x: np.ndarray,
    x_old: Optional[np.ndarray],
    dt: Optional[float],
    stencil: FluxStencil,
) -> np.ndarray:
    """
    Residual of the implicit Euler step from ``x_old`` to ``x``.

    ``dt`` of None or inf gives the steady residual (no accumulation term).
    """
    W, P, lam, theta, mu = (np.asarray(x, dtype=float)[b] for b in stencil.blocks)
    W_old = None if x_old is None else np.asarray(x_old, dtype=float)[stencil.layout.W]
    parts = _residual_parts(W, P, lam, theta, mu, W_old, dt, stencil)
    return np.concatenate([np.atleast_1d(p) for p in parts])


def residual_and_jacobian(
    x: np.ndarray,
    x_old: Optional[np.ndarray],
    dt: Optional[float],
    stencil: FluxStencil,
) -> Tuple[np.ndarray, sp.csr_matrix]:
    """Residual and its sparse Jacobian with respect to all unknowns."""
    W_old = None if x_old is None else np.asarray(x_old, dtype=float)[stencil.layout.W]
    n = stencil.layout.size

    def fn(W: AdArray, P: AdArray, lam: AdArray, theta: AdArray, mu: AdArray) -> AdArray:
        return concatenate(_residual_parts(W, P, lam, theta, mu, W_old, dt, stencil), n)

    return jacobian(fn, x, stencil.blocks)


def residual_scale(x: np.ndarray, J: sp.csr_matrix) -> np.ndarray:
    """Per-row magnitude |J| |x| (floored at the row norm) for relative residual checks."""
    absJ = abs(J)
    scale = absJ @ np.abs(x)
    row_max = np.asarray(absJ.max(axis=1).todense()).ravel()
    return np.maximum(scale, row_max * np.finfo(float).eps)


def boundary_flux(state: DofState, stencil: FluxStencil) -> Tuple[float, float]:
    """Net outward (fluid, solute) flux through the outer boundary."""
    fluid = darcy_flux(state, stencil)
    Q, _ = transport_flux(state, fluid, stencil)
    outer = stencil.mesh.faces.side >= 0
    return float(np.sum(fluid[0][outer])), float(np.sum(Q[outer]))


def solute_content(state: DofState, stencil: FluxStencil) -> float:
    """Total solute, sum of M_KK W_K."""
    return float(np.dot(stencil.mass, state.W))


def inflow_diffusive_flux(
    state: DofState,
    stencil: FluxStencil,
    side: int,
) -> Tuple[float, float, float]:
    """
    Diffusive and advective solute inflow through the Dirichlet faces of one side.

    Returns:
        (diffusive inflow, advective inflow, bulk area of the surface)
    """
    faces = stencil.mesh.faces
    mask = (faces.side == side) & (stencil.partition.transport_kind == DIRICHLET)
    c0 = faces.cells[mask, 0]
    W_D = stencil.partition.transport_value[mask]
    diffusive = -np.sum(stencil.transport_transmissibility[mask] * (state.W[c0] - W_D))
    U, _ = darcy_flux(state, stencil)
    advective = -np.sum(W_D * U[mask])
    area = float(np.sum(faces.areas[mask & (faces.level == 0)]))
    return float(diffusive), float(advective), area
