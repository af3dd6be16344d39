"""
Field output: legacy VTK files per cell dimension and CSV tables.

Every level of the mixed-dimensional mesh is written as its own unstructured
grid (bulk quads or hexahedra, fracture lines or quads, intersection lines
and points), so each file holds cells of one dimension only. Interface fluxes
go to a separate point cloud placed on the shared faces.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Union

import meshio
import numpy as np
import pandas as pd

from config.settings import settings
from utils.diagnostics import Diagnostics
from utils.exceptions import DimensionMismatch, IoError
from utils.fv_discretization import DofState, FluxStencil, darcy_flux
from utils.mesh import MixedDimMesh

# Configure logging
logging.basicConfig(level=getattr(logging, settings.LOG_LEVEL))
logger = logging.getLogger(__name__)

CELL_TYPES = {0: "vertex", 1: "line", 2: "quad", 3: "hexahedron"}

# Corner patterns over the free axes, in VTK node order
CORNERS = {
    0: np.zeros((1, 0)),
    1: np.array([[0], [1]]),
    2: np.array([[0, 0], [1, 0], [1, 1], [0, 1]]),
    3: np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
                  [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]]),
}


def _level_geometry(mesh: MixedDimMesh, level: int):
    """Points (padded to 3D) and connectivity of the cells of one level."""
    sl = mesh.level_slice(level)
    lo, hi = mesh.cell_lo[sl], mesh.cell_hi[sl]
    dim = mesh.ambient_dim - level
    pattern = CORNERS[dim]
    free = (hi - lo) > 0
    corners = np.repeat(lo[:, None, :], pattern.shape[0], axis=1)
    for i in range(lo.shape[0]):
        axes = np.flatnonzero(free[i])
        corners[i][:, axes] = lo[i, axes] + pattern * (hi[i, axes] - lo[i, axes])
    flat = corners.reshape(-1, mesh.ambient_dim)
    points, inverse = np.unique(np.round(flat, 12), axis=0, return_inverse=True)
    if mesh.ambient_dim == 2:
        points = np.hstack([points, np.zeros((points.shape[0], 1))])
    connectivity = inverse.reshape(lo.shape[0], pattern.shape[0])
    return points, connectivity


def _cell_flux_magnitude(state: DofState, stencil: FluxStencil) -> np.ndarray:
    """Mean |Darcy velocity| over the faces of each cell."""
    faces = stencil.mesh.faces
    U, _ = darcy_flux(state, stencil)
    speed = np.abs(U) / (faces.areas * stencil.face_factor)
    total = np.zeros(stencil.mesh.num_cells)
    count = np.zeros(stencil.mesh.num_cells)
    for side in (0, 1):
        cells = faces.cells[:, side]
        valid = cells >= 0
        np.add.at(total, cells[valid], speed[valid])
        np.add.at(count, cells[valid], 1.0)
    return np.divide(total, count, out=np.zeros_like(total), where=count > 0)


def write_cell_fields(
    mesh: MixedDimMesh,
    fields: Dict[str, np.ndarray],
    stem: Union[str, Path],
) -> List[Path]:
    """
    Write per-cell arrays as one legacy VTK file per non-empty level.

    Args:
        mesh: mixed-dimensional mesh
        fields: arrays of length num_cells
        stem: output path without suffix; files are ``<stem>_<d>d.vtk``

    Raises:
        DimensionMismatch: an array does not match the cell count
        IoError: a file cannot be written
    """
    stem = Path(stem)
    for name, values in fields.items():
        if np.shape(values)[0] != mesh.num_cells:
            raise DimensionMismatch(
                f"Field {name} has {np.shape(values)[0]} entries, mesh has {mesh.num_cells} cells"
            )
    written = []
    for level in range(mesh.num_levels):
        sl = mesh.level_slice(level)
        if sl.stop == sl.start:
            continue
        dim = mesh.ambient_dim - level
        points, connectivity = _level_geometry(mesh, level)
        cell_data = {name: [np.asarray(values)[sl]] for name, values in fields.items()}
        cell_data["aperture"] = [mesh.apertures[sl]]
        cell_data["fracture_id"] = [mesh.fracture_ids[sl].astype(float)]
        path = stem.parent / f"{stem.name}_{dim}d.vtk"
        _write(path, meshio.Mesh(points, [(CELL_TYPES[dim], connectivity)], cell_data=cell_data))
        written.append(path)
    return written


def write_interfaces(state: DofState, mesh: MixedDimMesh, stem: Union[str, Path]) -> Optional[Path]:
    """Interface fluxes as vertices on the shared faces; None without interfaces."""
    itf = mesh.interfaces
    if itf.size == 0:
        return None
    centers = mesh.cell_centers[itf.higher] + itf.normals * itf.higher_dist[:, None]
    normals = itf.normals
    if mesh.ambient_dim == 2:
        centers = np.hstack([centers, np.zeros((itf.size, 1))])
        normals = np.hstack([normals, np.zeros((itf.size, 1))])
    connectivity = np.arange(itf.size)[:, None]
    path = Path(stem).parent / f"{Path(stem).name}_interfaces.vtk"
    _write(path, meshio.Mesh(
        centers,
        [("vertex", connectivity)],
        cell_data={
            "lambda": [state.lam],
            "theta": [state.theta],
            "normal": [normals],
            "level": [itf.level.astype(float)],
        },
    ))
    return path


def write_fields(
    state: DofState,
    mesh: MixedDimMesh,
    path: Union[str, Path],
    stencil: Optional[FluxStencil] = None,
) -> List[Path]:
    """
    Concentration, pressure and (with a stencil) flux magnitude of a state.

    Returns:
        Paths of the written files
    """
    fields = {"W": state.W, "P": state.P}
    if stencil is not None:
        fields["flux_magnitude"] = _cell_flux_magnitude(state, stencil)
    written = write_cell_fields(mesh, fields, path)
    itf_path = write_interfaces(state, mesh, path)
    if itf_path is not None:
        written.append(itf_path)
    logger.debug(f"Wrote {len(written)} field files for {path}")
    return written


def write_mode(vector: np.ndarray, mesh: MixedDimMesh, path: Union[str, Path]) -> List[Path]:
    """Eigenvector field; complex vectors get real and imaginary parts."""
    vector = np.asarray(vector)
    if vector.shape[0] != mesh.num_cells:
        raise DimensionMismatch(f"Mode has {vector.shape[0]} entries, mesh has {mesh.num_cells} cells")
    fields = {"mode_real": vector.real}
    if np.iscomplexobj(vector):
        fields["mode_imag"] = vector.imag
    return write_cell_fields(mesh, fields, path)


def _write(path: Path, grid: meshio.Mesh):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        meshio.write(str(path), grid, file_format="vtk", binary=False)
    except Exception as e:
        logger.error(f"Error writing {path}: {e}")
        raise IoError(f"Failed to write VTK file {path}: {e}")


def sherwood_frame(diag: Diagnostics) -> pd.DataFrame:
    """Sherwood number and perturbation norms against time."""
    return pd.DataFrame({
        "t": diag.times,
        "sherwood": diag.sherwood,
        "perturbation_max": diag.perturbation_max,
        "perturbation_mass": diag.perturbation_mass,
    })


def projection_frame(diag: Diagnostics) -> pd.DataFrame:
    """Eigenbasis projections alpha_i(t); complex coefficients are split."""
    if not diag.projections:
        return pd.DataFrame({"t": []})
    alpha = np.vstack(diag.projections)
    data = {"t": diag.times[:alpha.shape[0]]}
    for i in range(alpha.shape[1]):
        if np.iscomplexobj(alpha):
            data[f"alpha_{i + 1}_real"] = alpha[:, i].real
            data[f"alpha_{i + 1}_imag"] = alpha[:, i].imag
        else:
            data[f"alpha_{i + 1}"] = alpha[:, i]
    return pd.DataFrame(data)
