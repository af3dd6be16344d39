"""
Conforming mixed-dimensional Cartesian meshes.

The bulk grid is axis-aligned. Fractures occupy runs of bulk faces, and every
lower-dimensional entity shared by cells of two or more orientations becomes an
intersection cell one dimension lower (crossings, T- and L-junctions). Each
cell of any dimension is stored as a box [lo, hi] whose extent is zero along
its fixed axes, so geometry is uniform across levels.

Levels are codimensions: level 0 is the bulk, level 1 the fractures, level 2
their intersections and level 3 the intersection points of a 3D network.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config.settings import settings
from utils.exceptions import (
    DegenerateFracture,
    MeshError,
    NonConformingFracture,
    UncoveredBoundary,
)

# Configure logging
logging.basicConfig(level=getattr(logging, settings.LOG_LEVEL))
logger = logging.getLogger(__name__)

AXIS_NAMES = ("x", "y", "z")

# Face kinds of the geometric face set
INTERNAL = 0
BOUNDARY = 1
TIP = 2

# Boundary condition kinds of a partition
NEUMANN = 1
DIRICHLET = 2

EntityKey = Tuple[Tuple[int, ...], Tuple[int, ...]]


@dataclass(frozen=True)
class Fracture:
    """One planar fracture.

    Attributes:
        points: segment endpoints in 2D; rectangle vertices (or two opposite
            corners) in 3D
        aperture: b [m]
        permeability: k_f [m^2]
        name: optional label used in logs and exports
    """
    points: Tuple[Tuple[float, ...], ...]
    aperture: float
    permeability: float
    name: str = ""


# A fracture network is an ordered collection of fractures.
FractureSpec = Sequence[Fracture]


@dataclass(frozen=True)
class BoundaryRule:
    """Condition on part of the outer boundary.

    ``side`` is ``xmin``, ``xmax``, ``ymin``, ... or ``top``/``bottom`` for the
    vertical (last) axis. ``ranges`` restricts the rule to face centres inside
    closed coordinate intervals, e.g. ``(("x", 150.0, 450.0),)``.
    """
    side: str
    kind: str
    value: float = 0.0
    ranges: Tuple[Tuple[str, float, float], ...] = ()


@dataclass(frozen=True)
class BoundarySpec:
    """Ordered boundary rules of one equation; the first match wins."""
    rules: Tuple[BoundaryRule, ...] = ()
    default: Optional[BoundaryRule] = None


@dataclass(frozen=True)
class BoundaryConditions:
    flow: BoundarySpec
    transport: BoundarySpec


@dataclass
class FaceSet:
    """Faces carrying two-point fluxes, all levels concatenated.

    Faces adjacent to a lower-dimensional cell are not part of this set; they
    are represented by interface cells.
    """
    cells: np.ndarray          # (nf, 2) global cell indices, -1 when absent
    areas: np.ndarray          # |sigma|, 1 for points
    normals: np.ndarray        # unit, from cells[:, 0] to cells[:, 1] (outward on boundary)
    centers: np.ndarray
    dist: np.ndarray           # (nf, 2) cell centre to face distance
    level: np.ndarray
    kind: np.ndarray           # INTERNAL, BOUNDARY or TIP
    side: np.ndarray           # 2*axis + (0 min | 1 max) on the outer boundary, else -1

    @property
    def size(self) -> int:
        return self.cells.shape[0]


@dataclass
class InterfaceSet:
    """Interface cells coupling a higher-dimensional cell to a lower one."""
    higher: np.ndarray
    lower: np.ndarray
    level: np.ndarray          # level of the lower cell
    areas: np.ndarray          # |gamma|
    normals: np.ndarray        # unit, pointing from the higher cell into the lower one
    higher_dist: np.ndarray    # higher cell centre to the shared face
    side: np.ndarray           # +1 if the higher cell lies on the positive side

    @property
    def size(self) -> int:
        return self.higher.shape[0]


@dataclass(frozen=True)
class DofLayout:
    """Global numbering of the unknowns [W, P, Lambda, Theta, mu]."""
    num_cells: int
    num_interfaces: int

    @property
    def W(self) -> slice:
        return slice(0, self.num_cells)

    @property
    def P(self) -> slice:
        return slice(self.num_cells, 2 * self.num_cells)

    @property
    def lam(self) -> slice:
        start = 2 * self.num_cells
        return slice(start, start + self.num_interfaces)

    @property
    def theta(self) -> slice:
        start = 2 * self.num_cells + self.num_interfaces
        return slice(start, start + self.num_interfaces)

    @property
    def mu(self) -> int:
        return 2 * self.num_cells + 2 * self.num_interfaces

    @property
    def Y(self) -> slice:
        return slice(self.num_cells, self.size)

    @property
    def size(self) -> int:
        return 2 * self.num_cells + 2 * self.num_interfaces + 1


@dataclass
class MixedDimMesh:
    """Hierarchy of per-dimension cells, faces and interfaces."""
    extents: Tuple[float, ...]
    resolution: Tuple[int, ...]
    nodes: List[np.ndarray]
    cell_lo: np.ndarray
    cell_hi: np.ndarray
    cell_level: np.ndarray
    apertures: np.ndarray
    permeabilities: np.ndarray     # NaN in the bulk, which takes k from the material
    fracture_ids: np.ndarray       # -1 in the bulk
    level_offsets: np.ndarray
    faces: FaceSet
    interfaces: InterfaceSet
    fracture_names: Tuple[str, ...] = ()
    cell_volumes: np.ndarray = field(init=False)
    cell_centers: np.ndarray = field(init=False)

    def __post_init__(self):
        widths = self.cell_hi - self.cell_lo
        self.cell_volumes = np.prod(np.where(widths > 0, widths, 1.0), axis=1)
        self.cell_centers = 0.5 * (self.cell_lo + self.cell_hi)

    @property
    def ambient_dim(self) -> int:
        return len(self.extents)

    @property
    def num_cells(self) -> int:
        return self.cell_level.shape[0]

    @property
    def num_levels(self) -> int:
        return len(self.level_offsets) - 1

    @property
    def height(self) -> float:
        return float(self.extents[-1])

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    @property
    def cell_dims(self) -> np.ndarray:
        return self.ambient_dim - self.cell_level

    @property
    def dofs(self) -> DofLayout:
        return DofLayout(self.num_cells, self.interfaces.size)

    @property
    def spacing(self) -> np.ndarray:
        return np.asarray(self.extents, dtype=float) / np.asarray(self.resolution)

    def level_slice(self, level: int) -> slice:
        return slice(int(self.level_offsets[level]), int(self.level_offsets[level + 1]))

    def cells_per_dimension(self) -> Dict[int, int]:
        """Number of elements (NoE) per cell dimension."""
        counts = {}
        for level in range(self.num_levels):
            sl = self.level_slice(level)
            if sl.stop > sl.start:
                counts[self.ambient_dim - level] = sl.stop - sl.start
        return counts

    def aperture_factor(self, exponent_shift: int = 0) -> np.ndarray:
        """b^(n - d - shift) per cell; shift 0 for storage, 1 for normal terms."""
        exponent = self.cell_level - exponent_shift
        return np.where(exponent > 0, self.apertures ** np.maximum(exponent, 0), 1.0)


def _snap(value: float, nodes: np.ndarray, what: str) -> int:
    """Index of the grid node matching ``value``."""
    j = int(np.argmin(np.abs(nodes - value)))
    tol = settings.SNAP_TOL * max(1.0, float(nodes[-1]))
    if abs(nodes[j] - value) > tol:
        raise NonConformingFracture(
            f"{what} coordinate {value} is not on a grid line (nearest {nodes[j]})"
        )
    return j


def _fracture_box(fracture: Fracture, nodes: List[np.ndarray], label: str):
    """Return (normal axis, normal node, [(lo, hi) node range per axis])."""
    n = len(nodes)
    pts = np.asarray(fracture.points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != n or pts.shape[0] < 2:
        raise NonConformingFracture(
            f"{label}: expected points of dimension {n}, got shape {pts.shape}"
        )
    if not fracture.aperture > 0:
        raise DegenerateFracture(f"{label}: aperture must be positive")
    if not fracture.permeability > 0:
        raise DegenerateFracture(f"{label}: permeability must be positive")

    tol = settings.SNAP_TOL * max(1.0, max(float(nd[-1]) for nd in nodes))
    spread = pts.max(axis=0) - pts.min(axis=0)
    flat = [a for a in range(n) if spread[a] <= tol]
    if len(flat) == 0:
        raise NonConformingFracture(f"{label}: fracture is not axis-aligned")
    if len(flat) > 1:
        raise DegenerateFracture(f"{label}: fracture has zero length or area")
    normal = flat[0]

    if n == 3 and pts.shape[0] > 2:
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        tangential = [a for a in range(n) if a != normal]
        corners = set()
        for p in pts:
            corner = []
            for a in tangential:
                if abs(p[a] - lo[a]) <= tol:
                    corner.append(0)
                elif abs(p[a] - hi[a]) <= tol:
                    corner.append(1)
                else:
                    raise NonConformingFracture(f"{label}: polygon is not an axis-aligned rectangle")
            corners.add(tuple(corner))
        if len(corners) != 4:
            raise NonConformingFracture(f"{label}: polygon is not an axis-aligned rectangle")

    node = _snap(float(pts[0, normal]), nodes[normal], f"{label} {AXIS_NAMES[normal]}")
    if node == 0 or node == len(nodes[normal]) - 1:
        raise NonConformingFracture(f"{label}: fractures on the outer boundary are not supported")

    ranges = []
    for a in range(n):
        if a == normal:
            ranges.append((node, node))
            continue
        lo = _snap(float(pts[:, a].min()), nodes[a], f"{label} {AXIS_NAMES[a]}")
        hi = _snap(float(pts[:, a].max()), nodes[a], f"{label} {AXIS_NAMES[a]}")
        if hi <= lo:
            raise DegenerateFracture(f"{label}: fracture has zero length or area")
        ranges.append((lo, hi))
    return normal, node, ranges


def _boundary_entities(key: EntityKey):
    """Yield (entity, axis, upper) for the faces of a cell given by ``key``."""
    fixed, idx = key
    for j in range(len(idx)):
        if j in fixed:
            continue
        new_fixed = tuple(sorted(fixed + (j,)))
        for upper in (0, 1):
            new_idx = list(idx)
            new_idx[j] = idx[j] + upper
            yield (new_fixed, tuple(new_idx)), j, upper


def _entity_box(key: EntityKey, nodes: List[np.ndarray]):
    fixed, idx = key
    lo = np.empty(len(idx))
    hi = np.empty(len(idx))
    for a, i in enumerate(idx):
        if a in fixed:
            lo[a] = hi[a] = nodes[a][i]
        else:
            lo[a] = nodes[a][i]
            hi[a] = nodes[a][i + 1]
    return lo, hi


def _outer_side(key: EntityKey, resolution: Sequence[int]) -> int:
    fixed, idx = key
    for a in fixed:
        if idx[a] == 0:
            return 2 * a
        if idx[a] == resolution[a]:
            return 2 * a + 1
    return -1


def build_cartesian_mdg(
    domain_extents: Sequence[float],
    resolution: Sequence[int],
    fractures: FractureSpec = (),
) -> MixedDimMesh:
    """
    Build a conforming mixed-dimensional mesh on an axis-aligned box.

    Args:
        domain_extents: box lengths per axis [m]; the last axis is vertical
        resolution: cells per axis (>= 2 each)
        fractures: fractures lying on grid lines (2D) or planes (3D)

    Returns:
        MixedDimMesh with cells of every dimension, faces and interfaces

    Raises:
        NonConformingFracture: fracture off the grid, overlapping or on the boundary
        DegenerateFracture: zero length/area or non-positive aperture
    """
    extents = tuple(float(e) for e in domain_extents)
    resolution = tuple(int(r) for r in resolution)
    n = len(extents)
    if n not in (2, 3) or len(resolution) != n:
        raise MeshError(f"Expected 2 or 3 axes, got extents {extents} and resolution {resolution}")
    if min(resolution) < 2:
        raise MeshError(f"Need at least 2 cells per axis, got {resolution}")
    if min(extents) <= 0:
        raise MeshError(f"Domain extents must be positive, got {extents}")

    nodes = [np.linspace(0.0, extents[a], resolution[a] + 1) for a in range(n)]
    h = np.asarray(extents) / np.asarray(resolution)

    # Level 1: bulk faces covered by fractures
    level_cells: List[Dict[EntityKey, int]] = [{}, {}]
    for fid, fracture in enumerate(fractures):
        label = fracture.name or f"fracture {fid}"
        normal, node, ranges = _fracture_box(fracture, nodes, label)
        spans = [range(lo, hi) if a != normal else range(node, node + 1)
                 for a, (lo, hi) in enumerate(ranges)]
        for idx in np.ndindex(*[len(s) for s in spans]):
            key = ((normal,), tuple(spans[a][i] for a, i in enumerate(idx)))
            if key in level_cells[1]:
                raise NonConformingFracture(f"{label} overlaps another fracture")
            level_cells[1][key] = fid

    # Intersections: entities shared by cells of at least two orientations
    parents_of: List[Dict[EntityKey, List[EntityKey]]] = [{}]
    level = 1
    while level < n and level_cells[level]:
        shared: Dict[EntityKey, List[EntityKey]] = {}
        for key in sorted(level_cells[level]):
            for entity, _, _ in _boundary_entities(key):
                shared.setdefault(entity, []).append(key)
        parents_of.append(shared)
        nxt = {}
        for entity in sorted(shared):
            orientations = {p[0] for p in shared[entity]}
            if len(orientations) >= 2:
                nxt[entity] = -1
        level_cells.append(nxt)
        level += 1
    while len(level_cells) > 1 and not level_cells[-1]:
        level_cells.pop()

    # Global cell numbering: bulk in C order, lower levels in sorted key order
    grid_idx = np.indices(resolution).reshape(n, -1).T
    lo_parts = [np.stack([nodes[a][grid_idx[:, a]] for a in range(n)], axis=1)]
    hi_parts = [np.stack([nodes[a][grid_idx[:, a] + 1] for a in range(n)], axis=1)]
    num_bulk = grid_idx.shape[0]
    apertures = [np.ones(num_bulk)]
    perms = [np.full(num_bulk, np.nan)]
    fids = [np.full(num_bulk, -1, dtype=int)]
    levels = [np.zeros(num_bulk, dtype=int)]
    offsets = [0, num_bulk]
    index_of: List[Dict[EntityKey, int]] = [{}]

    for lev in range(1, len(level_cells)):
        keys = sorted(level_cells[lev])
        index_of.append({key: offsets[-1] + i for i, key in enumerate(keys)})
        lo = np.empty((len(keys), n))
        hi = np.empty((len(keys), n))
        b = np.empty(len(keys))
        k = np.empty(len(keys))
        f = np.empty(len(keys), dtype=int)
        for i, key in enumerate(keys):
            lo[i], hi[i] = _entity_box(key, nodes)
            if lev == 1:
                fracture = fractures[level_cells[1][key]]
                b[i], k[i], f[i] = fracture.aperture, fracture.permeability, level_cells[1][key]
            else:
                parent_cells = [index_of[lev - 1][p] - offsets[lev - 1] for p in parents_of[lev - 1][key]]
                prev_b = apertures[lev - 1][parent_cells]
                thinnest = parent_cells[int(np.argmin(prev_b))]
                b[i] = apertures[lev - 1][thinnest]
                k[i] = perms[lev - 1][thinnest]
                f[i] = fids[lev - 1][thinnest]
        lo_parts.append(lo)
        hi_parts.append(hi)
        apertures.append(b)
        perms.append(k)
        fids.append(f)
        levels.append(np.full(len(keys), lev, dtype=int))
        offsets.append(offsets[-1] + len(keys))

    faces = _FaceBuilder(n)
    interfaces = _InterfaceBuilder(n)

    # Bulk faces, vectorized per axis
    strides = np.array([int(np.prod(resolution[a + 1:])) for a in range(n)])
    fracture_faces = level_cells[1] if len(level_cells) > 1 else {}
    for a in range(n):
        shape = list(resolution)
        shape[a] += 1
        fidx = np.indices(shape).reshape(n, -1).T
        j = fidx[:, a]
        covered = np.zeros(len(fidx), dtype=bool)
        if fracture_faces:
            lookup = {key[1] for key in fracture_faces if key[0] == (a,)}
            if lookup:
                covered = np.array([tuple(row) in lookup for row in fidx], dtype=bool)
        left = fidx.copy()
        left[:, a] -= 1
        left_lin = left @ strides
        right_lin = fidx @ strides
        area = float(np.prod(np.delete(h, a)))
        center = np.empty(fidx.shape)
        for ax in range(n):
            if ax == a:
                center[:, ax] = nodes[ax][fidx[:, ax]]
            else:
                center[:, ax] = nodes[ax][fidx[:, ax]] + 0.5 * h[ax]
        unit = np.zeros(n)
        unit[a] = 1.0

        internal = (j > 0) & (j < resolution[a]) & ~covered
        faces.add_many(
            np.stack([left_lin[internal], right_lin[internal]], axis=1),
            area, unit, center[internal], 0.5 * h[a], 0.5 * h[a], 0, INTERNAL, -1,
        )
        low = j == 0
        faces.add_many(
            np.stack([right_lin[low], -np.ones(low.sum(), dtype=int)], axis=1),
            area, -unit, center[low], 0.5 * h[a], 0.0, 0, BOUNDARY, 2 * a,
        )
        high = j == resolution[a]
        faces.add_many(
            np.stack([left_lin[high], -np.ones(high.sum(), dtype=int)], axis=1),
            area, unit, center[high], 0.5 * h[a], 0.0, 0, BOUNDARY, 2 * a + 1,
        )

    # Bulk-to-fracture interfaces
    if len(level_cells) > 1:
        for key in sorted(level_cells[1]):
            (a,), idx = key
            lower = index_of[1][key]
            measure = float(np.prod(np.delete(h, a)))
            below = list(idx)
            below[a] -= 1
            unit = np.zeros(n)
            unit[a] = 1.0
            interfaces.add(int(np.dot(below, strides)), lower, 1, measure, unit, 0.5 * h[a], -1)
            interfaces.add(int(np.dot(idx, strides)), lower, 1, measure, -unit, 0.5 * h[a], +1)

    # Faces and interfaces of the lower-dimensional levels
    for lev in range(1, len(level_cells)):
        if lev >= len(parents_of):
            break
        shared = parents_of[lev]
        for entity in sorted(shared):
            parents = sorted(shared[entity])
            lo, hi = _entity_box(entity, nodes)
            center = 0.5 * (lo + hi)
            widths = hi - lo
            measure = float(np.prod(widths[widths > 0])) if np.any(widths > 0) else 1.0
            lower_index = index_of[lev + 1].get(entity) if lev + 1 < len(index_of) else None
            for_parent = []
            for p in parents:
                ax = next(ax for ax in entity[0] if ax not in p[0])
                upper = entity[1][ax] - p[1][ax]
                sign = 1.0 if upper == 1 else -1.0
                unit = np.zeros(n)
                unit[ax] = sign
                for_parent.append((index_of[lev][p], ax, unit))
            if lower_index is not None:
                for cell, ax, unit in for_parent:
                    interfaces.add(cell, lower_index, lev + 1, measure, unit, 0.5 * h[ax],
                                   -1 if unit[ax] > 0 else +1)
                continue
            if len(for_parent) == 2:
                (c0, ax, unit0), (c1, _, _) = for_parent
                if unit0[ax] < 0:
                    (c0, ax, unit0), (c1, _, _) = for_parent[1], for_parent[0]
                faces.add_many(np.array([[c0, c1]]), measure, unit0, center[None, :],
                               0.5 * h[ax], 0.5 * h[ax], lev, INTERNAL, -1)
            elif len(for_parent) == 1:
                cell, ax, unit = for_parent[0]
                side = _outer_side(entity, resolution)
                kind = BOUNDARY if side >= 0 else TIP
                faces.add_many(np.array([[cell, -1]]), measure, unit, center[None, :],
                               0.5 * h[ax], 0.0, lev, kind, side)
            else:
                raise MeshError(f"Unexpected face sharing at entity {entity}: {len(parents)} cells")

    mesh = MixedDimMesh(
        extents=extents,
        resolution=resolution,
        nodes=nodes,
        cell_lo=np.concatenate(lo_parts),
        cell_hi=np.concatenate(hi_parts),
        cell_level=np.concatenate(levels),
        apertures=np.concatenate(apertures),
        permeabilities=np.concatenate(perms),
        fracture_ids=np.concatenate(fids),
        level_offsets=np.asarray(offsets),
        faces=faces.build(),
        interfaces=interfaces.build(),
        fracture_names=tuple(f.name or f"fracture {i}" for i, f in enumerate(fractures)),
    )
    logger.debug(
        f"Built mesh {resolution} with cells per dimension {mesh.cells_per_dimension()} "
        f"and {mesh.interfaces.size} interface cells"
    )
    return mesh


class _FaceBuilder:
    def __init__(self, n: int):
        self.n = n
        self.parts = []

    def add_many(self, cells, area, normal, centers, d0, d1, level, kind, side):
        m = cells.shape[0]
        if m == 0:
            return
        self.parts.append((
            cells.astype(int),
            np.full(m, area, dtype=float),
            np.tile(np.asarray(normal, dtype=float), (m, 1)),
            np.asarray(centers, dtype=float).reshape(m, self.n),
            np.tile([d0, d1], (m, 1)).astype(float),
            np.full(m, level, dtype=int),
            np.full(m, kind, dtype=int),
            np.full(m, side, dtype=int),
        ))

    def build(self) -> FaceSet:
        if not self.parts:
            raise MeshError("Mesh has no faces")
        cols = list(zip(*self.parts))
        return FaceSet(*(np.concatenate(c) for c in cols))


class _InterfaceBuilder:
    def __init__(self, n: int):
        self.n = n
        self.rows = []

    def add(self, higher, lower, level, area, normal, dist, side):
        self.rows.append((higher, lower, level, area, np.asarray(normal, dtype=float), dist, side))

    def build(self) -> InterfaceSet:
        if not self.rows:
            return InterfaceSet(
                higher=np.zeros(0, dtype=int), lower=np.zeros(0, dtype=int),
                level=np.zeros(0, dtype=int), areas=np.zeros(0),
                normals=np.zeros((0, self.n)), higher_dist=np.zeros(0),
                side=np.zeros(0, dtype=int),
            )
        higher, lower, level, area, normal, dist, side = zip(*self.rows)
        return InterfaceSet(
            higher=np.asarray(higher, dtype=int),
            lower=np.asarray(lower, dtype=int),
            level=np.asarray(level, dtype=int),
            areas=np.asarray(area, dtype=float),
            normals=np.vstack(normal),
            higher_dist=np.asarray(dist, dtype=float),
            side=np.asarray(side, dtype=int),
        )


@dataclass
class FacePartition:
    """Boundary condition tags of every face, per equation.

    ``flow_kind``/``transport_kind`` hold INTERNAL (0), NEUMANN or DIRICHLET
    for the faces of ``mesh.faces``; faces adjacent to fractures are the
    interface cells and are counted in ``num_fracture_adjacent``.
    """
    flow_kind: np.ndarray
    flow_value: np.ndarray
    transport_kind: np.ndarray
    transport_value: np.ndarray
    num_fracture_adjacent: int

    def counts(self, faces: FaceSet, level: int = 0) -> Dict[str, Dict[str, int]]:
        """Number of faces per tag for one level."""
        on_level = faces.level == level
        summary = {}
        for name, kind in (("flow", self.flow_kind), ("transport", self.transport_kind)):
            summary[name] = {
                "internal": int(np.sum(on_level & (kind == INTERNAL))),
                "neumann": int(np.sum(on_level & (kind == NEUMANN))),
                "dirichlet": int(np.sum(on_level & (kind == DIRICHLET))),
            }
        return summary


def side_code(side: str, ambient_dim: int) -> int:
    """Translate a side name to 2*axis + (0 min | 1 max)."""
    name = side.lower()
    if name == "top":
        return 2 * (ambient_dim - 1) + 1
    if name == "bottom":
        return 2 * (ambient_dim - 1)
    if len(name) == 4 and name[0] in AXIS_NAMES[:ambient_dim] and name[1:] in ("min", "max"):
        return 2 * AXIS_NAMES.index(name[0]) + (1 if name[1:] == "max" else 0)
    raise UncoveredBoundary(f"Unknown boundary side '{side}' for a {ambient_dim}D domain")


def _rule_matches(rule: BoundaryRule, side: int, center: np.ndarray, ambient_dim: int) -> bool:
    if side_code(rule.side, ambient_dim) != side:
        return False
    tol = settings.SNAP_TOL * max(1.0, float(np.max(np.abs(center))))
    for axis, lo, hi in rule.ranges:
        a = AXIS_NAMES.index(axis)
        if not (lo - tol <= center[a] <= hi + tol):
            return False
    return True


def _tag(spec: BoundarySpec, faces: FaceSet, ambient_dim: int, equation: str):
    kind = np.zeros(faces.size, dtype=int)
    value = np.zeros(faces.size)
    for i in np.flatnonzero(faces.kind != INTERNAL):
        if faces.kind[i] == TIP:
            kind[i] = NEUMANN
            continue
        rule = next(
            (r for r in spec.rules if _rule_matches(r, int(faces.side[i]), faces.centers[i], ambient_dim)),
            spec.default,
        )
        if rule is None:
            raise UncoveredBoundary(
                f"No {equation} boundary condition covers the face at {faces.centers[i].tolist()}"
            )
        if rule.kind == "dirichlet":
            kind[i] = DIRICHLET
        elif rule.kind == "neumann":
            kind[i] = NEUMANN
        else:
            raise UncoveredBoundary(f"Unknown {equation} boundary condition type '{rule.kind}'")
        value[i] = rule.value
    return kind, value


def face_partition(mesh: MixedDimMesh, boundary_conditions: BoundaryConditions) -> FacePartition:
    """
    Tag every face for the flow and transport equations.

    Lower-dimensional faces on the outer boundary take the condition of the
    bulk boundary at their centre; immersed tips are Neumann-zero.

    Raises:
        UncoveredBoundary: a boundary face matches no rule and there is no default
    """
    n = mesh.ambient_dim
    flow_kind, flow_value = _tag(boundary_conditions.flow, mesh.faces, n, "flow")
    transport_kind, transport_value = _tag(boundary_conditions.transport, mesh.faces, n, "transport")
    return FacePartition(
        flow_kind=flow_kind,
        flow_value=flow_value,
        transport_kind=transport_kind,
        transport_value=transport_value,
        num_fracture_adjacent=mesh.interfaces.size,
    )
