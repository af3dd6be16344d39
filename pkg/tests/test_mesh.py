"""Tests for the mixed-dimensional Cartesian mesh."""

import numpy as np
import pytest

from utils.exceptions import DegenerateFracture, MeshError, NonConformingFracture, UncoveredBoundary
from utils.mesh import (
    BOUNDARY,
    DIRICHLET,
    INTERNAL,
    NEUMANN,
    TIP,
    BoundaryConditions,
    BoundaryRule,
    BoundarySpec,
    Fracture,
    build_cartesian_mdg,
    face_partition,
    side_code,
)


def frac(p, q, name="", b=1e-4, k=1e-9):
    return Fracture(points=(tuple(p), tuple(q)), aperture=b, permeability=k, name=name)


def all_neumann():
    spec = BoundarySpec(default=BoundaryRule(side="*", kind="neumann"))
    return BoundaryConditions(flow=spec, transport=spec)


class TestBulkGrid:
    def test_counts_without_fractures(self):
        mesh = build_cartesian_mdg((4.0, 2.0), (4, 2))
        assert mesh.num_cells == 8
        assert mesh.num_levels == 1
        assert mesh.interfaces.size == 0
        internal = np.sum(mesh.faces.kind == INTERNAL)
        boundary = np.sum(mesh.faces.kind == BOUNDARY)
        assert internal == 3 * 2 + 4 * 1
        assert boundary == 2 * 2 + 2 * 4

    def test_volumes_sum_to_domain(self):
        mesh = build_cartesian_mdg((3.0, 2.0, 1.0), (3, 4, 2))
        assert mesh.cell_volumes.sum() == pytest.approx(6.0)
        assert mesh.ambient_dim == 3

    def test_face_normals_are_unit(self):
        mesh = build_cartesian_mdg((2.0, 1.0), (4, 2))
        assert np.allclose(np.linalg.norm(mesh.faces.normals, axis=1), 1.0)

    @pytest.mark.parametrize("extents,resolution", [
        ((1.0,), (4,)),
        ((1.0, 1.0), (1, 4)),
        ((1.0, -1.0), (2, 2)),
    ])
    def test_rejects_bad_boxes(self, extents, resolution):
        with pytest.raises(MeshError):
            build_cartesian_mdg(extents, resolution)


class TestFractures:
    def test_single_fracture_cells_and_interfaces(self):
        mesh = build_cartesian_mdg((4.0, 4.0), (4, 4), [frac((1, 2), (3, 2))])
        assert mesh.cells_per_dimension() == {2: 16, 1: 2}
        assert mesh.interfaces.size == 4
        level1 = mesh.faces.level == 1
        assert np.sum(level1 & (mesh.faces.kind == INTERNAL)) == 1
        assert np.sum(level1 & (mesh.faces.kind == TIP)) == 2
        # The two covered bulk faces are replaced by interfaces
        bulk_internal = (mesh.faces.level == 0) & (mesh.faces.kind == INTERNAL)
        assert np.sum(bulk_internal) == 3 * 4 + 4 * 3 - 2

    def test_interfaces_point_into_the_fracture(self):
        mesh = build_cartesian_mdg((4.0, 4.0), (4, 4), [frac((1, 2), (3, 2))])
        itf = mesh.interfaces
        above = mesh.cell_centers[itf.higher][:, 1] > 2.0
        assert np.all(itf.normals[above, 1] == -1.0)
        assert np.all(itf.normals[~above, 1] == 1.0)

    def test_crossing_creates_intersection(self):
        mesh = build_cartesian_mdg(
            (4.0, 4.0), (4, 4), [frac((1, 2), (3, 2), b=2e-4), frac((2, 1), (2, 3), b=1e-4)]
        )
        assert mesh.cells_per_dimension() == {2: 16, 1: 4, 0: 1}
        assert np.sum(mesh.interfaces.level == 2) == 4
        point = mesh.level_slice(2).start
        assert mesh.apertures[point] == pytest.approx(1e-4)

    @pytest.mark.parametrize("second", [
        ((1, 1), (1, 3)),   # L-junction at (1, 1)
        ((2, 1), (2, 3)),   # T-junction at (2, 1)
    ])
    def test_junctions_create_intersections(self, second):
        mesh = build_cartesian_mdg((4.0, 4.0), (4, 4), [frac((1, 1), (3, 1)), frac(*second)])
        assert mesh.cells_per_dimension()[0] == 1

    def test_parallel_fractures_do_not_intersect(self):
        mesh = build_cartesian_mdg((4.0, 4.0), (4, 4), [frac((1, 1), (3, 1)), frac((1, 3), (3, 3))])
        assert 0 not in mesh.cells_per_dimension()

    def test_3d_crossing_planes(self):
        planes = [
            Fracture(points=((2.0, 1.0, 1.0), (2.0, 3.0, 3.0)), aperture=1e-4, permeability=1e-9),
            Fracture(points=((1.0, 2.0, 1.0), (3.0, 2.0, 3.0)), aperture=1e-4, permeability=1e-9),
        ]
        mesh = build_cartesian_mdg((4.0, 4.0, 4.0), (4, 4, 4), planes)
        assert mesh.cells_per_dimension() == {3: 64, 2: 8, 1: 2}
        lines = mesh.level_slice(2)
        assert np.allclose(mesh.cell_volumes[lines], 1.0)

    def test_overlap_is_rejected(self):
        with pytest.raises(NonConformingFracture, match="overlaps"):
            build_cartesian_mdg((4.0, 4.0), (4, 4), [frac((1, 2), (3, 2)), frac((2, 2), (3, 2))])

    def test_off_grid_is_rejected(self):
        with pytest.raises(NonConformingFracture):
            build_cartesian_mdg((4.0, 4.0), (4, 4), [frac((1, 2.5), (3, 2.5))])

    def test_boundary_fracture_is_rejected(self):
        with pytest.raises(NonConformingFracture, match="outer boundary"):
            build_cartesian_mdg((4.0, 4.0), (4, 4), [frac((1, 0), (3, 0))])

    def test_diagonal_is_rejected(self):
        with pytest.raises(NonConformingFracture, match="axis-aligned"):
            build_cartesian_mdg((4.0, 4.0), (4, 4), [frac((1, 1), (3, 3))])

    def test_zero_length_is_rejected(self):
        with pytest.raises(DegenerateFracture):
            build_cartesian_mdg((4.0, 4.0), (4, 4), [frac((1, 1), (1, 1))])

    def test_zero_aperture_is_rejected(self):
        with pytest.raises(DegenerateFracture):
            build_cartesian_mdg((4.0, 4.0), (4, 4), [frac((1, 2), (3, 2), b=0.0)])


class TestBoundaryTagging:
    def test_side_codes(self):
        assert side_code("bottom", 2) == 2
        assert side_code("top", 2) == 3
        assert side_code("top", 3) == 5
        assert side_code("xmax", 3) == 1
        with pytest.raises(UncoveredBoundary):
            side_code("zmin", 2)

    def test_rules_and_default(self):
        mesh = build_cartesian_mdg((4.0, 2.0), (4, 2))
        transport = BoundarySpec(
            rules=(BoundaryRule(side="top", kind="dirichlet", value=0.1),),
            default=BoundaryRule(side="*", kind="neumann"),
        )
        part = face_partition(mesh, BoundaryConditions(flow=transport, transport=transport))
        counts = part.counts(mesh.faces)
        assert counts["transport"] == {"internal": 10, "neumann": 8, "dirichlet": 4}
        top = mesh.faces.side == side_code("top", 2)
        assert np.all(part.transport_value[top] == 0.1)

    def test_range_restricts_rule(self):
        mesh = build_cartesian_mdg((4.0, 2.0), (4, 2))
        spec = BoundarySpec(
            rules=(BoundaryRule(side="top", kind="dirichlet", value=1.0, ranges=(("x", 1.0, 3.0),)),),
            default=BoundaryRule(side="*", kind="neumann"),
        )
        part = face_partition(mesh, BoundaryConditions(flow=spec, transport=spec))
        assert np.sum(part.transport_kind == DIRICHLET) == 2

    def test_uncovered_boundary(self):
        mesh = build_cartesian_mdg((4.0, 2.0), (4, 2))
        spec = BoundarySpec(rules=(BoundaryRule(side="top", kind="dirichlet"),))
        with pytest.raises(UncoveredBoundary):
            face_partition(mesh, BoundaryConditions(flow=spec, transport=spec))

    def test_tips_are_neumann(self):
        mesh = build_cartesian_mdg((4.0, 4.0), (4, 4), [frac((1, 2), (3, 2))])
        part = face_partition(mesh, all_neumann())
        tips = mesh.faces.kind == TIP
        assert np.all(part.flow_kind[tips] == NEUMANN)
        assert part.num_fracture_adjacent == 4
