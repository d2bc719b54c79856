"""Unit tests for the plap_kacanov.mesh module."""

import numpy as np
import pytest

from plap_kacanov.errors import InvalidGeometryError
from plap_kacanov.mesh import (
    Mesh,
    bisect,
    element_geometry,
    make_lshape_mesh,
    make_unit_disk_mesh,
    min_angle,
    refine_uniformly,
)


def _on_lshape_boundary(xy):
    x, y = xy
    tol = 1e-12
    return (
        abs(abs(x) - 1.0) < tol
        or abs(abs(y) - 1.0) < tol
        or (abs(x) < tol and y >= -tol)
        or (abs(y) < tol and x >= -tol)
    )


def _random_refinements(mesh, rng, rounds=5, fraction=0.2):
    for _ in range(rounds):
        k = max(1, int(fraction * mesh.n_triangles))
        marked = rng.choice(mesh.n_triangles, size=k, replace=False)
        mesh = bisect(mesh, marked)
    return mesh


class TestInitialMeshes:
    @pytest.mark.parametrize("n, triangles, vertices", [(3, 3, 4), (8, 8, 9)])
    def test_disk_fan_sizes(self, n, triangles, vertices):
        mesh = make_unit_disk_mesh(n)
        assert mesh.n_triangles == triangles
        assert mesh.n_vertices == vertices

    def test_disk_boundary_on_circle(self):
        mesh = make_unit_disk_mesh(8)
        radii = np.linalg.norm(mesh.points[1:], axis=1)
        np.testing.assert_allclose(radii, 1.0, rtol=0, atol=1e-15)
        assert mesh.on_curved_boundary[1:].all()
        assert not mesh.on_curved_boundary[0]

    def test_disk_area(self):
        mesh = make_unit_disk_mesh(8)
        assert mesh.total_area == pytest.approx(4.0 * np.sin(np.pi / 4.0), rel=1e-14)

    def test_disk_needs_three_vertices(self):
        with pytest.raises(InvalidGeometryError):
            make_unit_disk_mesh(2)

    def test_lshape(self, lshape_mesh):
        assert lshape_mesh.n_triangles == 12
        assert lshape_mesh.total_area == pytest.approx(3.0, rel=1e-15)
        corner = np.flatnonzero(np.all(lshape_mesh.points == 0.0, axis=1))
        assert corner.size == 1
        assert lshape_mesh.on_boundary[corner[0]]
        # The three square centers are the only free vertices
        assert lshape_mesh.ndof == 3

    def test_lshape_interior_edges_shared_twice(self, lshape_mesh):
        e2c = lshape_mesh.edge_to_cells
        interior = ~lshape_mesh.boundary_edge_mask
        assert np.all(e2c[interior] >= 0)
        assert np.all(e2c[~interior, 1] == -1)

    def test_dirichlet_is_boundary(self, lshape_mesh):
        for i in lshape_mesh.dirichlet_vertices:
            assert _on_lshape_boundary(lshape_mesh.points[i])


class TestMeshValidation:
    def test_from_arrays_orients_counterclockwise(self):
        mesh = Mesh.from_arrays([(0, 0), (1, 0), (0, 1)], [(0, 2, 1)])
        assert mesh.signed_areas[0] == pytest.approx(0.5)

    def test_degenerate_triangle(self):
        with pytest.raises(InvalidGeometryError):
            Mesh.from_arrays([(0, 0), (1, 0), (2, 0)], [(0, 1, 2)])

    def test_missing_vertex(self):
        with pytest.raises(InvalidGeometryError):
            Mesh.from_arrays([(0, 0), (1, 0), (0, 1)], [(0, 1, 3)])

    def test_repeated_vertex(self):
        with pytest.raises(InvalidGeometryError):
            Mesh.from_arrays([(0, 0), (1, 0), (0, 1)], [(0, 1, 1)])

    @pytest.mark.parametrize(
        "cells", [[(-1, 1, 2)], [(0, 1, 3), (0, 1, 2)], [(0, 1)], np.empty((0, 3))]
    )
    def test_bad_connectivity_before_orientation(self, cells):
        with pytest.raises(InvalidGeometryError):
            Mesh.from_arrays([(0, 0), (1, 0), (0, 1)], cells)

    def test_accessors(self, lshape_mesh):
        vertex = lshape_mesh.vertex(0)
        assert (vertex.x, vertex.y) == (-1.0, 0.0)
        assert vertex.on_boundary and not vertex.on_curved_boundary
        triangle = lshape_mesh.triangle(0)
        assert triangle.refinement_edge == 2
        assert triangle.parent is None
        assert "12 triangles" in str(lshape_mesh)


class TestElementGeometry:
    def test_unit_right_triangle(self):
        mesh = Mesh.from_arrays([(0, 0), (1, 0), (0, 1)], [(0, 1, 2)])
        geom = element_geometry(mesh, 0)
        assert geom.area == pytest.approx(0.5)
        assert geom.diameter == pytest.approx(np.sqrt(2.0))
        np.testing.assert_allclose(geom.gradients[0], [-1.0, -1.0])
        np.testing.assert_allclose(geom.gradients.sum(axis=0), 0.0, atol=1e-15)

    def test_equilateral(self):
        mesh = Mesh.from_arrays([(0, 0), (1, 0), (0.5, np.sqrt(3) / 2)], [(0, 1, 2)])
        geom = element_geometry(mesh, 0)
        assert geom.area == pytest.approx(np.sqrt(3) / 4)
        np.testing.assert_allclose(geom.edge_lengths, 1.0)

    def test_index_out_of_range(self, lshape_mesh):
        with pytest.raises(IndexError):
            element_geometry(lshape_mesh, 12)


class TestBisect:
    def test_single_triangle(self):
        mesh = Mesh.from_arrays([(0, 0), (1, 0), (0, 1)], [(0, 1, 2)])
        refined = bisect(mesh, {0})
        assert refined.n_triangles == 2
        assert refined.n_vertices == 4
        np.testing.assert_allclose(refined.points[3], [0.5, 0.5])
        np.testing.assert_array_equal(refined.parent, [0, 0])
        np.testing.assert_array_equal(refined.level, [1, 1])

    def test_empty_marking_is_identity(self, lshape_mesh):
        assert bisect(lshape_mesh, []) is lshape_mesh

    def test_out_of_range_marking(self, lshape_mesh):
        with pytest.raises(InvalidGeometryError):
            bisect(lshape_mesh, [99])

    def test_disk_midpoints_projected(self):
        mesh = make_unit_disk_mesh(8)
        refined = bisect(mesh, range(mesh.n_triangles))
        new = refined.points[mesh.n_vertices :]
        on_circle = refined.on_curved_boundary[mesh.n_vertices :]
        assert on_circle.sum() == 8
        np.testing.assert_allclose(
            np.sum(new[on_circle] ** 2, axis=1), 1.0, rtol=0, atol=1e-15
        )
        assert mesh.total_area < refined.total_area <= np.pi

    def test_children_partition_parents(self, lshape_mesh):
        refined = bisect(lshape_mesh, [0, 5])
        per_parent = np.bincount(
            refined.parent, weights=refined.areas, minlength=lshape_mesh.n_triangles
        )
        np.testing.assert_allclose(per_parent, lshape_mesh.areas, rtol=1e-14)
        assert refined.source_fingerprint == lshape_mesh.fingerprint
        assert refined.fingerprint != lshape_mesh.fingerprint

    def test_levels_increase(self, lshape_mesh):
        refined = bisect(lshape_mesh, [3])
        assert np.all(refined.level >= lshape_mesh.level[refined.parent])
        assert refined.level.max() >= 1

    def test_uniform_refinement_doubles(self, lshape_mesh):
        mesh = refine_uniformly(lshape_mesh, 2)
        assert mesh.n_triangles == 48
        assert mesh.parent is None
        assert mesh.level.max() == 2

    def test_random_refinement_stays_conforming(self, lshape_mesh, rng):
        mesh = _random_refinements(lshape_mesh, rng, rounds=6)
        # A hanging node would show up as an interior boundary edge
        for a, b in mesh.edges[mesh.boundary_edge_mask]:
            middle = 0.5 * (mesh.points[a] + mesh.points[b])
            assert _on_lshape_boundary(middle)
        assert np.all(mesh.signed_areas > 0)
        assert mesh.total_area == pytest.approx(3.0, rel=1e-13)

    def test_shape_regularity(self, lshape_mesh, rng):
        initial = min_angle(lshape_mesh)
        mesh = _random_refinements(lshape_mesh, rng, rounds=8)
        assert min_angle(mesh) >= 0.5 * initial

    def test_disk_area_grows_towards_pi(self, rng):
        mesh = make_unit_disk_mesh(8)
        for _ in range(5):
            k = max(1, mesh.n_triangles // 4)
            refined = bisect(mesh, rng.choice(mesh.n_triangles, size=k, replace=False))
            assert np.all(refined.signed_areas > 0)
            assert mesh.total_area <= refined.total_area + 1e-14
            assert refined.total_area <= np.pi
            mesh = refined
