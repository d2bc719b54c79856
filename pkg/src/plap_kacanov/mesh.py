"""
Conforming triangulations of the two model domains.

Meshes are immutable: refinement returns a new :class:`Mesh` that remembers,
for every triangle, the triangle of the previous mesh it descends from.
Every triangle is stored with its newest vertex in the position named by
``refinement_edge`` (the refinement edge is the edge opposite that vertex).
"""

import hashlib
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, NamedTuple, Optional, Tuple

import numpy as np

from .errors import InvalidGeometryError

logger = logging.getLogger(__name__)

# Relative tolerance below which a triangle counts as degenerate
AREA_TOL = 1e-14


class Vertex(NamedTuple):
    x: float
    y: float
    on_boundary: bool
    on_curved_boundary: bool


class Triangle(NamedTuple):
    v: Tuple[int, int, int]
    refinement_edge: int
    parent: Optional[int]


class ElementGeometry(NamedTuple):
    """Geometric data of a single triangle."""

    area: float
    gradients: np.ndarray  # (3, 2) gradients of the hat functions
    edge_lengths: np.ndarray  # (3,) length of the edge opposite local vertex k
    diameter: float


def _edge_structure(cells: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unique edges, cell-to-edge map and edge multiplicity.

    Local edge ``k`` of a triangle is the edge opposite its vertex ``k``.
    """
    local = np.stack(
        [cells[:, [1, 2]], cells[:, [2, 0]], cells[:, [0, 1]]], axis=1
    ).reshape(-1, 2)
    local = np.sort(local, axis=1)
    edges, inverse, counts = np.unique(
        local, axis=0, return_inverse=True, return_counts=True
    )
    cell_to_edge = inverse.reshape(-1, 3)
    return edges, cell_to_edge, counts


def _check_connectivity(points: np.ndarray, cells: np.ndarray) -> None:
    if points.ndim != 2 or points.shape[1] != 2:
        raise InvalidGeometryError("points must have shape (n, 2)")
    if cells.ndim != 2 or cells.shape[1] != 3 or len(cells) == 0:
        raise InvalidGeometryError("cells must have shape (m, 3) with m > 0")
    if cells.min() < 0 or cells.max() >= len(points):
        raise InvalidGeometryError("cell references a missing vertex")
    if np.any(
        (cells[:, 0] == cells[:, 1])
        | (cells[:, 1] == cells[:, 2])
        | (cells[:, 0] == cells[:, 2])
    ):
        raise InvalidGeometryError("triangle with repeated vertex index")


def _signed_areas(points: np.ndarray, cells: np.ndarray) -> np.ndarray:
    p0 = points[cells[:, 0]]
    p1 = points[cells[:, 1]]
    p2 = points[cells[:, 2]]
    return 0.5 * (
        (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
        - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1])
    )


def _newest_last(cells: np.ndarray, refinement_edge: np.ndarray) -> np.ndarray:
    """Cyclically rotate each row so that the refinement edge is local edge 2."""
    shift = (np.arange(3)[None, :] + refinement_edge[:, None] + 1) % 3
    return np.take_along_axis(cells, shift, axis=1)


@dataclass(frozen=True, eq=False)
class Mesh:
    """
    Triangular mesh with newest-vertex-bisection bookkeeping.

    Attributes:
        points: (n_vertices, 2) vertex coordinates.
        cells: (n_triangles, 3) counterclockwise vertex indices.
        refinement_edge: (n_triangles,) local index of the refinement edge.
        on_curved_boundary: (n_vertices,) flags of vertices on the unit circle.
        parent: index of the ancestor triangle in the mesh this one was
            refined from, or None for an initial mesh.
        level: number of bisections separating a triangle from the initial mesh.
        midpoint_parents: (k, 2) edge endpoints of the last k vertices, which
            were created as edge midpoints by the refinement producing this mesh.
        source_fingerprint: fingerprint of the mesh this one was refined from.
    """

    points: np.ndarray
    cells: np.ndarray
    refinement_edge: np.ndarray
    on_curved_boundary: np.ndarray
    parent: Optional[np.ndarray] = None
    level: Optional[np.ndarray] = None
    midpoint_parents: Optional[np.ndarray] = None
    source_fingerprint: Optional[str] = None
    name: str = "Triangular"

    def __post_init__(self):
        points = np.ascontiguousarray(self.points, dtype=float)
        cells = np.ascontiguousarray(self.cells, dtype=np.int64)
        ref = np.ascontiguousarray(self.refinement_edge, dtype=np.int8)
        curved = np.ascontiguousarray(self.on_curved_boundary, dtype=bool)
        level = (
            np.zeros(len(cells), dtype=np.int64)
            if self.level is None
            else np.ascontiguousarray(self.level, dtype=np.int64)
        )
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "refinement_edge", ref)
        object.__setattr__(self, "on_curved_boundary", curved)
        object.__setattr__(self, "level", level)
        if self.parent is not None:
            object.__setattr__(
                self, "parent", np.ascontiguousarray(self.parent, dtype=np.int64)
            )
        self._validate()

    def _validate(self):
        points, cells = self.points, self.cells
        _check_connectivity(points, cells)
        if not np.all(np.isfinite(points)):
            raise InvalidGeometryError("vertex coordinates must be finite")
        if len(self.refinement_edge) != len(cells) or np.any(
            (self.refinement_edge < 0) | (self.refinement_edge > 2)
        ):
            raise InvalidGeometryError("refinement_edge must be 0, 1 or 2 per cell")
        if len(self.on_curved_boundary) != len(points):
            raise InvalidGeometryError(
                "on_curved_boundary must have one flag per vertex"
            )
        scale = max(np.ptp(points, axis=0).max(), 1.0) ** 2
        bad = np.flatnonzero(self.signed_areas <= AREA_TOL * scale)
        if bad.size:
            raise InvalidGeometryError(
                f"{bad.size} triangle(s) with nonpositive signed area, first {bad[0]}"
            )
        if np.any(self._edge_data[2] > 2):
            raise InvalidGeometryError("edge shared by more than two triangles")
        if np.any(self.on_curved_boundary & ~self.on_boundary):
            raise InvalidGeometryError("curved-boundary vertex not on the boundary")

    def __str__(self) -> str:
        return (
            f"{self.name} mesh with {self.n_vertices} vertices and "
            f"{self.n_triangles} triangles."
        )

    def __repr__(self) -> str:
        return self.__str__()

    @classmethod
    def from_arrays(
        cls,
        points: np.ndarray,
        cells: np.ndarray,
        refinement_edge: Optional[np.ndarray] = None,
        on_curved_boundary: Optional[np.ndarray] = None,
        name: str = "Triangular",
    ) -> "Mesh":
        """
        Build an initial mesh, orienting cells counterclockwise.

        When ``refinement_edge`` is omitted the longest edge of every
        triangle is chosen.
        """
        points = np.asarray(points, dtype=float)
        cells = np.array(cells, dtype=np.int64)
        _check_connectivity(points, cells)
        flip = _signed_areas(points, cells) < 0
        cells[flip, :2] = cells[flip, 1::-1]
        if refinement_edge is None:
            refinement_edge = np.argmax(_local_edge_lengths(points, cells), axis=1)
        if on_curved_boundary is None:
            on_curved_boundary = np.zeros(len(points), dtype=bool)
        return cls(points, cells, refinement_edge, on_curved_boundary, name=name)

    # --- Sizes and accessors ---

    @property
    def n_vertices(self) -> int:
        return int(self.points.shape[0])

    @property
    def n_triangles(self) -> int:
        return int(self.cells.shape[0])

    @property
    def ndof(self) -> int:
        """Number of free (non-Dirichlet) vertices."""
        return int(self.free_vertices.size)

    def vertex(self, i: int) -> Vertex:
        x, y = self.points[i]
        return Vertex(
            float(x),
            float(y),
            bool(self.on_boundary[i]),
            bool(self.on_curved_boundary[i]),
        )

    def triangle(self, t: int) -> Triangle:
        parent = None if self.parent is None else int(self.parent[t])
        v = tuple(int(i) for i in self.cells[t])
        edge = int(self.refinement_edge[t])
        return Triangle(v, edge, parent)  # type: ignore[arg-type]

    # --- Derived geometry (cached, the mesh never changes) ---

    @cached_property
    def fingerprint(self) -> str:
        digest = hashlib.sha1()
        digest.update(self.points.tobytes())
        digest.update(self.cells.tobytes())
        return digest.hexdigest()

    @cached_property
    def signed_areas(self) -> np.ndarray:
        return _signed_areas(self.points, self.cells)

    @property
    def areas(self) -> np.ndarray:
        return self.signed_areas

    @cached_property
    def total_area(self) -> float:
        return float(self.signed_areas.sum())

    @cached_property
    def hat_gradients(self) -> np.ndarray:
        """(n_triangles, 3, 2) constant gradients of the three hat functions."""
        p = self.points[self.cells]
        x, y = p[:, :, 0], p[:, :, 1]
        twice_area = 2.0 * self.signed_areas
        grads = np.empty((self.n_triangles, 3, 2))
        for k in range(3):
            i, j = (k + 1) % 3, (k + 2) % 3
            grads[:, k, 0] = (y[:, i] - y[:, j]) / twice_area
            grads[:, k, 1] = (x[:, j] - x[:, i]) / twice_area
        return grads

    @cached_property
    def local_edge_lengths(self) -> np.ndarray:
        return _local_edge_lengths(self.points, self.cells)

    @cached_property
    def diameters(self) -> np.ndarray:
        return self.local_edge_lengths.max(axis=1)

    @cached_property
    def barycenters(self) -> np.ndarray:
        return self.points[self.cells].mean(axis=1)

    # --- Topology ---

    @cached_property
    def _edge_data(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return _edge_structure(self.cells)

    @property
    def edges(self) -> np.ndarray:
        """(n_edges, 2) vertex pairs, sorted within each row."""
        return self._edge_data[0]

    @property
    def cell_to_edge(self) -> np.ndarray:
        """(n_triangles, 3) edge index of local edge k (opposite vertex k)."""
        return self._edge_data[1]

    @property
    def boundary_edge_mask(self) -> np.ndarray:
        return self._edge_data[2] == 1

    @cached_property
    def edge_to_cells(self) -> np.ndarray:
        """(n_edges, 2) adjacent triangles; -1 marks the missing boundary side."""
        n_edges = len(self.edges)
        e2c = -np.ones((n_edges, 2), dtype=np.int64)
        flat = self.cell_to_edge.ravel()
        owners = np.repeat(np.arange(self.n_triangles), 3)
        order = np.argsort(flat, kind="stable")
        flat, owners = flat[order], owners[order]
        first = np.ones(len(flat), dtype=bool)
        first[1:] = flat[1:] != flat[:-1]
        e2c[flat[first], 0] = owners[first]
        e2c[flat[~first], 1] = owners[~first]
        return e2c

    @cached_property
    def on_boundary(self) -> np.ndarray:
        flags = np.zeros(self.n_vertices, dtype=bool)
        flags[self.edges[self.boundary_edge_mask].ravel()] = True
        return flags

    @cached_property
    def dirichlet_vertices(self) -> np.ndarray:
        return np.flatnonzero(self.on_boundary)

    @cached_property
    def free_vertices(self) -> np.ndarray:
        return np.flatnonzero(~self.on_boundary)


def _local_edge_lengths(points: np.ndarray, cells: np.ndarray) -> np.ndarray:
    p = points[cells]
    return np.stack(
        [
            np.linalg.norm(p[:, (k + 1) % 3] - p[:, (k + 2) % 3], axis=1)
            for k in range(3)
        ],
        axis=1,
    )


def make_unit_disk_mesh(n_boundary: int) -> Mesh:
    """
    Fan triangulation of the regular n-gon inscribed in the unit circle.

    The boundary chord of every fan triangle is its refinement edge (the
    center is the newest vertex), so the first bisection of a boundary
    triangle lands on the circle and neighbouring fan triangles stay
    compatible.
    """
    if int(n_boundary) < 3:
        raise InvalidGeometryError(
            f"the disk fan needs at least 3 boundary vertices, got {n_boundary}"
        )
    n = int(n_boundary)
    theta = 2.0 * np.pi * np.arange(n) / n
    points = np.vstack([[0.0, 0.0], np.column_stack([np.cos(theta), np.sin(theta)])])
    k = np.arange(n)
    cells = np.column_stack([1 + k, 1 + (k + 1) % n, np.zeros(n, dtype=np.int64)])
    curved = np.ones(n + 1, dtype=bool)
    curved[0] = False
    return Mesh(points, cells, np.full(n, 2), curved, name="Unit disk")


def make_lshape_mesh() -> Mesh:
    """
    Twelve-triangle mesh of the L-shape [-1,1]^2 minus [0,1)^2.

    Each of the three unit squares is split into four triangles from its
    center; the square side (the longest edge) is the refinement edge.
    """
    corners = [(-1.0, 0.0), (-1.0, -1.0), (0.0, -1.0)]
    index = {}
    points = []

    def vid(xy):
        if xy not in index:
            index[xy] = len(points)
            points.append(xy)
        return index[xy]

    cells = []
    for x, y in corners:
        square = [vid((x, y)), vid((x + 1, y)), vid((x + 1, y + 1)), vid((x, y + 1))]
        center = vid((x + 0.5, y + 0.5))
        for i in range(4):
            cells.append((square[i], square[(i + 1) % 4], center))
    points_arr = np.array(points, dtype=float)
    return Mesh(
        points_arr,
        np.array(cells, dtype=np.int64),
        np.full(len(cells), 2),
        np.zeros(len(points_arr), dtype=bool),
        name="L-shape",
    )


def bisect(mesh: Mesh, marked: Iterable[int]) -> Mesh:
    """
    Newest-vertex bisection of the marked triangles plus conforming closure.

    A triangle is split whenever one of its edges is split, and then always
    through its refinement edge first; the remaining split edges are handled
    by bisecting the children, so every triangle ends up with 2, 3 or 4
    children. New vertices on a boundary edge between two curved-boundary
    vertices are projected radially onto the unit circle.

    Args:
        mesh: conforming input mesh.
        marked: triangle indices to refine.

    Returns:
        The refined mesh (the input mesh itself when nothing is marked).
    """
    marked_idx = np.unique(np.fromiter((int(t) for t in marked), dtype=np.int64))
    if marked_idx.size == 0:
        return mesh
    if marked_idx[0] < 0 or marked_idx[-1] >= mesh.n_triangles:
        raise InvalidGeometryError("marked triangle index out of range")

    cells = _newest_last(mesh.cells, mesh.refinement_edge.astype(np.int64))
    edges, cell_to_edge, counts = _edge_structure(cells)

    split = np.zeros(len(edges), dtype=bool)
    split[cell_to_edge[marked_idx, 2]] = True
    while True:
        touched = split[cell_to_edge].any(axis=1)
        missing = touched & ~split[cell_to_edge[:, 2]]
        if not missing.any():
            break
        split[cell_to_edge[missing, 2]] = True

    split_edges = edges[split]
    n_old = mesh.n_vertices
    midpoint_ids = n_old + np.arange(len(split_edges))
    midpoints = 0.5 * (mesh.points[split_edges[:, 0]] + mesh.points[split_edges[:, 1]])
    curved = mesh.on_curved_boundary
    project = (
        counts[split].astype(np.int64) == 1
    ) & curved[split_edges[:, 0]] & curved[split_edges[:, 1]]
    midpoints[project] /= np.linalg.norm(midpoints[project], axis=1)[:, None]
    points = np.vstack([mesh.points, midpoints])
    new_curved = np.concatenate([curved, project])

    # Midpoint lookup by encoded edge key
    n_total = len(points)
    keys = split_edges[:, 0] * n_total + split_edges[:, 1]
    order = np.argsort(keys)
    keys, midpoint_ids = keys[order], midpoint_ids[order]

    def lookup(a, b):
        key = np.minimum(a, b) * n_total + np.maximum(a, b)
        pos = np.clip(np.searchsorted(keys, key), 0, max(len(keys) - 1, 0))
        found = keys[pos] == key
        return found, midpoint_ids[pos]

    origin = np.arange(mesh.n_triangles, dtype=np.int64)
    level = mesh.level.copy()
    while True:
        found, mid = lookup(cells[:, 0], cells[:, 1])
        if not found.any():
            break
        c, m = cells[found], mid[found]
        child_a = np.column_stack([c[:, 2], c[:, 0], m])
        child_b = np.column_stack([c[:, 1], c[:, 2], m])
        keep = ~found
        cells = np.vstack([cells[keep], child_a, child_b])
        origin = np.concatenate([origin[keep], origin[found], origin[found]])
        level = np.concatenate([level[keep], level[found] + 1, level[found] + 1])

    # Stable order: descendants grouped by ancestor
    order = np.argsort(origin, kind="stable")
    refined = Mesh(
        points,
        cells[order],
        np.full(len(cells), 2),
        new_curved,
        parent=origin[order],
        level=level[order],
        midpoint_parents=split_edges,
        source_fingerprint=mesh.fingerprint,
        name=mesh.name,
    )
    logger.debug(
        "bisect: %d marked, %d edges split, %d -> %d triangles",
        marked_idx.size,
        len(split_edges),
        mesh.n_triangles,
        refined.n_triangles,
    )
    return refined


def refine_uniformly(mesh: Mesh, passes: int) -> Mesh:
    """Bisect every triangle ``passes`` times (each pass splits all triangles)."""
    for _ in range(int(passes)):
        mesh = bisect(mesh, range(mesh.n_triangles))
    # A fixed mesh used as a starting point keeps no ancestry
    if mesh.parent is None:
        return mesh
    return Mesh(
        mesh.points,
        mesh.cells,
        mesh.refinement_edge,
        mesh.on_curved_boundary,
        level=mesh.level,
        name=mesh.name,
    )


def element_geometry(mesh: Mesh, t: int) -> ElementGeometry:
    """Area, hat-function gradients, edge lengths and diameter of triangle ``t``."""
    if not 0 <= t < mesh.n_triangles:
        raise IndexError(f"triangle index {t} out of range")
    area = float(mesh.signed_areas[t])
    if area <= AREA_TOL:
        raise InvalidGeometryError(f"triangle {t} is degenerate (area {area:.3e})")
    lengths = mesh.local_edge_lengths[t].copy()
    return ElementGeometry(
        area, mesh.hat_gradients[t].copy(), lengths, float(lengths.max())
    )


def min_angle(mesh: Mesh) -> float:
    """Smallest interior angle over the mesh, in degrees."""
    a = mesh.local_edge_lengths
    angles = []
    for k in range(3):
        opp, s1, s2 = a[:, k], a[:, (k + 1) % 3], a[:, (k + 2) % 3]
        cos_k = np.clip((s1**2 + s2**2 - opp**2) / (2.0 * s1 * s2), -1.0, 1.0)
        angles.append(np.arccos(cos_k))
    return float(np.degrees(np.min(angles)))
