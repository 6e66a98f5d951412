"""Uniform triangulations of the unit square with edge topology and boundary tags.

Each refinement level ``L`` splits the square into ``2**(L-1) x 2**(L-1)``
cells and each cell into two triangles along its northwest-southeast
diagonal.  Edges carry a fixed global normal direction and the incidence
records (triangle, local edge slot, sign) needed to give edge-normal
unknowns a single global value.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

MAX_LEVEL = 8

Predicate = Callable[[np.ndarray], bool]


@dataclass(frozen=True)
class EdgeIncidence:
    """One (triangle, local edge slot) pair seeing an edge, with the sign
    relating the triangle's outward normal to the edge's global normal."""

    triangle: int
    local_edge: int
    sign: int


@dataclass(frozen=True)
class Edge:
    endpoints: tuple[int, int]          # lower global vertex index first
    global_normal: np.ndarray           # unit vector, fixed per edge
    incident: tuple[EdgeIncidence, ...]
    on_C: bool = False
    on_O: bool = False
    on_N: bool = False

    @property
    def is_boundary(self) -> bool:
        return len(self.incident) == 1


@dataclass(frozen=True)
class ElementGeometry:
    vertices: np.ndarray        # (3, 2), counterclockwise
    centroid: np.ndarray        # (2,)
    h: float                    # diameter = longest edge length
    area: float
    outward_normals: np.ndarray  # (3, 2), row i for local edge (i, i+1 mod 3)
    edge_lengths: np.ndarray    # (3,)


@dataclass(frozen=True)
class Mesh:
    """Immutable triangulation with precomputed topology and geometry."""

    vertices: np.ndarray        # (V, 2)
    triangles: np.ndarray       # (T, 3) vertex indices, counterclockwise
    edges: tuple[Edge, ...]
    level: int
    geometry: tuple[ElementGeometry, ...]
    tri_edges: np.ndarray       # (T, 3) global edge index per local edge
    tri_edge_signs: np.ndarray  # (T, 3) sign per local edge

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def edge_midpoint(self, e: int) -> np.ndarray:
        p, q = self.edges[e].endpoints
        return 0.5 * (self.vertices[p] + self.vertices[q])

    def edge_length(self, e: int) -> float:
        p, q = self.edges[e].endpoints
        return float(np.linalg.norm(self.vertices[q] - self.vertices[p]))

    def boundary_edges(self) -> list[int]:
        return [i for i, e in enumerate(self.edges) if e.is_boundary]

    def edges_tagged(self, tag: str) -> list[int]:
        """Edge indices with the given boundary tag ('C', 'O' or 'N')."""
        attr = "on_" + tag
        return [i for i, e in enumerate(self.edges) if getattr(e, attr)]


def _element_geometry(coords: np.ndarray) -> ElementGeometry:
    d = np.roll(coords, -1, axis=0) - coords        # local edge vectors
    lengths = np.linalg.norm(d, axis=1)
    # outward normal of a CCW triangle: rotate the edge vector clockwise
    normals = np.column_stack((d[:, 1], -d[:, 0])) / lengths[:, None]
    area = 0.5 * (d[0, 0] * (-d[2, 1]) - d[0, 1] * (-d[2, 0]))
    return ElementGeometry(
        vertices=coords,
        centroid=coords.mean(axis=0),
        h=float(lengths.max()),
        area=float(area),
        outward_normals=normals,
        edge_lengths=lengths,
    )


def build_uniform_grid(level: int) -> Mesh:
    """Triangulate the unit square at the given refinement level.

    Level ``L`` yields ``(2**(L-1))**2`` square cells, each split along its
    northwest-southeast diagonal, for ``2 * 4**(L-1)`` triangles in total.
    """
    if not isinstance(level, (int, np.integer)) or isinstance(level, bool):
        raise TypeError(f"level must be an integer, got {level!r}")
    if not 1 <= level <= MAX_LEVEL:
        raise ValueError(f"level must be in [1, {MAX_LEVEL}], got {level}")

    n = 2 ** (level - 1)
    xs = np.linspace(0.0, 1.0, n + 1)
    gx, gy = np.meshgrid(xs, xs, indexing="xy")
    vertices = np.column_stack((gx.ravel(), gy.ravel()))

    def vid(i: int, j: int) -> int:
        return j * (n + 1) + i

    triangles = []
    for j in range(n):
        for i in range(n):
            ll, lr = vid(i, j), vid(i + 1, j)
            ul, ur = vid(i, j + 1), vid(i + 1, j + 1)
            # NW-SE diagonal runs from ul to lr
            triangles.append((ll, lr, ul))
            triangles.append((lr, ur, ul))
    triangles = np.asarray(triangles, dtype=np.int64)

    geometry = tuple(_element_geometry(vertices[tri]) for tri in triangles)

    # collect edges: sorted endpoint pair -> incidences
    by_pair: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for t, tri in enumerate(triangles):
        for le in range(3):
            a, b = int(tri[le]), int(tri[(le + 1) % 3])
            pair = (a, b) if a < b else (b, a)
            by_pair.setdefault(pair, []).append((t, le))

    edges: list[Edge] = []
    tri_edges = np.zeros((len(triangles), 3), dtype=np.int64)
    tri_edge_signs = np.zeros((len(triangles), 3), dtype=np.int64)
    for e, pair in enumerate(sorted(by_pair)):
        incidences = by_pair[pair]
        p, q = pair
        if len(incidences) == 1:
            # boundary edge: global normal is the outward normal of the domain
            t, le = incidences[0]
            normal = geometry[t].outward_normals[le].copy()
        else:
            tangent = vertices[q] - vertices[p]
            tangent = tangent / np.linalg.norm(tangent)
            normal = np.array([-tangent[1], tangent[0]])  # 90 deg CCW rotation
        recs = []
        for t, le in incidences:
            sign = 1 if float(geometry[t].outward_normals[le] @ normal) > 0 else -1
            recs.append(EdgeIncidence(t, le, sign))
            tri_edges[t, le] = e
            tri_edge_signs[t, le] = sign
        edges.append(Edge(endpoints=pair, global_normal=normal, incident=tuple(recs)))

    return Mesh(
        vertices=vertices,
        triangles=triangles,
        edges=tuple(edges),
        level=level,
        geometry=geometry,
        tri_edges=tri_edges,
        tri_edge_signs=tri_edge_signs,
    )


def classify_boundary(mesh: Mesh, control_pred: Predicate, observe_pred: Predicate) -> Mesh:
    """Tag boundary edges by the two midpoint predicates.

    ``control_pred`` decides every boundary edge: true puts it on the control
    part, false on the homogeneous-Neumann part.  ``observe_pred`` marks the
    observation part independently.  Interior edges are left untouched.
    """
    edges = []
    for i, edge in enumerate(mesh.edges):
        if not edge.is_boundary:
            edges.append(edge)
            continue
        mid = mesh.edge_midpoint(i)
        on_c = bool(control_pred(mid))
        edges.append(replace(edge, on_C=on_c, on_N=not on_c, on_O=bool(observe_pred(mid))))
    return replace(mesh, edges=tuple(edges))
