"""Local planar projection and Delaunay triangulation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial import Delaunay, QhullError

EARTH_RADIUS_M = 6_371_000.0


@dataclass(frozen=True)
class PlanarPoint:
    x: float
    y: float
    source_id: str = ""


def project_local(lat, lon, origin: tuple[float, float]):
    """Equirectangular projection about ``origin`` = (lat0, lon0), in metres.

    Accepts scalars or arrays. x grows east, y grows north.
    """
    lat0, lon0 = origin
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    x = EARTH_RADIUS_M * math.cos(math.radians(lat0)) * np.radians(lon - lon0)
    y = EARTH_RADIUS_M * np.radians(lat - lat0)
    if x.ndim == 0:
        return float(x), float(y)
    return x, y


def project_points(coords: Sequence[tuple[float, float]], origin=None, ids=None) -> list[PlanarPoint]:
    arr = np.asarray(coords, dtype=float).reshape(-1, 2)
    if origin is None:
        origin = (float(arr[:, 0].min()), float(arr[:, 1].min()))
    x, y = project_local(arr[:, 0], arr[:, 1], origin)
    ids = ids if ids is not None else [str(i) for i in range(len(arr))]
    return [PlanarPoint(float(a), float(b), s) for a, b, s in zip(x, y, ids)]


@dataclass(frozen=True)
class TriangulationGraph:
    """Delaunay graph over deduplicated vertices.

    ``vertex_of[k]`` is the vertex index of input point ``k``; duplicate
    inputs share a vertex. ``edges`` rows are (i, j) with i < j, sorted.
    """

    vertices: np.ndarray
    source_ids: tuple[str, ...]
    edges: np.ndarray
    lengths: np.ndarray
    vertex_of: np.ndarray
    triangles: np.ndarray

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)


def _edges_from_pairs(pairs: set[tuple[int, int]], verts: np.ndarray):
    edges = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)
    if len(edges):
        lengths = np.hypot(*(verts[edges[:, 0]] - verts[edges[:, 1]]).T)
    else:
        lengths = np.zeros(0)
    return edges, lengths


def delaunay(points: Sequence[PlanarPoint] | np.ndarray) -> TriangulationGraph:
    """Delaunay triangulation of planar points.

    Exact duplicates are merged before triangulating (first occurrence wins
    the ``source_id``). With fewer than three unique points every pair is
    joined; collinear inputs become a path in sorted order. Cocircular ties
    are resolved by Qhull's triangulated output ("Qt"), which is deterministic
    for a given input order; vertices are sorted lexicographically first so
    the result does not depend on input order either.
    """
    if isinstance(points, np.ndarray):
        xy = np.asarray(points, dtype=float).reshape(-1, 2)
        ids = [str(i) for i in range(len(xy))]
    else:
        xy = np.array([(p.x, p.y) for p in points], dtype=float).reshape(-1, 2)
        ids = [p.source_id for p in points]
    if not np.all(np.isfinite(xy)):
        raise ValueError("non-finite point coordinates")

    uniq, first, inverse = np.unique(xy, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    src = tuple(ids[i] for i in first)
    n = len(uniq)
    empty_tri = np.zeros((0, 3), dtype=np.int64)

    if n < 3:
        pairs = {(i, j) for i in range(n) for j in range(i + 1, n)}
        edges, lengths = _edges_from_pairs(pairs, uniq)
        return TriangulationGraph(uniq, src, edges, lengths, inverse, empty_tri)

    try:
        tri = Delaunay(uniq, qhull_options="Qbb Qc Qz Q12 Qt")
        simplices = np.sort(tri.simplices, axis=1)
    except QhullError:
        simplices = empty_tri

    if len(simplices) == 0:
        # collinear: consecutive points along the line (uniq is lexsorted)
        pairs = {(i, i + 1) for i in range(n - 1)}
        edges, lengths = _edges_from_pairs(pairs, uniq)
        return TriangulationGraph(uniq, src, edges, lengths, inverse, empty_tri)

    pairs = set()
    for a, b, c in simplices:
        pairs.update({(int(a), int(b)), (int(a), int(c)), (int(b), int(c))})
    edges, lengths = _edges_from_pairs(pairs, uniq)
    return TriangulationGraph(uniq, src, edges, lengths, inverse, simplices.astype(np.int64))

