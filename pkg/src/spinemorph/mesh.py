"""
mesh.py
-------

Triangle mesh container and the geometric primitives the measurement
pipeline is built on: normals, centers of mass, PCA bounding boxes,
half-space clipping and plane/line intersections.

All coordinates are millimeters in LPS world space (+x left,
+y posterior, +z superior).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

from .errors import DegenerateGeometryError, DegenerateMeshError

#: distance below which two points are considered the same (mm)
MERGE_TOL = 1e-6

GLOBAL_L = np.array([1.0, 0.0, 0.0])
GLOBAL_P = np.array([0.0, 1.0, 0.0])
GLOBAL_S = np.array([0.0, 0.0, 1.0])
GLOBAL_A = -GLOBAL_P


def _as_points(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        return np.zeros((0, 3))
    return arr.reshape((-1, 3))


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """
    Indexed triangle surface.

    Parameters
    ----------
    vertices : (n, 3) float
      Vertex positions in mm.
    faces : (m, 3) int
      Counter-clockwise vertex index triples (outward normals).
    """

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        vertices = _as_points(self.vertices)
        faces = np.asarray(self.faces, dtype=np.int64)
        faces = faces.reshape((-1, 3)) if faces.size else np.zeros((0, 3), dtype=np.int64)
        if len(faces):
            if faces.min() < 0 or faces.max() >= len(vertices):
                raise DegenerateMeshError("face index out of range")
            if np.any(
                (faces[:, 0] == faces[:, 1])
                | (faces[:, 1] == faces[:, 2])
                | (faces[:, 0] == faces[:, 2])
            ):
                raise DegenerateMeshError("face references the same vertex twice")
        vertices.setflags(write=False)
        faces.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "faces", faces)

    @classmethod
    def empty(cls) -> "TriangleMesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    @property
    def is_empty(self) -> bool:
        return len(self.faces) == 0

    def validate(self) -> "TriangleMesh":
        """Raise unless the mesh is usable by the pipeline."""
        if len(self.faces) == 0 or len(np.unique(self.faces)) < 3:
            raise DegenerateMeshError(
                f"mesh needs >= 3 vertices and >= 1 face "
                f"(got {len(self.vertices)} vertices, {len(self.faces)} faces)"
            )
        return self

    def transformed(self, matrix=None, translation=None, scale: float = 1.0) -> "TriangleMesh":
        """Return ``scale * R @ v + t`` applied to every vertex."""
        v = self.vertices
        if matrix is not None:
            v = v @ np.asarray(matrix, dtype=np.float64).T
        if scale != 1.0:
            v = v * scale
        if translation is not None:
            v = v + np.asarray(translation, dtype=np.float64)
        faces = self.faces
        if matrix is not None and np.linalg.det(matrix) * scale < 0:
            faces = faces[:, ::-1]
        return TriangleMesh(v, faces)

    def __repr__(self):
        return f"TriangleMesh(vertices={len(self.vertices)}, faces={len(self.faces)})"


@dataclass(frozen=True)
class Plane:
    origin: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        normal = np.asarray(self.normal, dtype=np.float64).reshape(3)
        length = np.linalg.norm(normal)
        if length < 1e-12:
            raise DegenerateGeometryError("plane normal has zero length")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "normal", normal / length)

    def flipped(self) -> "Plane":
        return Plane(self.origin, -self.normal)

    def signed_distance(self, points) -> np.ndarray:
        return (_as_points(points) - self.origin) @ self.normal


@dataclass(frozen=True)
class ObbFrame:
    """
    Oriented bounding box.

    ``axes`` rows are unit vectors in descending order of vertex variance.
    """

    center: np.ndarray
    axes: np.ndarray
    half_extents: np.ndarray
    eigenvalues: np.ndarray = field(default=None, repr=False)


def weld_vertices(vertices, faces, tol: float = MERGE_TOL):
    """
    Merge vertices closer than ``tol`` and drop faces that collapse.

    Returns
    -------
    vertices : (k, 3) float
      Unique vertices; each cluster keeps its lowest-index representative.
    faces : (m', 3) int
      Re-indexed faces.
    """
    vertices = _as_points(vertices)
    faces = np.asarray(faces, dtype=np.int64).reshape((-1, 3))
    n = len(vertices)
    if n == 0:
        return vertices, faces
    pairs = cKDTree(vertices).query_pairs(tol, output_type="ndarray")
    if len(pairs):
        graph = sparse.coo_matrix(
            (np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n)
        )
        _, labels = csgraph.connected_components(graph, directed=False)
    else:
        labels = np.arange(n)
    # representative = first vertex of each cluster, in original order
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first)] = np.arange(len(first))
    remap = rank[inverse]
    order = np.sort(first)
    new_faces = remap[faces] if len(faces) else faces
    if len(new_faces):
        ok = (
            (new_faces[:, 0] != new_faces[:, 1])
            & (new_faces[:, 1] != new_faces[:, 2])
            & (new_faces[:, 0] != new_faces[:, 2])
        )
        new_faces = new_faces[ok]
    return vertices[order], new_faces


def remove_unreferenced(vertices, faces):
    """Drop vertices no face uses; preserves the order of the rest."""
    vertices = _as_points(vertices)
    faces = np.asarray(faces, dtype=np.int64).reshape((-1, 3))
    used = np.zeros(len(vertices), dtype=bool)
    used[faces.ravel()] = True
    remap = np.cumsum(used) - 1
    return vertices[used], remap[faces]


def face_normals(mesh: TriangleMesh, unit: bool = True) -> np.ndarray:
    tri = mesh.vertices[mesh.faces]
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    if not unit:
        return cross
    length = np.linalg.norm(cross, axis=1)
    out = np.zeros_like(cross)
    ok = length > 0
    out[ok] = cross[ok] / length[ok, None]
    return out


def face_areas(mesh: TriangleMesh) -> np.ndarray:
    return 0.5 * np.linalg.norm(face_normals(mesh, unit=False), axis=1)


def surface_area(mesh: TriangleMesh) -> float:
    return float(face_areas(mesh).sum())


def center_of_mass(mesh: TriangleMesh) -> np.ndarray:
    """
    Unweighted mean of the unique vertex positions.

    This is a surface-vertex average, so it depends on tessellation.
    """
    if len(mesh.vertices) == 0:
        raise DegenerateMeshError("center of mass of an empty mesh")
    return mesh.vertices.mean(axis=0)


def vertex_normals(mesh: TriangleMesh) -> np.ndarray:
    """
    Area-weighted vertex normals.

    Each vertex gets the normalized sum of its incident face normals
    weighted by face area. Vertices without faces get a zero vector.
    """
    weighted = face_normals(mesh, unit=False)  # |cross| = 2 * area
    summed = np.zeros((len(mesh.vertices), 3))
    for i in range(3):
        np.add.at(summed, mesh.faces[:, i], weighted)
    length = np.linalg.norm(summed, axis=1)
    out = np.zeros_like(summed)
    ok = length > 1e-300
    out[ok] = summed[ok] / length[ok, None]
    return out


def _axis_sign(axis: np.ndarray) -> float:
    # align with the global axis it is closest to; tie -> first nonzero positive
    best = np.argmax(np.abs(axis))
    if abs(abs(axis[best]) - np.sort(np.abs(axis))[-2]) > 1e-12:
        return 1.0 if axis[best] >= 0 else -1.0
    for c in axis:
        if abs(c) > 1e-12:
            return 1.0 if c > 0 else -1.0
    return 1.0


def oriented_bounding_box(mesh: TriangleMesh) -> ObbFrame:
    """
    PCA bounding box of the mesh vertices.

    Axes are covariance eigenvectors in descending eigenvalue order, each
    signed to point along the global axis it is most aligned with.

    Raises
    ------
    DegenerateGeometryError
      If the vertices are collinear (covariance rank < 2).
    """
    points = mesh.vertices
    if len(points) < 3:
        raise DegenerateGeometryError("need at least 3 vertices for a bounding box")
    mean = points.mean(axis=0)
    centered = points - mean
    cov = centered.T @ centered / len(points)
    values, vectors = np.linalg.eigh(cov)
    order = np.argsort(values)[::-1]
    values = values[order]
    axes = vectors[:, order].T
    scale = max(values[0], 1e-300)
    if values[0] <= 0 or values[1] <= 1e-12 * scale:
        raise DegenerateGeometryError("vertices are collinear; bounding box undefined")
    # re-orthonormalize against round-off
    q, _ = np.linalg.qr(axes.T)
    axes = q.T * np.sign(np.einsum("ij,ij->i", q.T, axes))[:, None]
    axes = axes * np.array([_axis_sign(a) for a in axes])[:, None]

    proj = centered @ axes.T
    lo, hi = proj.min(axis=0), proj.max(axis=0)
    center = mean + ((lo + hi) / 2.0) @ axes
    return ObbFrame(
        center=center,
        axes=axes,
        half_extents=(hi - lo) / 2.0,
        eigenvalues=np.maximum(values, 0.0),
    )


def _dedupe_points(points: np.ndarray, tol: float = MERGE_TOL) -> np.ndarray:
    if len(points) < 2:
        return points
    pairs = cKDTree(points).query_pairs(tol, output_type="ndarray")
    if not len(pairs):
        return points
    n = len(points)
    graph = sparse.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = csgraph.connected_components(graph, directed=False)
    _, first = np.unique(labels, return_index=True)
    return points[np.sort(first)]


def _unique_edges(faces: np.ndarray) -> np.ndarray:
    edges = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    edges.sort(axis=1)
    return np.unique(edges, axis=0)


def plane_mesh_intersection(mesh: TriangleMesh, plane: Plane, tol: float = MERGE_TOL) -> np.ndarray:
    """
    Points where mesh edges cross a plane.

    Edges whose endpoints lie strictly on opposite sides contribute their
    interpolated crossing; vertices within ``tol`` of the plane are
    returned as they are. Results are deduplicated and unordered.

    Returns
    -------
    points : (k, 3) float
    """
    if mesh.is_empty:
        return np.zeros((0, 3))
    dist = plane.signed_distance(mesh.vertices)
    on = np.abs(dist) <= tol
    side = np.where(on, 0, np.sign(dist)).astype(np.int8)

    edges = _unique_edges(mesh.faces)
    crossing = edges[side[edges[:, 0]] * side[edges[:, 1]] < 0]
    a, b = crossing[:, 0], crossing[:, 1]
    t = dist[a] / (dist[a] - dist[b])
    points = mesh.vertices[a] + t[:, None] * (mesh.vertices[b] - mesh.vertices[a])

    touching = np.unique(mesh.faces.ravel())
    touching = touching[on[touching]]
    points = np.concatenate([mesh.vertices[touching], points])
    return _dedupe_points(points, tol)


def cut_mesh_by_plane(mesh: TriangleMesh, plane: Plane, tol: float = MERGE_TOL) -> TriangleMesh:
    """
    Keep the part of the mesh on the positive side of ``plane``.

    Triangles that straddle the plane are clipped exactly; new vertices
    are placed on the intersected edges and shared between neighbors.
    Faces lying entirely on or behind the plane are discarded.

    Returns
    -------
    TriangleMesh
      Possibly empty.
    """
    if mesh.is_empty:
        return TriangleMesh.empty()
    verts = mesh.vertices
    faces = mesh.faces
    dist = plane.signed_distance(verts)
    dist = np.where(np.abs(dist) <= tol, 0.0, dist)

    fd = dist[faces]
    keep_whole = (fd >= 0).all(axis=1) & (fd > 0).any(axis=1)
    straddle = (fd > 0).any(axis=1) & (fd < 0).any(axis=1)

    new_vertices = [verts]
    new_faces = [faces[keep_whole]]
    edge_index: dict[tuple[int, int], int] = {}
    extra = []
    next_index = len(verts)

    def edge_point(i: int, j: int) -> int:
        nonlocal next_index
        key = (i, j) if i < j else (j, i)
        found = edge_index.get(key)
        if found is None:
            a, b = key
            t = dist[a] / (dist[a] - dist[b])
            extra.append(verts[a] + t * (verts[b] - verts[a]))
            found = edge_index[key] = next_index
            next_index += 1
        return found

    clipped = []
    for face in faces[straddle]:
        polygon = []
        for k in range(3):
            i, j = int(face[k]), int(face[(k + 1) % 3])
            di, dj = dist[i], dist[j]
            if di >= 0:
                polygon.append(i)
            if (di > 0 and dj < 0) or (di < 0 and dj > 0):
                polygon.append(edge_point(i, j))
        for k in range(1, len(polygon) - 1):
            tri = (polygon[0], polygon[k], polygon[k + 1])
            if len(set(tri)) == 3:
                clipped.append(tri)

    if extra:
        new_vertices.append(np.array(extra))
    if clipped:
        new_faces.append(np.array(clipped, dtype=np.int64))
    all_faces = np.concatenate(new_faces) if new_faces else np.zeros((0, 3), dtype=np.int64)
    if len(all_faces) == 0:
        return TriangleMesh.empty()
    v, f = remove_unreferenced(np.concatenate(new_vertices), all_faces)
    return TriangleMesh(v, f)


def line_mesh_intersection(mesh: TriangleMesh, origin, direction, tol: float = MERGE_TOL) -> np.ndarray:
    """
    Intersect an infinite line with every triangle.

    Returns
    -------
    points : (k, 3) float
      Hits sorted by signed distance along ``direction`` from ``origin``;
      hits on shared edges or vertices are reported once.
    """
    origin = np.asarray(origin, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    direction = direction / np.linalg.norm(direction)
    if mesh.is_empty:
        return np.zeros((0, 3))
    tri = mesh.vertices[mesh.faces]
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    p = np.cross(direction, e2)
    det = np.einsum("ij,ij->i", e1, p)
    scale = np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1)
    ok = np.abs(det) > 1e-12 * np.maximum(scale, 1e-300)
    inv = np.zeros_like(det)
    inv[ok] = 1.0 / det[ok]
    s = origin - tri[:, 0]
    u = np.einsum("ij,ij->i", s, p) * inv
    q = np.cross(s, e1)
    v = (q @ direction) * inv
    t = np.einsum("ij,ij->i", e2, q) * inv
    eps = 1e-9
    hit = ok & (u >= -eps) & (v >= -eps) & (u + v <= 1 + eps)
    if not hit.any():
        return np.zeros((0, 3))
    ts = np.sort(t[hit])
    points = origin + ts[:, None] * direction
    return _dedupe_points(points, tol)


def mesh_density(mesh: TriangleMesh) -> float:
    """Unique vertices per square millimeter of surface."""
    area = surface_area(mesh)
    if area <= 0:
        raise DegenerateGeometryError("mesh has zero surface area")
    used = np.unique(mesh.faces.ravel())
    count = len(np.unique(mesh.vertices[used], axis=0))
    return count / area


def connected_face_components(mesh: TriangleMesh) -> np.ndarray:
    """Component label per face; faces sharing a vertex are connected."""
    n = len(mesh.vertices)
    if mesh.is_empty:
        return np.zeros(0, dtype=np.int64)
    f = mesh.faces
    rows = np.concatenate([f[:, 0], f[:, 1], f[:, 2]])
    cols = np.concatenate([f[:, 1], f[:, 2], f[:, 0]])
    graph = sparse.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    _, labels = csgraph.connected_components(graph, directed=False)
    return labels[f[:, 0]]


def submesh(mesh: TriangleMesh, face_mask) -> TriangleMesh:
    """Mesh made of the selected faces, with unused vertices dropped."""
    faces = mesh.faces[np.asarray(face_mask)]
    if len(faces) == 0:
        return TriangleMesh.empty()
    v, f = remove_unreferenced(mesh.vertices, faces)
    return TriangleMesh(v, f)


def concatenate(meshes) -> TriangleMesh:
    verts, faces, offset = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + offset)
        offset += len(m.vertices)
    if not verts:
        return TriangleMesh.empty()
    return TriangleMesh(np.concatenate(verts), np.concatenate(faces))
