"""
Parametric vertebrae and lordotic spines with closed-form ground truth.

A vertebra is an elliptic-cross-section body (optionally domed endplates
and anterior wedging) plus a detached posterior block standing in for
the neural arch. Spines place vertebrae along a lordotic chain. Every
landmark of the ground truth is a vertex of the emitted mesh.

Local vertebra coordinates follow LPS: +x left, +y posterior, +z up.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidSpecError
from .fileio import atomic_write_bytes, save_mesh
from .frames import SpineModel, Vertebra
from .mesh import TriangleMesh, concatenate, mesh_density, weld_vertices
from .morphometry import DIMENSION_NAMES, LANDMARK_NAMES, Landmarks, Measurements, compute_dimensions

WIDTH_RANGE = (34.84, 62.78)
DEPTH_RANGE = (24.20, 45.10)
HEIGHT_RANGE = (16.84, 33.16)
LORDOSIS_RANGE = (40.0, 74.0)

DEFAULT_RESOLUTION = 0.16
LUMBAR_LABELS = ("L1", "L2", "L3", "L4", "L5")

# rim band height as a fraction of the tessellation spacing
_RIM_BAND = 0.2


@dataclass(frozen=True)
class VertebraSpec:
    """
    Vertebral body shape in mm and degrees.

    ``height_central`` is measured between the endplate centers; with a
    dome the rim is ``endplate_dome`` higher on each side, and
    ``wedge_angle`` makes the anterior wall taller than the posterior one
    by ``depth * tan(wedge_angle)``.
    """

    width: float
    depth: float
    height_central: float
    endplate_dome: float = 0.0
    wedge_angle: float = 0.0
    posterior_element_size: tuple | None = None

    def validate(self) -> "VertebraSpec":
        for name in ("width", "depth", "height_central"):
            if not getattr(self, name) > 0:
                raise InvalidSpecError(f"{name} must be positive")
        if self.endplate_dome < 0:
            raise InvalidSpecError("endplate_dome must be >= 0")
        if not 0 <= self.wedge_angle < 30:
            raise InvalidSpecError("wedge_angle must be in [0, 30) degrees")
        if self.posterior_height_drop() >= self.height_central:
            raise InvalidSpecError("wedge too steep: posterior wall would vanish")
        if self.posterior_element_size is not None:
            if len(self.posterior_element_size) != 3 or min(self.posterior_element_size) <= 0:
                raise InvalidSpecError("posterior_element_size needs three positive lengths")
        return self

    def posterior_height_drop(self) -> float:
        return self.depth / 2 * math.tan(math.radians(self.wedge_angle))

    @property
    def block_size(self) -> tuple:
        if self.posterior_element_size is not None:
            return tuple(float(v) for v in self.posterior_element_size)
        return (0.7 * self.width, 0.8 * self.depth, 0.8 * self.height_central)

    def top(self, x, y):
        """Upper endplate height above the body center at (x, y)."""
        a, b = self.width / 2, self.depth / 2
        r2 = (np.asarray(x) / a) ** 2 + (np.asarray(y) / b) ** 2
        slope = math.tan(math.radians(self.wedge_angle)) / 2
        return self.height_central / 2 + self.endplate_dome * r2 - slope * np.asarray(y)

    def local_landmarks(self) -> Landmarks:
        a, b = self.width / 2, self.depth / 2
        pts = {
            # +x is the frame's right (global L) side, -y is anterior
            "w_u1": (a, 0.0, 1), "w_u2": (-a, 0.0, 1),
            "w_l1": (a, 0.0, -1), "w_l2": (-a, 0.0, -1),
            "d_u1": (0.0, -b, 1), "d_u2": (0.0, b, 1),
            "d_l1": (0.0, -b, -1), "d_l2": (0.0, b, -1),
            "h_1": (0.0, 0.0, 1), "h_2": (0.0, 0.0, -1),
        }
        return Landmarks(**{
            k: np.array([x, y, s * float(self.top(x, y))]) for k, (x, y, s) in pts.items()
        })


@dataclass(frozen=True)
class GroundTruth:
    """Analytic landmarks (world mm) and the dimensions they imply."""

    landmarks: Landmarks
    measurements: Measurements


@dataclass(frozen=True)
class SpineSpec:
    seed: int
    lordosis_angle: float
    vertebrae: tuple
    labels: tuple = LUMBAR_LABELS

    @property
    def n_vertebrae(self) -> int:
        return len(self.vertebrae)

    def validate(self) -> "SpineSpec":
        if len(self.labels) != len(self.vertebrae):
            raise InvalidSpecError("one label per vertebra required")
        if not self.vertebrae:
            raise InvalidSpecError("spine needs at least one vertebra")
        if not 0 <= self.lordosis_angle < 180:
            raise InvalidSpecError("lordosis_angle must be in [0, 180)")
        for v in self.vertebrae:
            v.validate()
        return self


@dataclass(frozen=True)
class DatasetRanges:
    width: tuple = WIDTH_RANGE
    depth: tuple = DEPTH_RANGE
    height_central: tuple = HEIGHT_RANGE
    lordosis: tuple = LORDOSIS_RANGE
    endplate_dome: tuple = (0.0, 1.5)
    wedge_angle: tuple = (0.0, 4.0)


# --- primitive shapes --------------------------------------------------------


def _orient(vertices, faces, outward) -> np.ndarray:
    """Flip faces whose normal disagrees with ``outward`` (per face vectors)."""
    tri = vertices[faces]
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    flip = np.einsum("ij,ij->i", n, outward) < 0
    faces = faces.copy()
    faces[flip] = faces[flip][:, ::-1]
    return faces


def _grid(nu: int, nv: int):
    """Triangulated (nu+1) x (nv+1) grid; returns (params (k,2), faces)."""
    u, v = np.meshgrid(np.linspace(0, 1, nu + 1), np.linspace(0, 1, nv + 1), indexing="ij")
    params = np.column_stack([u.ravel(), v.ravel()])
    idx = np.arange((nu + 1) * (nv + 1)).reshape(nu + 1, nv + 1)
    a, b = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
    c, d = idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
    faces = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    return params, faces


def box_surface(size, center=(0.0, 0.0, 0.0), spacing: float | None = None) -> TriangleMesh:
    """
    Closed axis-aligned box with outward normals.

    Each face is a grid with cells no larger than ``spacing``; without a
    spacing every face is split into two triangles.
    """
    size = np.asarray(size, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    verts, faces, offset = [], [], 0
    for axis in range(3):
        u_ax, v_ax = [k for k in range(3) if k != axis]
        nu = 1 if spacing is None else max(1, int(math.ceil(size[u_ax] / spacing - 1e-9)))
        nv = 1 if spacing is None else max(1, int(math.ceil(size[v_ax] / spacing - 1e-9)))
        params, f = _grid(nu, nv)
        for side in (-1.0, 1.0):
            p = np.zeros((len(params), 3))
            p[:, u_ax] = (params[:, 0] - 0.5) * size[u_ax]
            p[:, v_ax] = (params[:, 1] - 0.5) * size[v_ax]
            p[:, axis] = side * size[axis] / 2
            out = np.zeros(3)
            out[axis] = side
            verts.append(p + center)
            faces.append(_orient(p, f, np.tile(out, (len(f), 1))) + offset)
            offset += len(p)
    v, f = weld_vertices(np.concatenate(verts), np.concatenate(faces), 1e-9)
    return TriangleMesh(v, f)


def cube_mesh(size: float = 1.0, origin=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """
    Cube with corners ``origin`` .. ``origin + size``, two triangles per face.

    Face diagonals all join corners of even coordinate parity, so the
    triangulation has the cube's tetrahedral symmetry and every corner
    sees the same triangle area on each of its three faces.
    """
    corners = np.array([[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)], dtype=float)
    index = {tuple(c.astype(int)): n for n, c in enumerate(corners)}
    faces = []
    for axis in range(3):
        u_ax, v_ax = [k for k in range(3) if k != axis]
        for side in (0, 1):
            quad = []
            for a, b in ((0, 0), (1, 0), (1, 1), (0, 1)):
                c = [0, 0, 0]
                c[axis], c[u_ax], c[v_ax] = side, a, b
                quad.append(index[tuple(c)])
            even = [q for q in quad if sum(corners[q]) % 2 == 0]
            odd = [q for q in quad if q not in even]
            faces.append([even[0], odd[0], even[1]])
            faces.append([even[0], even[1], odd[1]])
    faces = np.array(faces)
    verts = corners - 0.5
    tri = verts[faces]
    outward = tri.mean(axis=1)
    faces = _orient(verts, faces, outward)
    return TriangleMesh(corners * size + np.asarray(origin, dtype=float), faces)


def icosphere(radius: float = 1.0, subdivisions: int = 3, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Geodesic sphere by repeated midpoint subdivision of an icosahedron."""
    t = (1 + 5 ** 0.5) / 2
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache: dict = {}
        new_faces = []

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    v = np.array(verts)
    f = _orient(v, np.array(faces), v[np.array(faces)].mean(axis=1))
    return TriangleMesh(v * radius + np.asarray(center, dtype=float), f)


# --- vertebral body -------------------------------------------------------------


def _stitch(inner: np.ndarray, outer: np.ndarray) -> list:
    """Triangulate the band between two closed rings listed by angle."""
    ni, no = len(inner), len(outer)
    tris = []
    i = j = 0
    while i < ni or j < no:
        next_in = (i + 1) / ni
        next_out = (j + 1) / no
        if j < no and (i >= ni or next_out <= next_in):
            tris.append((inner[i % ni], outer[j % no], outer[(j + 1) % no]))
            j += 1
        else:
            tris.append((inner[i % ni], outer[j % no], inner[(i + 1) % ni]))
            i += 1
    return tris


def _ellipse_perimeter(a: float, b: float) -> float:
    h = ((a - b) / (a + b)) ** 2
    return math.pi * (a + b) * (1 + 3 * h / (10 + math.sqrt(4 - 3 * h)))


def _round4(x: float) -> int:
    return max(4, 4 * int(round(x / 4)))


def _elliptic_cap(a: float, b: float, spacing: float):
    """
    Concentric-ring triangulation of an ellipse.

    Returns 2D points, faces (counter-clockwise seen from +z) and the
    indices of the outer ring in angular order. Ring point counts are
    multiples of four so both symmetry axes pass through ring vertices.
    """
    n_rim = _round4(_ellipse_perimeter(a, b) / spacing)
    n_rings = max(1, int(round(math.sqrt(a * b) / spacing)))
    pts = [np.zeros(2)]
    rings = [np.array([0])]
    for j in range(1, n_rings + 1):
        scale = j / n_rings
        count = n_rim if j == n_rings else _round4(n_rim * scale)
        ang = 2 * math.pi * np.arange(count) / count
        start = len(pts)
        ring = np.column_stack([a * scale * np.cos(ang), b * scale * np.sin(ang)])
        # exact zeros on the symmetry axes
        ring[np.isclose(np.cos(ang), 0, atol=1e-12), 0] = 0.0
        ring[np.isclose(np.sin(ang), 0, atol=1e-12), 1] = 0.0
        pts.extend(ring)
        rings.append(np.arange(start, start + count))
    faces = []
    first = rings[1]
    for k in range(len(first)):
        faces.append((0, first[k], first[(k + 1) % len(first)]))
    for inner, outer in zip(rings[1:-1], rings[2:]):
        faces.extend(_stitch(inner, outer))
    return np.array(pts), np.array(faces, dtype=np.int64), rings[-1]


def _rect_cap(a: float, b: float, spacing: float):
    """Grid triangulation of the rectangle [-a, a] x [-b, b]."""
    nx = max(2, 2 * int(math.ceil(a / spacing - 1e-9)))
    ny = max(2, 2 * int(math.ceil(b / spacing - 1e-9)))
    params, faces = _grid(nx, ny)
    pts = np.column_stack([(params[:, 0] - 0.5) * 2 * a, (params[:, 1] - 0.5) * 2 * b])
    idx = np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)
    ring = np.concatenate([idx[:, 0], idx[-1, 1:], idx[-2::-1, -1], idx[0, -2:0:-1]])
    return pts, faces, ring


def _prism_body(cap_pts, cap_faces, ring, top, bottom, spacing: float) -> TriangleMesh:
    """
    Closed body between ``bottom(x, y)`` and ``top(x, y)`` over a planar cap.

    The side wall has thin bands next to each rim so that rim vertex
    normals follow the endplates rather than the wall.
    """
    x, y = cap_pts[:, 0], cap_pts[:, 1]
    zt, zb = top(x, y), bottom(x, y)
    n_cap = len(cap_pts)
    verts = [np.column_stack([x, y, zt]), np.column_stack([x, y, zb])]
    up = np.tile([0.0, 0.0, 1.0], (len(cap_faces), 1))
    faces = [
        _orient(verts[0], cap_faces, up),
        _orient(verts[1], cap_faces, -up) + n_cap,
    ]
    # wall: columns under the rim vertices
    rx, ry = x[ring], y[ring]
    rt, rb = zt[ring], zb[ring]
    height = rt - rb
    band = min(_RIM_BAND * spacing, 0.1 * height.min())
    inner_levels = max(1, int(round((height.mean() - 2 * band) / spacing)))
    levels = []  # fractions per column, shape (L, ncol)
    frac_band = band / height
    levels.append(np.zeros_like(height))
    for k in range(inner_levels + 1):
        levels.append(frac_band + (1 - 2 * frac_band) * k / inner_levels)
    levels.append(np.ones_like(height))
    levels = np.array(levels)
    ncol = len(ring)
    index = np.empty(levels.shape, dtype=np.int64)
    index[0] = ring + n_cap  # bottom rim
    index[-1] = ring  # top rim
    wall_pts = []
    next_id = 2 * n_cap
    for k in range(1, len(levels) - 1):
        z = rb + levels[k] * height
        wall_pts.append(np.column_stack([rx, ry, z]))
        index[k] = np.arange(next_id, next_id + ncol)
        next_id += ncol
    verts.extend(wall_pts)
    wall = []
    for k in range(len(levels) - 1):
        lo, hi = index[k], index[k + 1]
        for c in range(ncol):
            d = (c + 1) % ncol
            wall.append((lo[c], lo[d], hi[d]))
            wall.append((lo[c], hi[d], hi[c]))
    wall = np.array(wall, dtype=np.int64)
    all_v = np.concatenate(verts)
    radial = all_v[wall].mean(axis=1) * np.array([1.0, 1.0, 0.0])
    faces.append(_orient(all_v, wall, radial))
    return TriangleMesh(all_v, np.concatenate(faces))


def _body_mesh(spec: VertebraSpec, spacing: float, shape: str = "ellipse") -> TriangleMesh:
    a, b = spec.width / 2, spec.depth / 2
    if shape == "ellipse":
        pts, faces, ring = _elliptic_cap(a, b, spacing)
    else:
        pts, faces, ring = _rect_cap(a, b, spacing)
    return _prism_body(pts, faces, ring, spec.top, lambda x, y: -spec.top(x, y), spacing)


def _assemble(spec: VertebraSpec, spacing: float, com_offset: float | None, shape: str):
    body = _body_mesh(spec, spacing, shape)
    size = spec.block_size
    block = box_surface(size, spacing=spacing)
    b = spec.depth / 2
    margin = 0.2 * spec.depth
    target = b + margin if com_offset is None else float(com_offset)
    if target < b + 1e-3:
        raise InvalidSpecError("center of mass offset must lie behind the body")
    n_body, n_block = len(body.vertices), len(block.vertices)
    total = n_body + n_block
    block_y = (target * total - body.vertices[:, 1].sum() - block.vertices[:, 1].sum()) / n_block
    if block_y - size[1] / 2 <= target + 0.05 * spec.depth:
        raise InvalidSpecError(
            "posterior element too small to pull the center of mass behind the body"
        )
    block = block.transformed(translation=(0.0, block_y, 0.0))
    return concatenate([body, block]), len(body.faces)


def spacing_for_resolution(resolution: float) -> float:
    if not 0.05 <= resolution <= 20:
        raise InvalidSpecError("resolution must be within [0.05, 20] vertices per mm^2")
    return 1.0 / math.sqrt(resolution)


@dataclass(frozen=True)
class SyntheticVertebra:
    mesh: TriangleMesh
    truth: GroundTruth
    n_body_faces: int
    spacing: float


def generate_vertebra(
    spec: VertebraSpec,
    resolution: float = DEFAULT_RESOLUTION,
    com_offset: float | None = None,
    shape: str = "ellipse",
) -> SyntheticVertebra:
    """
    Mesh and ground truth for one upright vertebra centered at the origin.

    Parameters
    ----------
    spec : VertebraSpec
    resolution : float
      Target vertex density in vertices per mm^2.
    com_offset : float, optional
      Posterior distance of the vertex-mean center of mass from the body
      center; the posterior block is placed to realize it. Defaults to
      ``0.7 * depth``.
    shape : {'ellipse', 'box'}
      Body cross-section.

    The first ``n_body_faces`` faces of the mesh make up the body.
    """
    spec.validate()
    if shape not in ("ellipse", "box"):
        raise InvalidSpecError(f"unknown body shape {shape!r}")
    spacing = spacing_for_resolution(resolution)
    mesh, n_body = _assemble(spec, spacing, com_offset, shape)
    # one correction step toward the requested density
    spacing *= math.sqrt(mesh_density(mesh) / resolution)
    mesh, n_body = _assemble(spec, spacing, com_offset, shape)
    lm = spec.local_landmarks()
    return SyntheticVertebra(mesh, GroundTruth(lm, compute_dimensions(lm)), n_body, spacing)


def box_vertebra(width: float, depth: float, height: float, resolution: float = 1.0, **kw) -> SyntheticVertebra:
    """Rectangular flat-endplate body with a posterior block."""
    return generate_vertebra(VertebraSpec(width, depth, height), resolution, shape="box", **kw)


# --- spines ------------------------------------------------------------------------


def rotation_matrix(axis, angle_deg: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    th = math.radians(angle_deg)
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + math.sin(th) * k + (1 - math.cos(th)) * (k @ k)


def _to_float32(mesh: TriangleMesh) -> TriangleMesh:
    return TriangleMesh(mesh.vertices.astype(np.float32).astype(np.float64), mesh.faces)


@dataclass(frozen=True)
class SyntheticSpine:
    spec: SpineSpec
    model: SpineModel
    truth: dict
    placements: dict = field(repr=False)
    resolution: float = DEFAULT_RESOLUTION


def generate_spine(spec: SpineSpec, resolution: float = DEFAULT_RESOLUTION) -> SyntheticSpine:
    """
    Place vertebrae along a lordotic chain.

    Listed labels run cranial to caudal. Each intervertebral joint bends
    the chain by ``lordosis / (n - 1)`` about the lateral axis, so the
    first and last vertebrae differ in orientation by exactly the
    lordosis angle. Disc gaps are 10% of the mean central height.
    Coordinates are rounded to float32 so binary STL files hold them
    exactly.
    """
    spec.validate()
    n = spec.n_vertebrae
    gap = 0.1 * np.mean([v.height_central for v in spec.vertebrae])
    # common center of mass offset keeps the CoM chain parallel to the bodies
    com_offset = max(0.7 * v.depth for v in spec.vertebrae)
    step = spec.lordosis_angle / (n - 1) if n > 1 else 0.0
    # positive tilt about +x leans the up axis anteriorly; the caudal end leans forward
    angles = [-spec.lordosis_angle / 2 + step * i for i in range(n)]
    rots = [rotation_matrix([1.0, 0.0, 0.0], ang) for ang in angles]

    half_top = [
        v.height_central / 2 + v.endplate_dome + v.posterior_height_drop() / 2 for v in spec.vertebrae
    ]
    centers = [None] * n
    centers[n - 1] = np.zeros(3)
    z = np.array([0.0, 0.0, 1.0])
    for i in range(n - 2, -1, -1):
        below = i + 1
        joint = centers[below] + rots[below] @ (z * (half_top[below] + gap / 2))
        centers[i] = joint + rots[i] @ (z * (gap / 2 + half_top[i]))
    shift = np.mean(centers, axis=0)
    centers = [c - shift for c in centers]

    vertebrae, truth, placements = [], {}, {}
    for label, vspec, rot, center in zip(spec.labels, spec.vertebrae, rots, centers):
        syn = generate_vertebra(vspec, resolution, com_offset=com_offset)
        mesh = _to_float32(syn.mesh.transformed(rot, center))
        lm = syn.truth.landmarks.transformed(rot, center)
        vertebrae.append(Vertebra(label, mesh))
        truth[label] = GroundTruth(lm, compute_dimensions(lm))
        placements[label] = (rot, center)
    model = SpineModel(tuple(vertebrae), caudal_to_cranial=False)
    return SyntheticSpine(spec, model, truth, placements, resolution)


def sample_spine_spec(seed: int, index: int = 0, ranges: DatasetRanges = DatasetRanges(),
                      labels=LUMBAR_LABELS) -> SpineSpec:
    """Draw lordosis and per-vertebra dimensions uniformly from ``ranges``."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))
    lordosis = float(rng.uniform(*ranges.lordosis))
    verts = []
    for _ in labels:
        verts.append(VertebraSpec(
            width=float(rng.uniform(*ranges.width)),
            depth=float(rng.uniform(*ranges.depth)),
            height_central=float(rng.uniform(*ranges.height_central)),
            endplate_dome=float(rng.uniform(*ranges.endplate_dome)),
            wedge_angle=float(rng.uniform(*ranges.wedge_angle)),
        ))
    return SpineSpec(seed=int(seed), lordosis_angle=lordosis, vertebrae=tuple(verts), labels=tuple(labels))


# --- files ---------------------------------------------------------------------------


def _json_bytes(doc) -> bytes:
    return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode("utf-8")


def truth_to_dict(truth: GroundTruth) -> dict:
    return {
        "landmarks": {k: [float(c) for c in v] for k, v in truth.landmarks.as_dict().items()},
        "dimensions_mm": truth.measurements.as_dict(),
    }


def write_spine(spine: SyntheticSpine, directory) -> Path:
    """Write ``L#.stl`` meshes, ``manifest.json`` and ``ground_truth.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for vert in spine.model.vertebrae:
        name = f"{vert.label}.stl"
        save_mesh(vert.mesh, directory / name)
        entries.append({"label": vert.label, "mesh": name})
    manifest = {"caudal_to_cranial": spine.model.caudal_to_cranial, "vertebrae": entries}
    atomic_write_bytes(directory / "manifest.json", _json_bytes(manifest))
    truth = {
        "spec": {
            "seed": spine.spec.seed,
            "lordosis_angle": spine.spec.lordosis_angle,
            "resolution": spine.resolution,
            "vertebrae": {lab: asdict(v) for lab, v in zip(spine.spec.labels, spine.spec.vertebrae)},
        },
        "truth": {lab: truth_to_dict(t) for lab, t in spine.truth.items()},
    }
    atomic_write_bytes(directory / "ground_truth.json", _json_bytes(truth))
    return directory / "manifest.json"


GROUND_TRUTH_COLUMNS = (
    ["spine_id", "label"]
    + list(DIMENSION_NAMES)
    + [f"{name}_{axis}" for name in LANDMARK_NAMES for axis in "xyz"]
)


def ground_truth_rows(spine_id: str, spine: SyntheticSpine) -> list[dict]:
    rows = []
    for label, t in spine.truth.items():
        row = {"spine_id": spine_id, "label": label}
        row.update({k: repr(float(v)) for k, v in t.measurements.as_dict().items()})
        for name, p in t.landmarks.as_dict().items():
            for axis, c in zip("xyz", p):
                row[f"{name}_{axis}"] = repr(float(c))
        rows.append(row)
    return rows


def generate_dataset(
    count: int = 50,
    seed: int = 7,
    out_dir=".",
    resolution: float = DEFAULT_RESOLUTION,
    ranges: DatasetRanges = DatasetRanges(),
) -> dict:
    """
    Write ``count`` synthetic spines under ``out_dir``.

    Layout: ``spine_###/manifest.json`` with ``L#.stl`` meshes, a
    dataset-level ``ground_truth.csv`` and ``dataset.json``. Spine ``i``
    draws its parameters from a generator seeded by ``(seed, i)``.
    """
    if count < 0:
        raise InvalidSpecError("count must be >= 0")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spines = []
    rows = []
    for i in range(count):
        spine_id = f"spine_{i:03d}"
        spec = sample_spine_spec(seed, i, ranges)
        syn = generate_spine(spec, resolution)
        write_spine(syn, out / spine_id)
        rows.extend(ground_truth_rows(spine_id, syn))
        spines.append({
            "spine_id": spine_id,
            "manifest": f"{spine_id}/manifest.json",
            "lordosis_angle": spec.lordosis_angle,
        })
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=GROUND_TRUTH_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    atomic_write_bytes(out / "ground_truth.csv", buf.getvalue().encode("utf-8"))
    manifest = {
        "count": count,
        "seed": seed,
        "resolution": resolution,
        "ranges": asdict(ranges),
        "spines": spines,
    }
    atomic_write_bytes(out / "dataset.json", _json_bytes(manifest))
    return manifest
