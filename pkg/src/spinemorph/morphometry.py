"""
Vertebral body isolation, endplate segmentation, landmark extraction and
the nine body dimensions.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import (
    EmptyBodyError,
    EndplateNotFoundError,
    NoIntersectionError,
    SpineMorphError,
)
from .fileio import load_mesh
from .frames import (
    LocalFrame,
    SpineModel,
    Vertebra,
    build_frames,
    frame_from_axes,
    read_manifest,
    right_vector,
)
from .mesh import (
    GLOBAL_S,
    Plane,
    TriangleMesh,
    center_of_mass,
    connected_face_components,
    cut_mesh_by_plane,
    line_mesh_intersection,
    mesh_density,
    plane_mesh_intersection,
    submesh,
    vertex_normals,
)

log = logging.getLogger(__name__)

LANDMARK_NAMES = ("w_u1", "w_u2", "w_l1", "w_l2", "d_u1", "d_u2", "d_l1", "d_l2", "h_1", "h_2")

#: measurement name -> landmark pair
DIMENSIONS = {
    "width_upper": ("w_u1", "w_u2"),
    "width_lower": ("w_l1", "w_l2"),
    "depth_upper": ("d_u1", "d_u2"),
    "depth_lower": ("d_l1", "d_l2"),
    "height_central": ("h_1", "h_2"),
    "height_anterior": ("d_u1", "d_l1"),
    "height_posterior": ("d_u2", "d_l2"),
    "height_left": ("w_u1", "w_l1"),
    "height_right": ("w_u2", "w_l2"),
}
DIMENSION_NAMES = tuple(DIMENSIONS)

DEFAULT_MAX_ANGLE = 45.0

_TIE = 1e-9


@dataclass(frozen=True)
class VertebralBody:
    mesh: TriangleMesh
    com: np.ndarray


@dataclass(frozen=True)
class EndplatePair:
    upper: TriangleMesh
    lower: TriangleMesh


@dataclass(frozen=True)
class Landmarks:
    w_u1: np.ndarray
    w_u2: np.ndarray
    w_l1: np.ndarray
    w_l2: np.ndarray
    d_u1: np.ndarray
    d_u2: np.ndarray
    d_l1: np.ndarray
    d_l2: np.ndarray
    h_1: np.ndarray
    h_2: np.ndarray

    def as_dict(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in LANDMARK_NAMES}

    def transformed(self, matrix=None, translation=None, scale: float = 1.0) -> "Landmarks":
        out = {}
        for name, p in self.as_dict().items():
            q = p if matrix is None else np.asarray(matrix) @ p
            q = q * scale
            if translation is not None:
                q = q + translation
            out[name] = q
        return Landmarks(**out)


@dataclass(frozen=True)
class Measurements:
    """Nine vertebral body dimensions in mm."""

    width_upper: float
    width_lower: float
    depth_upper: float
    depth_lower: float
    height_central: float
    height_anterior: float
    height_posterior: float
    height_left: float
    height_right: float

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in DIMENSION_NAMES])


def extract_vertebral_body(mesh: TriangleMesh, frame: LocalFrame) -> VertebralBody:
    """
    Keep the anterior part of the vertebra.

    The mesh is clipped by the plane through ``frame.com`` with normal
    ``frame.front``; the center of mass is recomputed on what remains.

    Raises
    ------
    EmptyBodyError
      Nothing lies in front of the plane.
    """
    body = cut_mesh_by_plane(mesh, Plane(frame.com, frame.front))
    if body.is_empty:
        raise EmptyBodyError("no geometry anterior to the cutting plane")
    return VertebralBody(mesh=body, com=center_of_mass(body))


def _endplate_faces(mesh: TriangleMesh, up, max_angle: float):
    normals = vertex_normals(mesh)
    proj = normals @ up
    cos_max = np.cos(np.radians(max_angle))
    per_face = proj[mesh.faces]
    upper = (per_face >= cos_max).all(axis=1)
    lower = (per_face <= -cos_max).all(axis=1)
    return upper, lower


def _extremal_component(mesh: TriangleMesh, mask: np.ndarray, up, highest: bool) -> TriangleMesh:
    candidate = submesh(mesh, mask)
    if candidate.is_empty:
        return candidate
    labels = connected_face_components(candidate)
    best, best_score = None, None
    for lab in np.unique(labels):
        part = candidate.faces[labels == lab]
        score = candidate.vertices[np.unique(part)].mean(axis=0) @ up
        if not highest:
            score = -score
        if best_score is None or score > best_score + 1e-12:
            best, best_score = lab, score
    return submesh(candidate, labels == best)


def extract_endplates(
    body: VertebralBody, frame: LocalFrame, max_angle: float = DEFAULT_MAX_ANGLE
) -> EndplatePair:
    """
    Segment the superior and inferior endplates by vertex normal direction.

    A face joins the upper endplate when all three of its vertex normals
    lie within ``max_angle`` degrees of ``frame.up`` (lower: of
    ``-frame.up``). Of each candidate set only the connected component
    lying furthest along the axis is kept.
    """
    if not 0 < max_angle < 90:
        raise ValueError(f"max_angle must be in (0, 90) degrees, got {max_angle}")
    mesh = body.mesh
    up = frame.up
    upper_mask, lower_mask = _endplate_faces(mesh, up, max_angle)
    upper = _extremal_component(mesh, upper_mask, up, highest=True)
    lower = _extremal_component(mesh, lower_mask, up, highest=False)
    if upper.is_empty or lower.is_empty:
        which = "upper" if upper.is_empty else "lower"
        raise EndplateNotFoundError(f"no {which} endplate faces within {max_angle} degrees of the up axis")
    return EndplatePair(upper=upper, lower=lower)


def _pick(points: np.ndarray, axis, up, right, largest: bool) -> np.ndarray:
    proj = points @ axis
    if largest:
        cand = np.flatnonzero(proj >= proj.max() - _TIE)
    else:
        cand = np.flatnonzero(proj <= proj.min() + _TIE)
    if len(cand) > 1:
        # deterministic tie-break: higher along up, then along right
        keys = np.lexsort((points[cand] @ right, points[cand] @ up))
        cand = cand[keys[-1:]]
    return points[cand[0]].copy()


def _section(plate: TriangleMesh, plane: Plane, what: str) -> np.ndarray:
    pts = plane_mesh_intersection(plate, plane)
    if len(pts) == 0:
        raise NoIntersectionError(f"{what} does not intersect its plane")
    return pts


def _central_point(plate: TriangleMesh, origin, up, section: np.ndarray, upper: bool):
    hits = line_mesh_intersection(plate, origin, up)
    if len(hits):
        t = (hits - origin) @ up
        return hits[np.argmax(t) if upper else np.argmin(t)].copy(), "line"
    # rim gap: nearest section point to the central line
    rel = section - origin
    dist = np.linalg.norm(rel - np.outer(rel @ up, up), axis=1)
    return section[np.argmin(dist)].copy(), "nearest"


def compute_landmarks(
    plates: EndplatePair, body: VertebralBody, frame: LocalFrame, diagnostics: dict | None = None
) -> Landmarks:
    """
    Ten landmarks from sagittal and frontal sections of the endplates.

    Depth points are the anterior/posterior extremes of each endplate's
    sagittal section, width points the lateral extremes of its frontal
    section, and the central points are where the line through the body
    center along ``up`` meets each endplate.
    """
    up, right, front = frame.up, frame.right, frame.front
    sagittal = Plane(body.com, right)
    frontal = Plane(body.com, front)

    su = _section(plates.upper, sagittal, "upper endplate sagittal section")
    sl = _section(plates.lower, sagittal, "lower endplate sagittal section")
    fu = _section(plates.upper, frontal, "upper endplate frontal section")
    fl = _section(plates.lower, frontal, "lower endplate frontal section")

    h1, how1 = _central_point(plates.upper, body.com, up, su, upper=True)
    h2, how2 = _central_point(plates.lower, body.com, up, sl, upper=False)
    if diagnostics is not None:
        diagnostics["central_height_method"] = {"h_1": how1, "h_2": how2}

    return Landmarks(
        w_u1=_pick(fu, right, up, right, True),
        w_u2=_pick(fu, right, up, right, False),
        w_l1=_pick(fl, right, up, right, True),
        w_l2=_pick(fl, right, up, right, False),
        d_u1=_pick(su, front, up, right, True),
        d_u2=_pick(su, front, up, right, False),
        d_l1=_pick(sl, front, up, right, True),
        d_l2=_pick(sl, front, up, right, False),
        h_1=h1,
        h_2=h2,
    )


def compute_dimensions(lm: Landmarks) -> Measurements:
    values = {}
    for name, (a, b) in DIMENSIONS.items():
        values[name] = float(np.linalg.norm(getattr(lm, a) - getattr(lm, b)))
    return Measurements(**values)


@dataclass
class MeasureOptions:
    max_angle: float = DEFAULT_MAX_ANGLE
    fallback_single: bool = False


@dataclass
class VertebraResult:
    label: str
    landmarks: Landmarks | None = None
    measurements: Measurements | None = None
    diagnostics: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    error: dict | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _error_entry(exc: BaseException) -> dict:
    return {"type": type(exc).__name__, "message": str(exc)}


def measure_vertebra(
    mesh: TriangleMesh, frame: LocalFrame, options: MeasureOptions | None = None, label: str = ""
) -> VertebraResult:
    """Run body extraction through dimensions for one vertebra."""
    options = options or MeasureOptions()
    result = VertebraResult(label=label)
    diag = result.diagnostics
    warnings: list[str] = []
    diag["warnings"] = warnings
    try:
        diag["density_per_mm2"] = mesh_density(mesh)
    except SpineMorphError as exc:
        warnings.append(str(exc))
    t0 = time.perf_counter()
    body = extract_vertebral_body(mesh, frame)
    t1 = time.perf_counter()
    plates = extract_endplates(body, frame, options.max_angle)
    t2 = time.perf_counter()
    lm = compute_landmarks(plates, body, frame, diag)
    t3 = time.perf_counter()
    dims = compute_dimensions(lm)
    t4 = time.perf_counter()
    if "nearest" in diag.get("central_height_method", {}).values():
        warnings.append("central line missed an endplate; used nearest section point")
    for name, value in dims.as_dict().items():
        if not value > 0:
            warnings.append(f"{name} is not positive")
    diag["endplate_faces"] = {"upper": len(plates.upper.faces), "lower": len(plates.lower.faces)}
    result.timings.update(
        body_s=t1 - t0, endplates_s=t2 - t1, landmarks_s=t3 - t2, dimensions_s=t4 - t3
    )
    result.landmarks = lm
    result.measurements = dims
    return result


def measure_spine(spine: SpineModel, options: MeasureOptions | None = None) -> dict[str, VertebraResult]:
    """
    Measure every vertebra of a spine.

    Frames are estimated once for the whole spine; a failure in one
    vertebra is recorded in its result and does not stop the others.
    """
    options = options or MeasureOptions()
    results: dict[str, VertebraResult] = {}
    t0 = time.perf_counter()
    frames = build_frames(spine, fallback_single=options.fallback_single)
    frame_time = time.perf_counter() - t0
    for vert, frame in zip(spine.vertebrae, frames):
        try:
            res = measure_vertebra(vert.mesh, frame, options, vert.label)
        except SpineMorphError as exc:
            log.warning("%s: %s", vert.label, exc)
            res = VertebraResult(label=vert.label, error=_error_entry(exc))
        res.timings["frames_s"] = frame_time
        res.diagnostics["frame"] = {
            "com": frame.com.tolist(),
            "up": frame.up.tolist(),
            "right": frame.right.tolist(),
            "front": frame.front.tolist(),
        }
        results[vert.label] = res
    return results


def load_spine(manifest_path) -> tuple[SpineModel, dict[str, dict]]:
    """
    Load every mesh named by a manifest.

    Missing files raise ``FileNotFoundError``; meshes that exist but fail
    to parse are returned as per-label errors and left out of the model.
    """
    entries, caudal_to_cranial = read_manifest(manifest_path)
    for label, path in entries:
        if not path.is_file():
            raise FileNotFoundError(f"{manifest_path}: mesh for {label} not found: {path}")
    vertebrae, errors = [], {}
    for label, path in entries:
        try:
            vertebrae.append(Vertebra(label, load_mesh(path)))
        except SpineMorphError as exc:
            errors[label] = _error_entry(exc)
    return SpineModel(tuple(vertebrae), caudal_to_cranial), errors


def measure_manifest(manifest_path, options: MeasureOptions | None = None) -> dict[str, VertebraResult]:
    """``load_spine`` followed by ``measure_spine``, in manifest order."""
    options = options or MeasureOptions()
    entries, _ = read_manifest(manifest_path)
    spine, errors = load_spine(manifest_path)
    measured: dict[str, VertebraResult] = {}
    if len(spine):
        try:
            measured = measure_spine(spine, options)
        except SpineMorphError as exc:
            for label in spine.labels:
                measured[label] = VertebraResult(label=label, error=_error_entry(exc))
    out = {}
    for label, _ in entries:
        if label in errors:
            out[label] = VertebraResult(label=label, error=errors[label])
        else:
            out[label] = measured[label]
    return out


def single_frame(mesh: TriangleMesh, up=GLOBAL_S) -> LocalFrame:
    """Frame for an isolated vertebra with a given up axis."""
    return frame_from_axes(center_of_mass(mesh), up, right_vector(mesh))
