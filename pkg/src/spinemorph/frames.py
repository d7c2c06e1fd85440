"""
Local anatomical frames for each vertebra of a spine.

The up axis follows the tangent of a cubic spline through the vertebral
centers of mass, the lateral axis comes from the mesh's PCA bounding box
and the anterior axis completes the frame.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (
    CoincidentPointsError,
    DegenerateFrameError,
    ManifestError,
    TooFewPointsError,
)
from .mesh import GLOBAL_A, GLOBAL_L, GLOBAL_S, TriangleMesh, center_of_mass, oriented_bounding_box

_LABEL_RE = re.compile(r"^([CTLS])(\d+)$", re.IGNORECASE)
_REGION_OFFSET = {"C": 0, "T": 7, "L": 19, "S": 24}


def anatomical_index(label: str) -> int | None:
    """Cranial-to-caudal position of a label such as ``T12`` or ``L3``."""
    m = _LABEL_RE.match(label.strip())
    if not m:
        return None
    return _REGION_OFFSET[m.group(1).upper()] + int(m.group(2))


@dataclass(frozen=True)
class Vertebra:
    label: str
    mesh: TriangleMesh


@dataclass(frozen=True)
class SpineModel:
    """
    Ordered, labeled vertebra meshes in one LPS coordinate system.

    ``caudal_to_cranial`` records the storage order (True: L5 before L4).
    """

    vertebrae: tuple
    caudal_to_cranial: bool = True

    def __post_init__(self):
        verts = tuple(
            v if isinstance(v, Vertebra) else Vertebra(str(v[0]), v[1]) for v in self.vertebrae
        )
        labels = [v.label for v in verts]
        if len(set(labels)) != len(labels):
            raise ManifestError(f"duplicate vertebra labels in {labels}")
        idx = [anatomical_index(lab) for lab in labels]
        if len(idx) > 1 and all(i is not None for i in idx):
            steps = np.diff(idx)
            ok = (steps < 0).all() if self.caudal_to_cranial else (steps > 0).all()
            if not ok:
                order = "caudal-to-cranial" if self.caudal_to_cranial else "cranial-to-caudal"
                raise ManifestError(f"labels {labels} are not in {order} order")
        object.__setattr__(self, "vertebrae", verts)

    @property
    def labels(self) -> list[str]:
        return [v.label for v in self.vertebrae]

    def __len__(self):
        return len(self.vertebrae)

    def transformed(self, matrix=None, translation=None, scale: float = 1.0) -> "SpineModel":
        return SpineModel(
            tuple(Vertebra(v.label, v.mesh.transformed(matrix, translation, scale)) for v in self.vertebrae),
            self.caudal_to_cranial,
        )


def read_manifest(path) -> tuple[list[tuple[str, Path]], bool]:
    """
    Parse a spine manifest.

    Accepts either a bare JSON array of ``{"label", "mesh"}`` entries or an
    object with a ``"vertebrae"`` array and an optional
    ``"caudal_to_cranial"`` flag (default true). Mesh paths are resolved
    relative to the manifest.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    if isinstance(doc, list):
        entries, caudal_to_cranial = doc, True
    elif isinstance(doc, dict) and isinstance(doc.get("vertebrae"), list):
        entries = doc["vertebrae"]
        caudal_to_cranial = bool(doc.get("caudal_to_cranial", True))
    else:
        raise ManifestError(f"{path}: expected a list of vertebrae or an object with 'vertebrae'")
    out = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict) or "label" not in entry or "mesh" not in entry:
            raise ManifestError(f"{path}: entry {i} needs 'label' and 'mesh'")
        out.append((str(entry["label"]), path.parent / entry["mesh"]))
    return out, caudal_to_cranial


@dataclass(frozen=True)
class LocalFrame:
    com: np.ndarray
    up: np.ndarray
    right: np.ndarray
    front: np.ndarray

    def matrix(self) -> np.ndarray:
        """Rows are right, front, up."""
        return np.vstack([self.right, self.front, self.up])


class SplineCurve:
    """
    Natural cubic spline through 3D points, parameterized by normalized
    cumulative chord length.
    """

    def __init__(self, points):
        points = np.asarray(points, dtype=np.float64).reshape((-1, 3))
        if len(points) < 3:
            raise TooFewPointsError(f"need at least 3 points for the spline, got {len(points)}")
        chords = np.linalg.norm(np.diff(points, axis=0), axis=1)
        if np.any(chords <= 1e-3):
            i = int(np.argmin(chords))
            raise CoincidentPointsError(f"points {i} and {i + 1} coincide ({chords[i]:.3g} mm apart)")
        params = np.concatenate([[0.0], np.cumsum(chords)])
        params /= params[-1]
        self.points = points
        self.params = params
        self._spline = CubicSpline(params, points, axis=0, bc_type="natural")

    def __call__(self, t, nu: int = 0) -> np.ndarray:
        return self._spline(t, nu)

    def derivative(self, t) -> np.ndarray:
        return self._spline(t, 1)


def fit_com_spline(coms) -> SplineCurve:
    return SplineCurve(coms)


def spline_tangent(spline: SplineCurve, index: int) -> np.ndarray:
    """Unit tangent at a control point, oriented toward superior."""
    d = spline.derivative(spline.params[index])
    d = d / np.linalg.norm(d)
    return -d if d @ GLOBAL_S < 0 else d


def right_vector(mesh: TriangleMesh) -> np.ndarray:
    """
    Signed bounding-box axis most aligned with the global +L axis.

    Candidates are checked in descending-variance order, positive before
    negative, so equal scores resolve to the earliest candidate.
    """
    obb = oriented_bounding_box(mesh)
    best, best_dot = None, -np.inf
    for axis in obb.axes:
        for cand in (axis, -axis):
            d = cand @ GLOBAL_L
            if d > best_dot + 1e-12:
                best, best_dot = cand, d
    return best.copy()


def frame_from_axes(com, up, raw_right) -> LocalFrame:
    """
    Orthonormal frame that keeps ``up`` and makes ``front`` and ``right``
    perpendicular to it.
    """
    up = np.asarray(up, dtype=np.float64)
    up = up / np.linalg.norm(up)
    front = np.cross(up, raw_right)
    length = np.linalg.norm(front)
    if length < 1e-3:
        raise DegenerateFrameError("up axis is nearly parallel to the lateral axis")
    front /= length
    if front @ GLOBAL_A < 0:
        front = -front
    right = np.cross(up, front)
    right /= np.linalg.norm(right)
    return LocalFrame(com=np.asarray(com, dtype=np.float64), up=up, right=right, front=front)


def build_frames(spine: SpineModel, fallback_single: bool = False) -> list[LocalFrame]:
    """
    One local frame per vertebra.

    Parameters
    ----------
    spine : SpineModel
    fallback_single : bool
      With fewer than 3 vertebrae, use the global superior axis as ``up``
      instead of raising.

    Raises
    ------
    TooFewPointsError
    DegenerateFrameError
    """
    coms = [center_of_mass(v.mesh) for v in spine.vertebrae]
    if len(coms) < 3:
        if not fallback_single:
            raise TooFewPointsError(
                f"need at least 3 vertebrae to fit the spline, got {len(coms)}"
            )
        ups = [GLOBAL_S.copy() for _ in coms]
    else:
        spline = fit_com_spline(coms)
        ups = [spline_tangent(spline, i) for i in range(len(coms))]
    return [
        frame_from_axes(com, up, right_vector(v.mesh))
        for com, up, v in zip(coms, ups, spine.vertebrae)
    ]
