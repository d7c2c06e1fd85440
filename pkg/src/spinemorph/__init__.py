"""Automated vertebral body morphometry on 3D spine meshes."""
from .errors import SpineMorphError
from .fileio import load_mesh, save_mesh
from .frames import LocalFrame, SpineModel, Vertebra, build_frames, fit_com_spline, right_vector, spline_tangent
from .mesh import (
    ObbFrame,
    Plane,
    TriangleMesh,
    center_of_mass,
    cut_mesh_by_plane,
    line_mesh_intersection,
    mesh_density,
    oriented_bounding_box,
    plane_mesh_intersection,
    vertex_normals,
)
from .morphometry import (
    DIMENSION_NAMES,
    LANDMARK_NAMES,
    EndplatePair,
    Landmarks,
    MeasureOptions,
    Measurements,
    VertebralBody,
    compute_dimensions,
    compute_landmarks,
    extract_endplates,
    extract_vertebral_body,
    measure_manifest,
    measure_spine,
)

__version__ = "0.1.0"

__all__ = [
    "DIMENSION_NAMES",
    "EndplatePair",
    "LANDMARK_NAMES",
    "Landmarks",
    "LocalFrame",
    "MeasureOptions",
    "Measurements",
    "ObbFrame",
    "Plane",
    "SpineModel",
    "SpineMorphError",
    "TriangleMesh",
    "Vertebra",
    "VertebralBody",
    "build_frames",
    "center_of_mass",
    "compute_dimensions",
    "compute_landmarks",
    "cut_mesh_by_plane",
    "extract_endplates",
    "extract_vertebral_body",
    "fit_com_spline",
    "line_mesh_intersection",
    "load_mesh",
    "measure_manifest",
    "measure_spine",
    "mesh_density",
    "oriented_bounding_box",
    "plane_mesh_intersection",
    "right_vector",
    "save_mesh",
    "spline_tangent",
    "vertex_normals",
]
