"""
Mesh primitives
===============

Centers of mass, vertex normals, bounding boxes, clipping and sections on
a few simple shapes.
"""

import numpy as np

from spinemorph.mesh import (
    Plane,
    center_of_mass,
    cut_mesh_by_plane,
    line_mesh_intersection,
    mesh_density,
    oriented_bounding_box,
    plane_mesh_intersection,
    surface_area,
    vertex_normals,
)
from spinemorph.synthetic import box_surface, cube_mesh, icosphere, rotation_matrix

# %%
# A unit cube: eight corners, twelve triangles. Its center of mass is the
# mean of the corners and every corner normal points diagonally outward.
cube = cube_mesh()
print("cube:", cube)
print("center of mass:", center_of_mass(cube))
print("corner normals:\n", np.round(vertex_normals(cube), 3))
print("density (vertices per mm^2):", mesh_density(cube))

# %%
# The bounding box of a 10 x 4 x 2 box yawed by 30 degrees recovers the
# rotated axes and the half extents.
yaw = rotation_matrix([0, 0, 1], 30)
box = box_surface((10.0, 4.0, 2.0), spacing=0.25).transformed(yaw)
obb = oriented_bounding_box(box)
print("axes:\n", np.round(obb.axes, 4))
print("half extents:", np.round(obb.half_extents, 6))

# %%
# Clip a sphere with a plane through its center. The two halves add up to
# the whole surface, and the open rim is the plane section.
sphere = icosphere(radius=10.0, subdivisions=4)
plane = Plane([0, 0, 0], [0, 0, 1])
upper = cut_mesh_by_plane(sphere, plane)
lower = cut_mesh_by_plane(sphere, plane.flipped())
print("areas:", surface_area(upper), "+", surface_area(lower), "=", surface_area(sphere))

section = plane_mesh_intersection(sphere, plane)
radii = np.linalg.norm(section, axis=1)
print(f"{len(section)} section points, radius {radii.min():.3f}..{radii.max():.3f}")

# %%
# A line through the sphere center enters and leaves once each.
print("line hits:\n", line_mesh_intersection(sphere, [0, 0, 0], [0, 0, 1]))
