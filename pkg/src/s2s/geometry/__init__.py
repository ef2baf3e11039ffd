"""Mesh parsing, slicing, rasterization, volume assembly, isosurfacing."""

from .marching import marching_cubes
from .mesh import (
    MeshSurface,
    Transform,
    export_mesh,
    normalize_mesh,
    parse_mesh,
)
from .slicing import (
    ContourSet,
    OpenContourWarning,
    mesh_frame,
    plane_axes,
    rasterize_contours,
    slice_at_plane,
    slice_mesh,
)
from .volume import VolumeGrid, assemble_volume, load_volume, save_volume

__all__ = [
    "ContourSet",
    "MeshSurface",
    "OpenContourWarning",
    "Transform",
    "VolumeGrid",
    "assemble_volume",
    "export_mesh",
    "load_volume",
    "marching_cubes",
    "mesh_frame",
    "normalize_mesh",
    "parse_mesh",
    "plane_axes",
    "rasterize_contours",
    "save_volume",
    "slice_at_plane",
    "slice_mesh",
]
