"""End-to-end glue: mesh -> contour slices -> translation -> volume -> mesh.

The volume keeps exactly the assembled planes (plane k is bit-identical to
slice k); region extraction pads a one-voxel zero shell around the grid so
surfaces that touch the boundary still close into watertight meshes, then
maps vertices back through the stored normalization transform.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from . import dataset as ds
from .geometry import (
    MeshSurface,
    Transform,
    VolumeGrid,
    assemble_volume,
    marching_cubes,
    mesh_frame,
    normalize_mesh,
    rasterize_contours,
    slice_mesh,
)
from .networks import GeneratorNet
from .tensor import Tensor, no_grad

TRANSLATE_BATCH = 16


def contour_images(mesh: MeshSurface, axis: str = "z", resolution: int = 64,
                   mode: str = "silhouette"):
    """Normalize, slice, rasterize; returns (images, origin, spacing, transform)."""
    normalized, transform = normalize_mesh(mesh)
    contours = slice_mesh(normalized, axis, resolution)
    frame = mesh_frame(normalized, axis)
    images = [rasterize_contours(c, resolution, mode, frame) for c in contours]

    from .geometry.slicing import AXES, plane_axes
    a = AXES[axis]
    u_idx, v_idx = plane_axes(axis)
    lo, hi = normalized.bounds()
    span = hi[a] - lo[a]
    px = frame[2] / resolution
    sz = span / resolution
    origin = np.zeros(3)
    spacing = np.zeros(3)
    origin[u_idx] = frame[0] + 0.5 * px
    origin[v_idx] = frame[1] + 0.5 * px
    origin[a] = lo[a] + 0.5 * sz
    spacing[u_idx] = px
    spacing[v_idx] = px
    spacing[a] = sz
    return images, origin, spacing, transform


def translate_images(gen: GeneratorNet, images, progress=None) -> list[np.ndarray]:
    """Run contour silhouettes through the generator, in eval mode, batched."""
    gen.eval()
    out: list[np.ndarray] = []
    with no_grad():
        for start in range(0, len(images), TRANSLATE_BATCH):
            chunk = np.stack(images[start:start + TRANSLATE_BATCH])[:, None]
            pred = gen(Tensor(ds.to_signed(chunk)))
            out.extend(ds.to_unit(pred.data[:, 0]))
            if progress is not None:
                progress(min(start + TRANSLATE_BATCH, len(images)), len(images))
    return out


def estimate_volume(mesh: MeshSurface, gen: Optional[GeneratorNet] = None,
                    axis: str = "z", resolution: int = 64,
                    progress=None) -> tuple[VolumeGrid, Transform]:
    """Full forward pipeline. Without a generator the silhouettes themselves
    are stacked (identity translation), which is what the geometry round-trip
    uses."""
    if gen is not None and resolution != gen.resolution:
        raise ValueError(
            f"generator expects resolution {gen.resolution}, got {resolution}"
        )
    images, origin, spacing, transform = contour_images(mesh, axis, resolution)
    if gen is not None:
        images = translate_images(gen, images, progress=progress)
    elif progress is not None:
        progress(len(images), len(images))
    return assemble_volume(images, origin=origin, spacing=spacing), transform


def extract_region(volume: VolumeGrid, threshold: float,
                   transform: Optional[Transform] = None) -> MeshSurface:
    """Threshold surface as a mesh, closed at the volume boundary.

    Pads a zero shell one voxel wide so the marching cubes surface is
    watertight even where the region touches the grid edge; vertices are
    mapped back to original model units when a transform is given.
    """
    padded = np.pad(volume.values, 1)
    shell = VolumeGrid(padded, origin=volume.origin - volume.spacing,
                       spacing=volume.spacing)
    mesh = marching_cubes(shell, threshold)
    if transform is not None and len(mesh.vertices):
        mesh = MeshSurface(transform.apply(mesh.vertices), mesh.triangles)
    return mesh


def voxels_above(volume: VolumeGrid, threshold: float) -> int:
    return int(np.count_nonzero(volume.values > threshold))


def to_model_units(volume: VolumeGrid, transform: Transform) -> VolumeGrid:
    """Fold the normalization transform into origin/spacing (exact for a
    uniform scale), so the volume and everything extracted from it live in
    the uploaded model's units."""
    return VolumeGrid(volume.values,
                      origin=transform.apply(volume.origin),
                      spacing=volume.spacing * transform.scale)
