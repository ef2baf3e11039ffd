"""Marching cubes isosurface extraction.

Table-driven 256-case extraction with linear interpolation of edge
crossings. Vertices are shared through global grid-edge keys, so the
output is watertight wherever the isosurface does not touch the volume
boundary, and triangles are wound with outward normals for the region
above the isovalue.
"""

from __future__ import annotations

import numpy as np

from .mc_tables import TRI_TABLE
from .mesh import MeshSurface
from .volume import VolumeGrid

ISO_NUDGE = 1e-7

# cube corner offsets (dx, dy, dz), Bourke numbering
_CORNERS = (
    (0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0),
    (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1),
)

# cube edge -> (corner a, corner b)
_EDGES = (
    (0, 1), (1, 2), (2, 3), (3, 0),
    (4, 5), (5, 6), (6, 7), (7, 4),
    (0, 4), (1, 5), (2, 6), (3, 7),
)

# cube edge -> (axis, lower-corner offset) for the global edge key
_EDGE_KEYS = (
    (0, (0, 0, 0)), (1, (1, 0, 0)), (0, (0, 1, 0)), (1, (0, 0, 0)),
    (0, (0, 0, 1)), (1, (1, 0, 1)), (0, (0, 1, 1)), (1, (0, 0, 1)),
    (2, (0, 0, 0)), (2, (1, 0, 0)), (2, (1, 1, 0)), (2, (0, 1, 0)),
)


def marching_cubes(volume: VolumeGrid, isovalue: float) -> MeshSurface:
    """Extract the isovalue surface as a triangle mesh in model units."""
    if not 0.0 < isovalue < 1.0:
        raise ValueError(f"isovalue must lie in (0, 1), got {isovalue}")
    nx, ny, nz = volume.dims
    if min(nx, ny, nz) < 2:
        raise ValueError(f"volume dims {volume.dims} too small to march")

    vals = volume.values.astype(np.float64)
    vals = np.where(vals == isovalue, isovalue + ISO_NUDGE, vals)

    below = vals < isovalue  # (nz, ny, nx)
    index = np.zeros((nz - 1, ny - 1, nx - 1), dtype=np.uint8)
    for bit, (dx, dy, dz) in enumerate(_CORNERS):
        corner = below[dz:dz + nz - 1, dy:dy + ny - 1, dx:dx + nx - 1]
        index |= (corner.astype(np.uint8) << bit)
    active = np.argwhere((index != 0) & (index != 255))  # rows of (k, j, i)

    vertex_ids: dict[tuple[int, int, int, int], int] = {}
    vertices: list[np.ndarray] = []
    triangles: list[tuple[int, int, int]] = []
    origin = volume.origin
    spacing = volume.spacing

    def vertex_on_edge(i: int, j: int, k: int, edge: int) -> int:
        axis, (dx, dy, dz) = _EDGE_KEYS[edge]
        key = (axis, i + dx, j + dy, k + dz)
        vid = vertex_ids.get(key)
        if vid is None:
            ax, ay, az = key[1], key[2], key[3]
            bx, by, bz = ax + (axis == 0), ay + (axis == 1), az + (axis == 2)
            va = vals[az, ay, ax]
            vb = vals[bz, by, bx]
            t = (isovalue - va) / (vb - va)
            pos = origin + spacing * (np.array([ax, ay, az], dtype=np.float64)
                                      + t * (np.array([bx, by, bz]) - np.array([ax, ay, az])))
            vid = len(vertices)
            vertices.append(pos)
            vertex_ids[key] = vid
        return vid

    for k, j, i in active:
        row = TRI_TABLE[index[k, j, i]]
        for t in range(0, len(row), 3):
            a = vertex_on_edge(i, j, k, row[t])
            b = vertex_on_edge(i, j, k, row[t + 1])
            c = vertex_on_edge(i, j, k, row[t + 2])
            if a != b and b != c and c != a:
                triangles.append((a, b, c))

    if not triangles:
        return MeshSurface(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    return MeshSurface(np.array(vertices), np.array(triangles, dtype=np.int64))
