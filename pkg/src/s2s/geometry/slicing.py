"""Plane slicing of triangle meshes and contour rasterization.

Each slicing plane intersects triangles into segments whose endpoints are
keyed by the mesh edge that produced them, so chaining into closed
polylines is exact (no tolerance matching). Open chains (non-watertight
input) are kept, flagged, and rasterized as zero-area.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .mesh import MeshSurface

AXES = {"x": 0, "y": 1, "z": 2}
PLANE_SHIFT = 1e-9  # of the bbox extent, applied to exactly-coplanar vertices


class OpenContourWarning(UserWarning):
    """A slice produced a contour chain that does not close."""


@dataclass
class ContourSet:
    """All contours of one slicing plane, in 2D in-plane coordinates."""

    plane_coord: float
    polylines: list[np.ndarray] = field(default_factory=list)
    closed: list[bool] = field(default_factory=list)

    @property
    def is_empty(self) -> bool:
        return not self.polylines


def plane_axes(axis: str) -> tuple[int, int]:
    """The two in-plane axis indices (ascending), e.g. z -> (0, 1) = (x, y)."""
    a = AXES[axis]
    return tuple(i for i in range(3) if i != a)  # type: ignore[return-value]


def slice_at_plane(mesh: MeshSurface, axis: str, coord: float) -> ContourSet:
    """Intersect the mesh with one axis-aligned plane."""
    a = AXES[axis]
    u_idx, v_idx = plane_axes(axis)
    verts = mesh.vertices
    d = verts[:, a] - coord
    if len(d):
        extent = float(verts[:, a].max() - verts[:, a].min()) or 1.0
        d = np.where(d == 0.0, PLANE_SHIFT * extent, d)

    tri = mesh.triangles
    td = d[tri]  # (T, 3) signed distances
    crossing = ~((td > 0).all(axis=1) | (td < 0).all(axis=1))
    out = ContourSet(plane_coord=coord)
    if not crossing.any():
        return out

    # one intersection point per undirected mesh edge, computed once
    point_of_edge: dict[tuple[int, int], np.ndarray] = {}

    def edge_point(i: int, j: int) -> tuple[int, int]:
        key = (i, j) if i < j else (j, i)
        if key not in point_of_edge:
            pi, pj = verts[key[0]], verts[key[1]]
            t = d[key[0]] / (d[key[0]] - d[key[1]])
            p3 = pi + t * (pj - pi)
            point_of_edge[key] = np.array([p3[u_idx], p3[v_idx]])
        return key

    segments: list[tuple[tuple[int, int], tuple[int, int]]] = []
    for t_idx in np.nonzero(crossing)[0]:
        i0, i1, i2 = tri[t_idx]
        keys = []
        for i, j in ((i0, i1), (i1, i2), (i2, i0)):
            if (d[i] > 0) != (d[j] > 0):
                keys.append(edge_point(i, j))
        if len(keys) == 2:  # after the coplanar shift this is the only case
            segments.append((keys[0], keys[1]))

    # chain segments by shared edge keys
    adjacency: dict[tuple[int, int], list[int]] = {}
    for s_idx, (ka, kb) in enumerate(segments):
        adjacency.setdefault(ka, []).append(s_idx)
        adjacency.setdefault(kb, []).append(s_idx)

    used = [False] * len(segments)
    for start in range(len(segments)):
        if used[start]:
            continue
        used[start] = True
        chain = list(segments[start])

        def extend(key):
            while True:
                nxt = next((s for s in adjacency[key] if not used[s]), None)
                if nxt is None:
                    return key
                used[nxt] = True
                ka, kb = segments[nxt]
                key = kb if ka == key else ka
                chain.append(key)

        tail_key = extend(chain[-1])
        chain.reverse()
        extend(chain[-1])
        chain.reverse()

        is_closed = len(chain) > 2 and chain[0] == chain[-1]
        if is_closed:
            chain = chain[:-1]  # closure is implicit: first point != last
        if len(chain) < 3:
            continue
        out.polylines.append(np.array([point_of_edge[k] for k in chain]))
        out.closed.append(is_closed)

    open_count = sum(1 for c in out.closed if not c)
    if open_count:
        warnings.warn(
            f"plane {axis}={coord:.6g}: {open_count} contour chain(s) did not close",
            OpenContourWarning,
            stacklevel=2,
        )
    return out


def slice_mesh(mesh: MeshSurface, axis: str = "z",
               n_slices: int = 64) -> list[ContourSet]:
    """Slice at the n voxel-center coordinates across the mesh's bbox."""
    if mesh.is_empty:
        raise ValueError("cannot slice an empty mesh")
    if n_slices < 1:
        raise ValueError(f"n_slices must be positive, got {n_slices}")
    a = AXES[axis]
    lo, hi = mesh.bounds()
    span = hi[a] - lo[a]
    coords = lo[a] + (np.arange(n_slices) + 0.5) * span / n_slices
    return [slice_at_plane(mesh, axis, float(c)) for c in coords]


# -- rasterization ---------------------------------------------------------------


def rasterize_contours(contours: ContourSet, resolution: int,
                       mode: str = "silhouette",
                       frame: tuple[float, float, float] = (0.0, 0.0, 1.0)
                       ) -> np.ndarray:
    """Binary image of one slice on the shared square frame (u0, v0, size).

    silhouette: even-odd fill sampled at pixel centers (closed chains only).
    outline: pixels crossed by any contour segment.
    """
    if resolution < 8:
        raise ValueError(f"resolution must be at least 8, got {resolution}")
    if mode not in ("silhouette", "outline"):
        raise ValueError(f"unknown rasterization mode {mode!r}")
    u0, v0, size = frame
    img = np.zeros((resolution, resolution), dtype=np.float32)
    if contours.is_empty:
        return img
    px = size / resolution

    if mode == "outline":
        for poly, closed in zip(contours.polylines, contours.closed):
            pts = np.vstack([poly, poly[:1]]) if closed else poly
            for pa, pb in zip(pts[:-1], pts[1:]):
                _mark_segment(img, pa, pb, u0, v0, px, resolution)
        return img

    edges = []
    for poly, closed in zip(contours.polylines, contours.closed):
        if not closed:
            continue  # open chains contribute zero area
        pts = np.vstack([poly, poly[:1]])
        edges.extend(zip(pts[:-1], pts[1:]))
    for row in range(resolution):
        v = v0 + (row + 0.5) * px
        crossings = []
        for pa, pb in edges:
            ya, yb = pa[1], pb[1]
            if (ya > v) != (yb > v):
                crossings.append(pa[0] + (v - ya) / (yb - ya) * (pb[0] - pa[0]))
        if not crossings:
            continue
        crossings.sort()
        for k in range(0, len(crossings) - 1, 2):
            left, right = crossings[k], crossings[k + 1]
            c_first = int(np.ceil((left - u0) / px - 0.5))
            c_last = int(np.floor((right - u0) / px - 0.5))
            if c_last >= 0 and c_first < resolution:
                img[row, max(c_first, 0):min(c_last, resolution - 1) + 1] = 1.0
    return img


def _mark_segment(img, pa, pb, u0, v0, px, resolution):
    length = float(np.hypot(pb[0] - pa[0], pb[1] - pa[1]))
    n = max(int(np.ceil(length / (px * 0.5))), 1)
    for t in np.linspace(0.0, 1.0, n + 1):
        u = pa[0] + t * (pb[0] - pa[0])
        v = pa[1] + t * (pb[1] - pa[1])
        col = int((u - u0) / px)
        row = int((v - v0) / px)
        if 0 <= row < resolution and 0 <= col < resolution:
            img[row, col] = 1.0


def mesh_frame(mesh: MeshSurface, axis: str = "z",
               margin: float = 0.0) -> tuple[float, float, float]:
    """Shared in-plane bounding square for all slices of this mesh."""
    u_idx, v_idx = plane_axes(axis)
    lo, hi = mesh.bounds()
    du = hi[u_idx] - lo[u_idx]
    dv = hi[v_idx] - lo[v_idx]
    size = float(max(du, dv)) * (1.0 + margin)
    cu = (hi[u_idx] + lo[u_idx]) / 2.0
    cv = (hi[v_idx] + lo[v_idx]) / 2.0
    return (float(cu - size / 2.0), float(cv - size / 2.0), size)
