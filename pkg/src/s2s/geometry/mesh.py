"""Triangle mesh type and OBJ / STL parsing and export.

Parsers weld vertices within 1e-6 model units, fan-triangulate polygonal
faces, and drop degenerate triangles. Binary STL is detected by its exact
length contract (84 + 50 * count); export reproduces it byte-exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import FormatError, MeshParseError

WELD_TOLERANCE = 1e-6


@dataclass
class MeshSurface:
    """Indexed triangle mesh: (V,3) float vertices, (T,3) int index triples."""

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(self.triangles) and self.triangles.max() >= len(self.vertices):
            raise MeshParseError(
                f"triangle index {self.triangles.max()} out of range "
                f"({len(self.vertices)} vertices)"
            )

    @property
    def is_empty(self) -> bool:
        return len(self.triangles) == 0

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if len(self.vertices) == 0:
            raise ValueError("empty mesh has no bounds")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


@dataclass
class Transform:
    """Uniform scale + translation: original = normalized * scale + offset."""

    scale: float = 1.0
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return points * self.scale + self.offset


def normalize_mesh(mesh: MeshSurface) -> tuple[MeshSurface, Transform]:
    """Uniformly scale into the unit cube [0,1]^3; returns the inverse map."""
    lo, hi = mesh.bounds()
    extent = float((hi - lo).max())
    if extent <= 0:
        raise MeshParseError("mesh has zero extent")
    center = (lo + hi) / 2.0
    scaled = (mesh.vertices - center) / extent + 0.5
    transform = Transform(scale=extent, offset=center - 0.5 * extent)
    return MeshSurface(scaled, mesh.triangles.copy()), transform


def _weld(raw_vertices: list, raw_triangles: list) -> MeshSurface:
    """Merge vertices within tolerance, drop degenerate triangles."""
    vertex_ids: dict[tuple, int] = {}
    vertices: list = []
    remap = np.empty(len(raw_vertices), dtype=np.int64)
    inv_tol = 1.0 / WELD_TOLERANCE
    for i, v in enumerate(raw_vertices):
        key = (round(v[0] * inv_tol), round(v[1] * inv_tol), round(v[2] * inv_tol))
        idx = vertex_ids.get(key)
        if idx is None:
            idx = len(vertices)
            vertex_ids[key] = idx
            vertices.append(v)
        remap[i] = idx
    triangles = []
    for a, b, c in raw_triangles:
        ra, rb, rc = remap[a], remap[b], remap[c]
        if ra != rb and rb != rc and rc != ra:
            triangles.append((ra, rb, rc))
    if not vertices or not triangles:
        raise MeshParseError("no geometry")
    return MeshSurface(np.array(vertices, dtype=np.float64),
                       np.array(triangles, dtype=np.int64))


# -- OBJ -----------------------------------------------------------------------


def parse_obj(data: bytes) -> MeshSurface:
    vertices: list[tuple] = []
    triangles: list[tuple] = []
    try:
        text = data.decode("utf-8", errors="replace")
    except Exception as exc:  # pragma: no cover
        raise MeshParseError(f"undecodable OBJ bytes: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise MeshParseError(f"line {lineno}: vertex needs 3 coordinates")
            try:
                vertices.append(tuple(float(p) for p in parts[1:4]))
            except ValueError:
                raise MeshParseError(f"line {lineno}: bad vertex coordinate") from None
        elif tag == "f":
            if len(parts) < 4:
                raise MeshParseError(f"line {lineno}: face needs at least 3 vertices")
            idx = []
            for p in parts[1:]:
                head = p.split("/")[0]
                try:
                    i = int(head)
                except ValueError:
                    raise MeshParseError(f"line {lineno}: bad face index {p!r}") from None
                if i < 0:
                    i = len(vertices) + i  # negative indices count from the end
                else:
                    i = i - 1  # OBJ indices are 1-based
                if i < 0 or i >= len(vertices):
                    raise MeshParseError(f"line {lineno}: face index {p!r} out of range")
                idx.append(i)
            for k in range(1, len(idx) - 1):  # fan triangulation
                triangles.append((idx[0], idx[k], idx[k + 1]))
        # vn / vt / g / o / s / usemtl / mtllib are ignored
    return _weld(vertices, triangles)


def export_obj(mesh: MeshSurface) -> bytes:
    lines = [f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}" for v in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    return ("\n".join(lines) + "\n").encode("ascii")


# -- STL -----------------------------------------------------------------------


def parse_stl_binary(data: bytes) -> MeshSurface:
    if len(data) < 84:
        raise MeshParseError(f"binary STL shorter than 84-byte preamble ({len(data)})")
    (count,) = struct.unpack_from("<I", data, 80)
    expected = 84 + 50 * count
    if len(data) != expected:
        raise MeshParseError(
            f"binary STL length {len(data)} != 84 + 50*{count} = {expected}"
        )
    if count == 0:
        raise MeshParseError("no geometry")
    records = np.frombuffer(data, dtype=np.uint8, count=50 * count, offset=84)
    records = records.reshape(count, 50)
    floats = records[:, :48].copy().view("<f4").reshape(count, 12)
    tri_vertices = floats[:, 3:12].astype(np.float64).reshape(count * 3, 3)
    raw_triangles = [(3 * i, 3 * i + 1, 3 * i + 2) for i in range(count)]
    return _weld([tuple(v) for v in tri_vertices], raw_triangles)


def parse_stl_ascii(data: bytes) -> MeshSurface:
    text = data.decode("utf-8", errors="replace")
    vertices: list[tuple] = []
    raw_triangles: list[tuple] = []
    pending: list[tuple] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        parts = raw.split()
        if not parts:
            continue
        if parts[0] == "vertex":
            if len(parts) != 4:
                raise MeshParseError(f"line {lineno}: vertex needs 3 coordinates")
            try:
                pending.append(tuple(float(p) for p in parts[1:4]))
            except ValueError:
                raise MeshParseError(f"line {lineno}: bad vertex coordinate") from None
        elif parts[0] == "endfacet":
            if len(pending) != 3:
                raise MeshParseError(
                    f"line {lineno}: facet closed with {len(pending)} vertices"
                )
            base = len(vertices)
            vertices.extend(pending)
            raw_triangles.append((base, base + 1, base + 2))
            pending = []
    if pending:
        raise MeshParseError("unterminated facet at end of file")
    return _weld(vertices, raw_triangles)


def export_stl_binary(mesh: MeshSurface) -> bytes:
    count = len(mesh.triangles)
    out = bytearray()
    out += b"s2s binary STL".ljust(80, b"\x00")
    out += struct.pack("<I", count)
    v = mesh.vertices
    for a, b, c in mesh.triangles:
        pa, pb, pc = v[a], v[b], v[c]
        n = np.cross(pb - pa, pc - pa)
        norm = np.linalg.norm(n)
        n = n / norm if norm > 0 else np.zeros(3)
        out += struct.pack("<3f", *n)
        out += struct.pack("<3f", *pa)
        out += struct.pack("<3f", *pb)
        out += struct.pack("<3f", *pc)
        out += struct.pack("<H", 0)
    return bytes(out)


# -- format dispatch -------------------------------------------------------------


def _looks_like_binary_stl(data: bytes) -> bool:
    if len(data) < 84:
        return False
    (count,) = struct.unpack_from("<I", data, 80)
    return len(data) == 84 + 50 * count


def _looks_like_ascii_stl(data: bytes) -> bool:
    head = data[:512].lstrip()
    return head.startswith(b"solid") and b"facet" in data


def parse_mesh(data: bytes, fmt: str = "auto") -> MeshSurface:
    """Parse OBJ or STL bytes into a welded MeshSurface.

    ``fmt``: obj | stl_ascii | stl_binary | stl | auto. Binary STL wins
    auto-detection via its exact length contract; ``stl`` accepts either
    STL flavor.
    """
    if fmt == "obj":
        return parse_obj(data)
    if fmt == "stl_binary":
        return parse_stl_binary(data)
    if fmt == "stl_ascii":
        return parse_stl_ascii(data)
    if fmt == "stl":
        if _looks_like_binary_stl(data):
            return parse_stl_binary(data)
        return parse_stl_ascii(data)
    if fmt == "auto":
        if _looks_like_binary_stl(data):
            return parse_stl_binary(data)
        if _looks_like_ascii_stl(data):
            return parse_stl_ascii(data)
        if any(data.lstrip().startswith(p) for p in (b"v ", b"v\t", b"#", b"f ")) \
                or b"\nv " in data or b"\nf " in data:
            return parse_obj(data)
        raise MeshParseError("no geometry (unrecognized mesh format)")
    raise FormatError(f"unknown mesh format {fmt!r}")


def export_mesh(mesh: MeshSurface, fmt: str = "stl_binary") -> bytes:
    if fmt == "obj":
        return export_obj(mesh)
    if fmt in ("stl", "stl_binary"):
        return export_stl_binary(mesh)
    raise FormatError(f"unknown export format {fmt!r}")
