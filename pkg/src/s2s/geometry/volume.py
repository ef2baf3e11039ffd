"""Scalar volume grid assembled from per-plane images, plus raw file I/O.

Values are float32 in [0,1], stored z-major: values[k] is slice k with
rows along y and columns along x. The sidecar format is one ASCII header
line ``S2SVOL v1 nx ny nz ox oy oz sx sy sz`` followed by the raw
little-endian float32 payload.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import FormatError, ShapeError

VOL_MAGIC = "S2SVOL"
VOL_VERSION = "v1"


@dataclass
class VolumeGrid:
    values: np.ndarray  # (nz, ny, nx) float32 in [0,1]
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))
    spacing: np.ndarray = field(default_factory=lambda: np.ones(3))

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 3:
            raise ShapeError(f"volume needs 3 dims, got shape {self.values.shape}")
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        self.spacing = np.asarray(self.spacing, dtype=np.float64).reshape(3)

    @property
    def dims(self) -> tuple[int, int, int]:
        """(nx, ny, nz)."""
        nz, ny, nx = self.values.shape
        return nx, ny, nz

    def plane(self, k: int) -> np.ndarray:
        nz = self.values.shape[0]
        if not 0 <= k < nz:
            raise IndexError(f"plane {k} out of range [0, {nz})")
        return self.values[k]


def assemble_volume(slices: Sequence[np.ndarray], origin=(0.0, 0.0, 0.0),
                    spacing=(1.0, 1.0, 1.0)) -> VolumeGrid:
    """Stack [0,1] slice images into a VolumeGrid; planes stay bit-identical."""
    if not len(slices):
        raise ShapeError("no slices to assemble")
    shape = np.asarray(slices[0]).shape
    for k, s in enumerate(slices):
        if np.asarray(s).shape != shape:
            raise ShapeError(
                f"slice {k} has shape {np.asarray(s).shape}, expected {shape}"
            )
    stack = np.stack([np.asarray(s, dtype=np.float32) for s in slices])
    stack = np.clip(stack, 0.0, 1.0)
    return VolumeGrid(stack, origin=np.asarray(origin), spacing=np.asarray(spacing))


def save_volume(path, volume: VolumeGrid) -> None:
    nx, ny, nz = volume.dims
    ox, oy, oz = (repr(float(v)) for v in volume.origin)
    sx, sy, sz = (repr(float(v)) for v in volume.spacing)
    header = (f"{VOL_MAGIC} {VOL_VERSION} {nx} {ny} {nz} "
              f"{ox} {oy} {oz} {sx} {sy} {sz}\n")
    payload = np.ascontiguousarray(volume.values, dtype="<f4").tobytes()
    Path(path).write_bytes(header.encode("ascii") + payload)


def load_volume(path_or_bytes) -> VolumeGrid:
    if isinstance(path_or_bytes, (bytes, bytearray)):
        blob = bytes(path_or_bytes)
    else:
        blob = Path(path_or_bytes).read_bytes()
    newline = blob.find(b"\n")
    if newline < 0:
        raise FormatError("volume file has no header line")
    fields = blob[:newline].decode("ascii", errors="replace").split()
    if len(fields) != 11 or fields[0] != VOL_MAGIC or fields[1] != VOL_VERSION:
        raise FormatError(f"bad volume header: {blob[:newline]!r}")
    try:
        nx, ny, nz = (int(v) for v in fields[2:5])
        origin = [float(v) for v in fields[5:8]]
        spacing = [float(v) for v in fields[8:11]]
    except ValueError:
        raise FormatError(f"unparseable volume header: {blob[:newline]!r}") from None
    payload = blob[newline + 1:]
    expected = 4 * nx * ny * nz
    if len(payload) != expected:
        raise FormatError(
            f"volume payload is {len(payload)} bytes, header declares {expected}"
        )
    values = np.frombuffer(payload, dtype="<f4").reshape(nz, ny, nx).copy()
    return VolumeGrid(values, origin=origin, spacing=spacing)
