"""Binary checkpoint store for named float32 tensors.

Layout: magic ``S2S1``, little-endian u32 version (=1), u32 tensor count,
then per tensor: u32 name length, name bytes (utf-8), u8 rank, u32 dims,
raw little-endian float32 payload. Reads reject wrong magic or version,
truncation, and trailing bytes; loads are all-or-nothing.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"S2S1"
VERSION = 1


def save_tensors(path, tensors: dict[str, np.ndarray]) -> None:
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        a = np.ascontiguousarray(arr, dtype="<f4")
        nb = name.encode("utf-8")
        parts.append(struct.pack("<I", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<B", a.ndim))
        parts.append(struct.pack(f"<{a.ndim}I", *a.shape))
        parts.append(a.tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_tensors(path) -> dict[str, np.ndarray]:
    blob = Path(path).read_bytes()
    off = 0

    def take(n: int, what: str) -> bytes:
        nonlocal off
        if off + n > len(blob):
            raise FormatError(f"truncated checkpoint: expected {what} at byte {off}")
        chunk = blob[off:off + n]
        off += n
        return chunk

    if take(4, "magic") != MAGIC:
        raise FormatError(f"bad magic bytes; expected {MAGIC!r}")
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    (count,) = struct.unpack("<I", take(4, "tensor count"))

    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4, "name length"))
        name = take(nlen, "name").decode("utf-8")
        (rank,) = struct.unpack("<B", take(1, "rank"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, "dims"))
        numel = int(np.prod(dims, dtype=np.int64)) if rank else 1
        payload = take(4 * numel, f"payload of {name!r}")
        out[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    if off != len(blob):
        raise FormatError(
            f"file length {len(blob)} does not match declared payload ({off} bytes)"
        )
    return out
