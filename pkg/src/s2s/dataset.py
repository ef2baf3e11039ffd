"""Synthetic paired-phantom corpus and its loaders.

Each item is a (contour, structure) image pair: a perturbed-ellipse body
silhouette and a grayscale interior derived deterministically from that
silhouette (spine disc at the area centroid, rib arcs offset from the
boundary, organ blobs placed by the shape's axes). The whole corpus is a
pure function of (seed, index, resolution), so the learnable signal is
real but nothing needs to be shipped.

On disk: 8-bit PGM (P5) files ``{index:06}_y.pgm`` / ``{index:06}_x.pgm``
plus a ``manifest.txt`` with count, seed, and resolution.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import ConfigError, FormatError

RESOLUTIONS = (32, 64, 128, 256)

SOFT_TISSUE = 0.2
BONE = 1.0


@dataclass
class PhantomPair:
    """One (contour, structure) image pair in [0,1], plus its provenance."""

    contour: np.ndarray
    structure: np.ndarray
    seed: int
    index: int


def generate_phantom_pair(seed: int, index: int, resolution: int) -> PhantomPair:
    if resolution not in RESOLUTIONS:
        raise ConfigError(f"resolution must be one of {RESOLUTIONS}, got {resolution}")
    rng = np.random.default_rng([seed, index])

    # body: ellipse with a low-frequency sinusoidal boundary perturbation,
    # parameter ranges keep the fill fraction inside [0.2, 0.7]
    cx = 0.5 + rng.uniform(-0.03, 0.03)
    cy = 0.5 + rng.uniform(-0.03, 0.03)
    a = rng.uniform(0.30, 0.41)
    b = rng.uniform(0.30, 0.41)
    harmonics = [(k, rng.uniform(0.0, 0.025), rng.uniform(0.0, 2 * np.pi))
                 for k in (2, 3, 4, 5)]

    coords = (np.arange(resolution) + 0.5) / resolution
    xg, yg = np.meshgrid(coords, coords)  # xg varies along columns
    u = (xg - cx) / a
    v = (yg - cy) / b
    rho = np.hypot(u, v)
    theta = np.arctan2(v, u)
    boundary = np.ones_like(rho)
    for k, amp, phase in harmonics:
        boundary += amp * np.sin(k * theta + phase)
    body = rho <= boundary

    frac = np.divide(rho, boundary, out=np.full_like(rho, 2.0), where=boundary > 0)

    structure = np.where(body, SOFT_TISSUE, 0.0)

    # organ blobs first, bone painted on top
    for _ in range(2):
        ox = cx + rng.uniform(-0.35, 0.35) * a
        oy = cy + rng.uniform(-0.35, 0.35) * b
        oa = rng.uniform(0.18, 0.30) * a
        ob = rng.uniform(0.18, 0.30) * b
        value = rng.uniform(0.4, 0.7)
        organ = ((xg - ox) / oa) ** 2 + ((yg - oy) / ob) ** 2 <= 1.0
        structure = np.where(organ, value, structure)

    # rib arcs: a band just inside the boundary, with angular gaps
    rib_phase = rng.uniform(0.0, 2 * np.pi)
    ribs = (frac >= 0.78) & (frac <= 0.88) & (np.cos(3 * theta + rib_phase) > -0.2)
    structure = np.where(ribs, BONE, structure)

    # spine disc at the silhouette's area centroid
    if body.any():
        scx = float(xg[body].mean())
        scy = float(yg[body].mean())
        r_spine = 0.12 * np.sqrt(a * b)
        spine = (xg - scx) ** 2 + (yg - scy) ** 2 <= r_spine ** 2
        structure = np.where(spine, BONE, structure)

    structure = np.where(body, structure, 0.0)
    return PhantomPair(
        contour=body.astype(np.float32),
        structure=structure.astype(np.float32),
        seed=seed,
        index=index,
    )


def split_dataset(count: int, test_fraction: float = 0.2, seed: int = 0):
    """Disjoint, exhaustive (train, test) index split; |test| = round(f*count)."""
    if count < 5:
        raise ConfigError(f"need at least 5 items to split, got {count}")
    n_test = int(round(test_fraction * count))
    perm = np.random.default_rng(seed).permutation(count)
    test = np.sort(perm[:n_test])
    train = np.sort(perm[n_test:])
    return train, test


def iter_batches(indices: Sequence[int], batch_size: int,
                 epoch_seed: int) -> Iterator[np.ndarray]:
    """Epoch-seeded permutation of indices, chunked into batches."""
    order = np.random.default_rng(epoch_seed).permutation(np.asarray(indices))
    for start in range(0, len(order), batch_size):
        yield order[start:start + batch_size]


def to_signed(img01: np.ndarray) -> np.ndarray:
    """[0,1] image to the (-1,1) training range."""
    return img01.astype(np.float32) * 2.0 - 1.0


def to_unit(signed: np.ndarray) -> np.ndarray:
    """(-1,1) network range back to [0,1], clipped."""
    return np.clip((signed + 1.0) / 2.0, 0.0, 1.0).astype(np.float32)


# -- PGM + manifest persistence ----------------------------------------------


def pgm_bytes(img01: np.ndarray) -> bytes:
    """8-bit binary PGM (P5, maxval 255) as bytes."""
    h, w = img01.shape
    data = np.clip(np.rint(img01 * 255.0), 0, 255).astype(np.uint8)
    return f"P5\n{w} {h}\n255\n".encode("ascii") + data.tobytes()


def write_pgm(path, img01: np.ndarray) -> None:
    Path(path).write_bytes(pgm_bytes(img01))


def read_pgm(path_or_bytes) -> np.ndarray:
    if isinstance(path_or_bytes, (bytes, bytearray)):
        blob = bytes(path_or_bytes)
    else:
        blob = Path(path_or_bytes).read_bytes()
    fields: list[bytes] = []
    off = 0
    while len(fields) < 4:
        while off < len(blob) and blob[off:off + 1].isspace():
            off += 1
        if off < len(blob) and blob[off:off + 1] == b"#":
            while off < len(blob) and blob[off] != 0x0A:
                off += 1
            continue
        start = off
        while off < len(blob) and not blob[off:off + 1].isspace():
            off += 1
        if start == off:
            raise FormatError("truncated PGM header")
        fields.append(blob[start:off])
    if fields[0] != b"P5":
        raise FormatError(f"not a binary PGM: magic {fields[0]!r}")
    w, h, maxval = (int(x) for x in fields[1:])
    if maxval != 255:
        raise FormatError(f"unsupported PGM maxval {maxval}")
    off += 1  # single whitespace byte after maxval
    pixels = blob[off:off + w * h]
    if len(pixels) != w * h:
        raise FormatError("truncated PGM payload")
    img = np.frombuffer(pixels, dtype=np.uint8).reshape(h, w)
    return img.astype(np.float32) / 255.0


def generate_corpus(out_dir, count: int, resolution: int, seed: int) -> None:
    """Write `count` phantom pairs and the manifest into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for index in range(count):
        pair = generate_phantom_pair(seed, index, resolution)
        write_pgm(out / f"{index:06}_y.pgm", pair.contour)
        write_pgm(out / f"{index:06}_x.pgm", pair.structure)
    (out / "manifest.txt").write_text(
        f"count {count}\nseed {seed}\nresolution {resolution}\n"
    )


def read_manifest(corpus_dir) -> dict[str, int]:
    path = Path(corpus_dir) / "manifest.txt"
    if not path.exists():
        raise FormatError(f"no manifest.txt in {corpus_dir}")
    out: dict[str, int] = {}
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition(" ")
        out[key] = int(value)
    for key in ("count", "seed", "resolution"):
        if key not in out:
            raise FormatError(f"manifest.txt missing {key!r}")
    return out


def load_pairs(corpus_dir, indices: Sequence[int]):
    """Load (contour, structure) stacks mapped to (-1,1), shape (N,1,R,R)."""
    corpus = Path(corpus_dir)
    ys, xs = [], []
    for index in indices:
        ys.append(read_pgm(corpus / f"{index:06}_y.pgm"))
        xs.append(read_pgm(corpus / f"{index:06}_x.pgm"))
    y = to_signed(np.stack(ys))[:, None, :, :]
    x = to_signed(np.stack(xs))[:, None, :, :]
    return y, x
