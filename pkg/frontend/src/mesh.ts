/** Minimal mesh and image decoding for the preview pane. */

export interface TriangleSoup {
  /** xyz triples, 9 floats per triangle. */
  positions: Float32Array;
  triangleCount: number;
}

export function parseStlBinary(buf: ArrayBuffer): TriangleSoup {
  if (buf.byteLength < 84) throw new Error('not a binary STL: too short');
  const view = new DataView(buf);
  const count = view.getUint32(80, true);
  if (buf.byteLength !== 84 + 50 * count) {
    throw new Error(`bad STL length ${buf.byteLength} for ${count} triangles`);
  }
  const positions = new Float32Array(count * 9);
  for (let t = 0; t < count; t++) {
    const base = 84 + 50 * t + 12; // skip the facet normal
    for (let i = 0; i < 9; i++) {
      positions[t * 9 + i] = view.getFloat32(base + 4 * i, true);
    }
  }
  return { positions, triangleCount: count };
}

export function parseObj(text: string): TriangleSoup {
  const vertices: number[][] = [];
  const tris: number[] = [];
  for (const raw of text.split('\n')) {
    const parts = raw.trim().split(/\s+/);
    if (parts[0] === 'v' && parts.length >= 4) {
      vertices.push([Number(parts[1]), Number(parts[2]), Number(parts[3])]);
    } else if (parts[0] === 'f' && parts.length >= 4) {
      const idx = parts.slice(1).map((p) => {
        const i = Number(p.split('/')[0]);
        return i < 0 ? vertices.length + i : i - 1;
      });
      for (let k = 1; k + 1 < idx.length; k++) {
        tris.push(idx[0], idx[k], idx[k + 1]);
      }
    }
  }
  const positions = new Float32Array(tris.length * 3);
  tris.forEach((vi, n) => {
    const v = vertices[vi];
    if (!v) throw new Error(`face index ${vi + 1} out of range`);
    positions.set(v, n * 3);
  });
  return { positions, triangleCount: tris.length / 3 };
}

export interface PgmImage {
  width: number;
  height: number;
  pixels: Uint8Array;
}

export function parsePgm(buf: ArrayBuffer): PgmImage {
  const bytes = new Uint8Array(buf);
  const fields: string[] = [];
  let off = 0;
  while (fields.length < 4) {
    while (off < bytes.length && isSpace(bytes[off])) off++;
    if (bytes[off] === 0x23) {
      while (off < bytes.length && bytes[off] !== 0x0a) off++;
      continue;
    }
    const start = off;
    while (off < bytes.length && !isSpace(bytes[off])) off++;
    if (start === off) throw new Error('truncated PGM header');
    fields.push(new TextDecoder().decode(bytes.slice(start, off)));
  }
  if (fields[0] !== 'P5') throw new Error(`not a binary PGM: ${fields[0]}`);
  const [width, height, maxval] = fields.slice(1).map(Number);
  if (maxval !== 255) throw new Error(`unsupported maxval ${maxval}`);
  off += 1;
  const pixels = bytes.slice(off, off + width * height);
  if (pixels.length !== width * height) throw new Error('truncated PGM payload');
  return { width, height, pixels };
}

function isSpace(b: number): boolean {
  return b === 0x20 || b === 0x09 || b === 0x0a || b === 0x0d;
}
