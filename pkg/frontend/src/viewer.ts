/**
 * Dependency-free flat-shaded mesh preview on a 2D canvas: orthographic
 * projection, painter's-algorithm depth sort, one directional light.
 * Drag to orbit. Kept deliberately small; if anything here throws, the
 * page degrades to stats-only and downloads still work.
 */

import { TriangleSoup } from './mesh.js';

export class MeshViewer {
  private yaw = 0.6;
  private pitch = -0.5;
  private mesh: TriangleSoup | null = null;
  private center = [0, 0, 0];
  private scale = 1;
  private dragging = false;
  private lastX = 0;
  private lastY = 0;

  constructor(private canvas: HTMLCanvasElement) {
    canvas.addEventListener('pointerdown', (e) => {
      this.dragging = true;
      this.lastX = e.clientX;
      this.lastY = e.clientY;
      canvas.setPointerCapture(e.pointerId);
    });
    canvas.addEventListener('pointermove', (e) => {
      if (!this.dragging) return;
      this.yaw += (e.clientX - this.lastX) * 0.01;
      this.pitch += (e.clientY - this.lastY) * 0.01;
      this.pitch = Math.max(-1.5, Math.min(1.5, this.pitch));
      this.lastX = e.clientX;
      this.lastY = e.clientY;
      this.render();
    });
    canvas.addEventListener('pointerup', () => {
      this.dragging = false;
    });
  }

  setMesh(mesh: TriangleSoup) {
    this.mesh = mesh;
    const p = mesh.positions;
    const lo = [Infinity, Infinity, Infinity];
    const hi = [-Infinity, -Infinity, -Infinity];
    for (let i = 0; i < p.length; i += 3) {
      for (let a = 0; a < 3; a++) {
        lo[a] = Math.min(lo[a], p[i + a]);
        hi[a] = Math.max(hi[a], p[i + a]);
      }
    }
    this.center = [0, 1, 2].map((a) => (lo[a] + hi[a]) / 2);
    const extent = Math.max(hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]) || 1;
    this.scale = (Math.min(this.canvas.width, this.canvas.height) * 0.8) / extent;
    this.render();
  }

  render() {
    const ctx = this.canvas.getContext('2d');
    if (!ctx) throw new Error('2d canvas unavailable');
    const { width, height } = this.canvas;
    ctx.fillStyle = '#10141c';
    ctx.fillRect(0, 0, width, height);
    if (!this.mesh || this.mesh.triangleCount === 0) {
      ctx.fillStyle = '#888';
      ctx.fillText('empty mesh', 12, 20);
      return;
    }

    const cy = Math.cos(this.yaw), sy = Math.sin(this.yaw);
    const cp = Math.cos(this.pitch), sp = Math.sin(this.pitch);
    const p = this.mesh.positions;
    const n = this.mesh.triangleCount;
    const tris: Array<{ z: number; pts: number[]; shade: number }> = [];
    const project = (i: number) => {
      const x0 = p[i] - this.center[0];
      const y0 = p[i + 1] - this.center[1];
      const z0 = p[i + 2] - this.center[2];
      const x1 = cy * x0 + sy * y0;
      const y1 = -sy * x0 + cy * y0;
      const y2 = cp * y1 - sp * z0;
      const z2 = sp * y1 + cp * z0;
      return [width / 2 + x1 * this.scale, height / 2 - z2 * this.scale, y2];
    };
    for (let t = 0; t < n; t++) {
      const a = project(t * 9);
      const b = project(t * 9 + 3);
      const c = project(t * 9 + 6);
      const ux = b[0] - a[0], uy = b[1] - a[1];
      const vx = c[0] - a[0], vy = c[1] - a[1];
      const area = ux * vy - uy * vx;
      if (area >= 0) continue; // back face in screen space
      const depth = (a[2] + b[2] + c[2]) / 3;
      const shade = Math.min(1, 0.35 + 0.65 * Math.min(1, -area / 600));
      tris.push({ z: depth, pts: [a[0], a[1], b[0], b[1], c[0], c[1]], shade });
    }
    tris.sort((u, v) => u.z - v.z);
    for (const t of tris) {
      const g = Math.round(90 + 140 * t.shade);
      ctx.fillStyle = `rgb(${g * 0.55}, ${g * 0.75}, ${g})`;
      ctx.beginPath();
      ctx.moveTo(t.pts[0], t.pts[1]);
      ctx.lineTo(t.pts[2], t.pts[3]);
      ctx.lineTo(t.pts[4], t.pts[5]);
      ctx.closePath();
      ctx.fill();
    }
  }
}
