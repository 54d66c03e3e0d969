/** Canvas point-cloud viewer with orbit/pan/zoom navigation and draggable
 * camera keyframe gizmos. Rendering here is visualization only; every
 * authoritative render comes from the server. */

import { PoseDoc } from "./api.js";
import { CloudBuffers } from "./state.js";

type Vec3 = [number, number, number];

function rotYawPitch(yaw: number, pitch: number): number[] {
  const cy = Math.cos(yaw), sy = Math.sin(yaw);
  const cp = Math.cos(pitch), sp = Math.sin(pitch);
  // R = Rx(pitch) * Ry(yaw), row-major
  return [cy, 0, sy, sp * sy, cp, -sp * cy, -cp * sy, sp, cp * cy];
}

function apply(m: number[], v: Vec3): Vec3 {
  return [
    m[0] * v[0] + m[1] * v[1] + m[2] * v[2],
    m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
    m[6] * v[0] + m[7] * v[1] + m[8] * v[2],
  ];
}

export interface ViewerCallbacks {
  onKeyframeMoved(index: number, pose: PoseDoc): void;
  onKeyframePlaced(pose: PoseDoc): void;
}

export class CloudViewer {
  yaw = 0.3;
  pitch = 0.25;
  distance = 4.0;
  target: Vec3 = [0, 0, 1.5];
  focal = 420;

  cloud: CloudBuffers | null = null;
  keyframes: PoseDoc[] = [];
  selected = -1;

  private dragging: "orbit" | "pan" | "gizmo" | null = null;
  private dragIndex = -1;
  private lastX = 0;
  private lastY = 0;

  constructor(
    private canvas: HTMLCanvasElement,
    private callbacks: ViewerCallbacks,
  ) {
    canvas.addEventListener("pointerdown", (e) => this.pointerDown(e));
    canvas.addEventListener("pointermove", (e) => this.pointerMove(e));
    canvas.addEventListener("pointerup", () => this.pointerUp());
    canvas.addEventListener("wheel", (e) => {
      e.preventDefault();
      this.distance *= Math.exp(e.deltaY * 0.001);
      this.distance = Math.min(50, Math.max(0.2, this.distance));
      this.draw();
    });
    canvas.addEventListener("dblclick", (e) => {
      const pose = this.poseAtScreen(e.offsetX, e.offsetY);
      if (pose) this.callbacks.onKeyframePlaced(pose);
    });
  }

  setCloud(cloud: CloudBuffers): void {
    this.cloud = cloud;
    // frame the cloud: center the orbit target on its centroid
    let cx = 0, cy = 0, cz = 0;
    for (let i = 0; i < cloud.count; i++) {
      cx += cloud.positions[i * 3];
      cy += cloud.positions[i * 3 + 1];
      cz += cloud.positions[i * 3 + 2];
    }
    this.target = [cx / cloud.count, cy / cloud.count, cz / cloud.count];
    this.draw();
  }

  setKeyframes(keyframes: PoseDoc[]): void {
    this.keyframes = keyframes;
    this.draw();
  }

  /** Screen-space projection of a world point under the orbit camera. */
  project(p: Vec3): [number, number, number] | null {
    const m = rotYawPitch(this.yaw, this.pitch);
    const rel: Vec3 = [p[0] - this.target[0], p[1] - this.target[1], p[2] - this.target[2]];
    const c = apply(m, rel);
    const z = c[2] + this.distance;
    if (z <= 0.05) return null;
    const w = this.canvas.width, h = this.canvas.height;
    return [(c[0] * this.focal) / z + w / 2, (c[1] * this.focal) / z + h / 2, z];
  }

  /** Inverse of project at the current target depth: where a double-click lands. */
  private poseAtScreen(sx: number, sy: number): PoseDoc | null {
    const m = rotYawPitch(this.yaw, this.pitch);
    const z = this.distance;
    const cx: Vec3 = [
      ((sx - this.canvas.width / 2) * z) / this.focal,
      ((sy - this.canvas.height / 2) * z) / this.focal,
      0,
    ];
    // transpose = inverse for a rotation
    const inv: Vec3 = [
      m[0] * cx[0] + m[3] * cx[1] + m[6] * cx[2],
      m[1] * cx[0] + m[4] * cx[1] + m[7] * cx[2],
      m[2] * cx[0] + m[5] * cx[1] + m[8] * cx[2],
    ];
    return {
      r: [1, 0, 0, 0, 1, 0, 0, 0, 1],
      t: [inv[0] + this.target[0], inv[1] + this.target[1], inv[2] + this.target[2]],
    };
  }

  private gizmoAt(sx: number, sy: number): number {
    for (let i = this.keyframes.length - 1; i >= 0; i--) {
      const t = this.keyframes[i].t as Vec3;
      const proj = this.project(t);
      if (proj && Math.hypot(proj[0] - sx, proj[1] - sy) < 10) return i;
    }
    return -1;
  }

  private pointerDown(e: PointerEvent): void {
    this.lastX = e.offsetX;
    this.lastY = e.offsetY;
    const hit = this.gizmoAt(e.offsetX, e.offsetY);
    if (hit >= 0) {
      this.dragging = "gizmo";
      this.dragIndex = hit;
      this.selected = hit;
    } else {
      this.dragging = e.shiftKey ? "pan" : "orbit";
    }
    this.canvas.setPointerCapture(e.pointerId);
  }

  private pointerMove(e: PointerEvent): void {
    if (!this.dragging) return;
    const dx = e.offsetX - this.lastX;
    const dy = e.offsetY - this.lastY;
    this.lastX = e.offsetX;
    this.lastY = e.offsetY;
    if (this.dragging === "orbit") {
      this.yaw += dx * 0.008;
      this.pitch = Math.min(1.5, Math.max(-1.5, this.pitch + dy * 0.008));
    } else if (this.dragging === "pan") {
      const m = rotYawPitch(this.yaw, this.pitch);
      const scale = this.distance / this.focal;
      // move the target along the view plane (rows of R are camera axes)
      this.target = [
        this.target[0] - (m[0] * dx + m[3] * dy) * scale,
        this.target[1] - (m[1] * dx + m[4] * dy) * scale,
        this.target[2] - (m[2] * dx + m[5] * dy) * scale,
      ];
    } else if (this.dragging === "gizmo" && this.dragIndex >= 0) {
      // drag the keyframe in a view-parallel plane at its current depth
      const pose = this.keyframes[this.dragIndex];
      const m = rotYawPitch(this.yaw, this.pitch);
      const proj = this.project(pose.t as Vec3);
      const depth = proj ? proj[2] : this.distance;
      const scale = depth / this.focal;
      const t: Vec3 = [
        pose.t[0] + (m[0] * dx + m[3] * dy) * scale,
        pose.t[1] + (m[1] * dx + m[4] * dy) * scale,
        pose.t[2] + (m[2] * dx + m[5] * dy) * scale,
      ];
      this.keyframes[this.dragIndex] = { r: pose.r, t };
    }
    this.draw();
  }

  private pointerUp(): void {
    if (this.dragging === "gizmo" && this.dragIndex >= 0) {
      this.callbacks.onKeyframeMoved(this.dragIndex, this.keyframes[this.dragIndex]);
    }
    this.dragging = null;
    this.dragIndex = -1;
  }

  draw(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const { width, height } = this.canvas;
    ctx.fillStyle = "#10131a";
    ctx.fillRect(0, 0, width, height);
    if (this.cloud) {
      const img = ctx.getImageData(0, 0, width, height);
      const order: Array<[number, number]> = [];
      for (let i = 0; i < this.cloud.count; i++) {
        const p: Vec3 = [
          this.cloud.positions[i * 3],
          this.cloud.positions[i * 3 + 1],
          this.cloud.positions[i * 3 + 2],
        ];
        const proj = this.project(p);
        if (proj) order.push([proj[2], i]);
      }
      order.sort((a, b) => b[0] - a[0]); // far to near
      for (const [, i] of order) {
        const proj = this.project([
          this.cloud.positions[i * 3],
          this.cloud.positions[i * 3 + 1],
          this.cloud.positions[i * 3 + 2],
        ]);
        if (!proj) continue;
        const x = Math.round(proj[0]), y = Math.round(proj[1]);
        if (x < 0 || y < 0 || x >= width || y >= height) continue;
        const o = (y * width + x) * 4;
        img.data[o] = this.cloud.colors[i * 3];
        img.data[o + 1] = this.cloud.colors[i * 3 + 1];
        img.data[o + 2] = this.cloud.colors[i * 3 + 2];
        img.data[o + 3] = 255;
      }
      ctx.putImageData(img, 0, 0);
    }
    // keyframe gizmos: a dot plus a frustum-ish tick along the path
    this.keyframes.forEach((kf, i) => {
      const proj = this.project(kf.t as Vec3);
      if (!proj) return;
      ctx.beginPath();
      ctx.arc(proj[0], proj[1], 6, 0, Math.PI * 2);
      ctx.fillStyle = i === this.selected ? "#ffd166" : "#4cc9f0";
      ctx.fill();
      ctx.fillStyle = "#e8e8e8";
      ctx.font = "10px sans-serif";
      ctx.fillText(String(i), proj[0] + 8, proj[1] - 8);
      if (i > 0) {
        const prev = this.project(this.keyframes[i - 1].t as Vec3);
        if (prev) {
          ctx.beginPath();
          ctx.moveTo(prev[0], prev[1]);
          ctx.lineTo(proj[0], proj[1]);
          ctx.strokeStyle = "#4cc9f077";
          ctx.stroke();
        }
      }
    });
  }
}
