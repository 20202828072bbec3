/**
 * Canvas scatter plot for projections, responsive at 10^4 points.
 * Supports two interactive capture modes: dragging a division line
 * (two-point capture) and drawing a lasso polygon.
 */

import type { PointRole, Projection } from "./api.js";
import { extentOf, lineFromTwoPoints, makeScale, type Line } from "./geometry.js";

export const ROLE_COLORS: Record<PointRole, string> = {
  train: "#9ACD32",
  test: "#1F77B4",
  test_correct: "#1F77B4",
  test_incorrect: "#D62728",
  synthetic: "#9467BD",
  other: "#C8C8C8",
};

const DRAW_ORDER: PointRole[] = ["other", "train", "synthetic", "test", "test_correct", "test_incorrect"];

export type CaptureMode = "none" | "line" | "lasso";

export interface ScatterCallbacks {
  onLine?: (line: Line) => void;
  onLasso?: (vertices: [number, number][]) => void;
}

export class ScatterPlot {
  private projection: Projection | null = null;
  private mode: CaptureMode = "none";
  private dragStart: [number, number] | null = null;
  private lassoPath: [number, number][] = [];
  private overlayLine: Line | null = null;

  constructor(
    readonly canvas: HTMLCanvasElement,
    private callbacks: ScatterCallbacks = {},
  ) {
    canvas.addEventListener("pointerdown", (e) => this.pointerDown(e));
    canvas.addEventListener("pointermove", (e) => this.pointerMove(e));
    canvas.addEventListener("pointerup", (e) => this.pointerUp(e));
  }

  setCaptureMode(mode: CaptureMode): void {
    this.mode = mode;
    this.lassoPath = [];
    this.dragStart = null;
  }

  setData(projection: Projection): void {
    this.projection = projection;
    this.render();
  }

  setOverlayLine(line: Line | null): void {
    this.overlayLine = line;
    this.render();
  }

  private scale() {
    const p = this.projection!;
    return makeScale(extentOf(p.x, p.y), this.canvas.width, this.canvas.height);
  }

  private eventData(e: PointerEvent): [number, number] {
    const rect = this.canvas.getBoundingClientRect();
    const px = ((e.clientX - rect.left) / rect.width) * this.canvas.width;
    const py = ((e.clientY - rect.top) / rect.height) * this.canvas.height;
    return this.scale().toData(px, py);
  }

  private pointerDown(e: PointerEvent): void {
    if (!this.projection || this.mode === "none") return;
    const pt = this.eventData(e);
    if (this.mode === "line") {
      this.dragStart = pt;
    } else {
      this.lassoPath = [pt];
    }
    this.canvas.setPointerCapture(e.pointerId);
  }

  private pointerMove(e: PointerEvent): void {
    if (!this.projection) return;
    if (this.mode === "lasso" && this.lassoPath.length > 0 && e.buttons) {
      this.lassoPath.push(this.eventData(e));
      this.render();
    }
  }

  private pointerUp(e: PointerEvent): void {
    if (!this.projection || this.mode === "none") return;
    const pt = this.eventData(e);
    if (this.mode === "line" && this.dragStart) {
      const [x0, y0] = this.dragStart;
      this.dragStart = null;
      if (x0 !== pt[0] || y0 !== pt[1]) {
        const line = lineFromTwoPoints([x0, y0], pt);
        this.overlayLine = line;
        this.render();
        this.callbacks.onLine?.(line);
      }
    } else if (this.mode === "lasso" && this.lassoPath.length >= 3) {
      const vertices = this.lassoPath.slice();
      this.lassoPath = [];
      this.render();
      this.callbacks.onLasso?.(vertices);
    }
  }

  render(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    ctx.fillStyle = "#FFFFFF";
    ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
    const p = this.projection;
    if (!p) return;
    const scale = this.scale();
    for (const role of DRAW_ORDER) {
      ctx.fillStyle = ROLE_COLORS[role];
      for (let i = 0; i < p.ids.length; i++) {
        if (p.roles[i] !== role) continue;
        const [px, py] = scale.toPx(p.x[i], p.y[i]);
        ctx.beginPath();
        ctx.arc(px, py, 2.5, 0, Math.PI * 2);
        ctx.fill();
      }
    }
    if (this.overlayLine) this.drawLine(ctx, this.overlayLine, scale);
    if (this.lassoPath.length > 1) this.drawLasso(ctx, scale);
  }

  private drawLine(
    ctx: CanvasRenderingContext2D,
    line: Line,
    scale: ReturnType<typeof makeScale>,
  ): void {
    const p = this.projection!;
    const ext = extentOf(p.x, p.y);
    // draw the segment of a*x + b*y = c crossing the data extent
    const pts: [number, number][] = [];
    if (Math.abs(line.b) > 1e-12) {
      for (const x of [ext.xmin, ext.xmax]) {
        pts.push([x, (line.c - line.a * x) / line.b]);
      }
    } else {
      for (const y of [ext.ymin, ext.ymax]) {
        pts.push([line.c / line.a, y]);
      }
    }
    ctx.strokeStyle = "#333333";
    ctx.lineWidth = 1.5;
    ctx.setLineDash([6, 4]);
    ctx.beginPath();
    ctx.moveTo(...scale.toPx(pts[0][0], pts[0][1]));
    ctx.lineTo(...scale.toPx(pts[1][0], pts[1][1]));
    ctx.stroke();
    ctx.setLineDash([]);
  }

  private drawLasso(ctx: CanvasRenderingContext2D, scale: ReturnType<typeof makeScale>): void {
    ctx.strokeStyle = "#555555";
    ctx.lineWidth = 1;
    ctx.beginPath();
    ctx.moveTo(...scale.toPx(this.lassoPath[0][0], this.lassoPath[0][1]));
    for (const [x, y] of this.lassoPath.slice(1)) {
      ctx.lineTo(...scale.toPx(x, y));
    }
    ctx.closePath();
    ctx.stroke();
  }
}
