/**
 * Client-side selection geometry. Used for drawing feedback and for
 * cross-checking the service's selection counts; the authoritative
 * selection always comes from POST /select.
 */

export interface Point {
  id: string;
  x: number;
  y: number;
}

export interface Line {
  a: number;
  b: number;
  c: number; // a*x + b*y = c
}

const ON_LINE_TOL = 1e-12;

/** Vertical division line through x = threshold. */
export function verticalLine(threshold: number): Line {
  return { a: 1, b: 0, c: threshold };
}

export function lineFromTwoPoints(p1: [number, number], p2: [number, number]): Line {
  const a = p2[1] - p1[1];
  const b = p1[0] - p2[0];
  const c = a * p1[0] + b * p1[1];
  if (a === 0 && b === 0) throw new Error("degenerate line: identical points");
  return { a, b, c };
}

export function sideOf(line: Line, x: number, y: number): "A" | "B" | "on" {
  const s = line.a * x + line.b * y - line.c;
  if (Math.abs(s) <= ON_LINE_TOL) return "on";
  return s < 0 ? "A" : "B";
}

/** Partition points by a division line: (side A, side B, on the line). */
export function partitionByLine(points: Point[], line: Line): [string[], string[], string[]] {
  const a: string[] = [];
  const b: string[] = [];
  const on: string[] = [];
  for (const p of points) {
    const side = sideOf(line, p.x, p.y);
    if (side === "A") a.push(p.id);
    else if (side === "B") b.push(p.id);
    else on.push(p.id);
  }
  return [a, b, on];
}

/** Even-odd rule; mirrors the service's polygon membership. */
export function pointInPolygon(x: number, y: number, vertices: [number, number][]): boolean {
  let inside = false;
  const n = vertices.length;
  for (let k = 0; k < n; k++) {
    const [x1, y1] = vertices[k];
    const [x2, y2] = vertices[(k + 1) % n];
    if (y1 > y !== y2 > y) {
      const xCross = ((x2 - x1) * (y - y1)) / (y2 - y1) + x1;
      if (x < xCross) inside = !inside;
    }
  }
  return inside;
}

/** Rectangle membership: lower/left edges inclusive, upper/right exclusive. */
export function pointInRect(
  x: number,
  y: number,
  x0: number,
  y0: number,
  x1: number,
  y1: number,
): boolean {
  return x0 <= x && x < x1 && y0 <= y && y < y1;
}

export interface Extent {
  xmin: number;
  xmax: number;
  ymin: number;
  ymax: number;
}

export function extentOf(xs: number[], ys: number[]): Extent {
  let xmin = Infinity;
  let xmax = -Infinity;
  let ymin = Infinity;
  let ymax = -Infinity;
  for (const v of xs) {
    if (v < xmin) xmin = v;
    if (v > xmax) xmax = v;
  }
  for (const v of ys) {
    if (v < ymin) ymin = v;
    if (v > ymax) ymax = v;
  }
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1;
  return { xmin, xmax, ymin, ymax };
}

/** Data -> canvas pixel transform (y flipped) with a fixed margin. */
export function makeScale(extent: Extent, width: number, height: number, margin = 20) {
  const sx = (width - 2 * margin) / (extent.xmax - extent.xmin);
  const sy = (height - 2 * margin) / (extent.ymax - extent.ymin);
  return {
    toPx(x: number, y: number): [number, number] {
      return [margin + (x - extent.xmin) * sx, height - margin - (y - extent.ymin) * sy];
    },
    toData(px: number, py: number): [number, number] {
      return [extent.xmin + (px - margin) / sx, extent.ymin + (height - margin - py) / sy];
    },
  };
}
