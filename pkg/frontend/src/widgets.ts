/**
 * Small render helpers: error-field raster, SVG tag-treemap, training
 * progress line chart, confusion matrix table, delta-recall table.
 */

import type { CompareDoc, ErrorFieldDoc, ReportDoc, TreemapDoc } from "./api.js";

/** Diverging blue -> white -> red, the error-rate color ramp. */
export function errorColor(value: number): [number, number, number] {
  const v = Math.min(Math.max(value, 0), 1);
  if (v <= 0.5) {
    const t = v / 0.5;
    return [31 + (255 - 31) * t, 119 + (255 - 119) * t, 180 + (255 - 180) * t];
  }
  const t = (v - 0.5) / 0.5;
  return [255 + (214 - 255) * t, 255 + (39 - 255) * t, 255 + (40 - 255) * t];
}

/** Paint an error field onto a canvas with confidence as alpha, samples as dots. */
export function renderHeatmap(canvas: HTMLCanvasElement, field: ErrorFieldDoc): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.fillStyle = "#FFFFFF";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  const cellW = canvas.width / field.width;
  const cellH = canvas.height / field.height;
  for (let i = 0; i < field.height; i++) {
    for (let j = 0; j < field.width; j++) {
      const idx = i * field.width + j;
      const conf = field.confidence[idx];
      if (conf <= 0) continue;
      const [r, g, b] = errorColor(field.values[idx]);
      ctx.fillStyle = `rgba(${r | 0},${g | 0},${b | 0},${conf.toFixed(3)})`;
      // row i at normalized y = i/(H-1); canvas y grows downward
      const y = canvas.height - (i / (field.height - 1)) * canvas.height;
      const x = (j / (field.width - 1)) * canvas.width;
      ctx.fillRect(x - cellW / 2, y - cellH / 2, cellW, cellH);
    }
  }
  const [xmin, ymin, xmax, ymax] = field.bbox;
  for (const s of field.samples) {
    const nx = (s.x - xmin) / (xmax - xmin);
    const ny = (s.y - ymin) / (ymax - ymin);
    ctx.fillStyle = s.correct ? "#1F77B4" : "#D62728";
    ctx.beginPath();
    ctx.arc(nx * canvas.width, canvas.height - ny * canvas.height, 2.5, 0, Math.PI * 2);
    ctx.fill();
  }
}

const CELL_FILLS = ["#EFF3F8", "#E4EEE0", "#F8EFE4", "#F0E4F0", "#E0ECEF", "#F6F6E0"];

/** Build an SVG element for a tag-treemap layout document. */
export function renderTreemap(doc: TreemapDoc, width = 420, height = 420): SVGSVGElement {
  const svgNs = "http://www.w3.org/2000/svg";
  const svg = document.createElementNS(svgNs, "svg");
  svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
  svg.setAttribute("width", String(width));
  svg.setAttribute("height", String(height));
  const sx = width / doc.root.w;
  const sy = height / doc.root.h;
  doc.cells.forEach((cell, idx) => {
    const g = document.createElementNS(svgNs, "g");
    const rect = document.createElementNS(svgNs, "rect");
    const x = (cell.rect.x - doc.root.x) * sx;
    const y = (cell.rect.y - doc.root.y) * sy;
    const w = cell.rect.w * sx;
    const h = cell.rect.h * sy;
    rect.setAttribute("x", x.toFixed(1));
    rect.setAttribute("y", y.toFixed(1));
    rect.setAttribute("width", w.toFixed(1));
    rect.setAttribute("height", h.toFixed(1));
    rect.setAttribute("fill", CELL_FILLS[idx % CELL_FILLS.length]);
    rect.setAttribute("stroke", "#666");
    g.appendChild(rect);
    const title = document.createElementNS(svgNs, "text");
    title.setAttribute("x", (x + 4).toFixed(1));
    title.setAttribute("y", (y + 14).toFixed(1));
    title.setAttribute("font-size", "12");
    title.setAttribute("font-weight", "bold");
    title.textContent = `${cell.name} (${cell.weight})`;
    g.appendChild(title);
    let lineY = y + 30;
    cell.stats.entries.forEach((entry, ti) => {
      const size = 8 + 10 * (cell.tag_sizes[ti] ?? 0.5);
      if (lineY + size > y + h) return;
      const tag = document.createElementNS(svgNs, "text");
      tag.setAttribute("x", (x + 6).toFixed(1));
      tag.setAttribute("y", (lineY + size).toFixed(1));
      tag.setAttribute("font-size", size.toFixed(1));
      tag.setAttribute("fill", "#333");
      tag.textContent = `${entry.term} (${entry.count})`;
      g.appendChild(tag);
      lineY += size + 3;
    });
    svg.appendChild(g);
  });
  return svg;
}

export interface ProgressPoint {
  epoch: number;
  loss: number;
  progress: number;
}

/** Training progress chart: loss curve plus a fill showing % complete. */
export function renderProgressChart(canvas: HTMLCanvasElement, points: ProgressPoint[]): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.fillStyle = "#FFFFFF";
  ctx.fillRect(0, 0, width, height);
  if (points.length === 0) return;
  const fraction = points[points.length - 1].progress;
  ctx.fillStyle = "#E8F2E1";
  ctx.fillRect(0, 0, width * fraction, height);
  const losses = points.map((p) => p.loss);
  const maxLoss = Math.max(...losses);
  const minLoss = Math.min(...losses);
  const span = maxLoss > minLoss ? maxLoss - minLoss : 1;
  ctx.strokeStyle = "#1F77B4";
  ctx.lineWidth = 2;
  ctx.beginPath();
  points.forEach((p, i) => {
    const x = (i / Math.max(points.length - 1, 1)) * (width - 20) + 10;
    const y = height - 15 - ((p.loss - minLoss) / span) * (height - 30);
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  });
  ctx.stroke();
  ctx.fillStyle = "#333";
  ctx.font = "11px sans-serif";
  ctx.fillText(`${Math.round(fraction * 100)}%`, width - 38, 14);
}

export function renderConfusion(report: ReportDoc): HTMLTableElement {
  const table = document.createElement("table");
  table.className = "confusion";
  const head = table.insertRow();
  head.insertCell().textContent = "true \\ pred";
  for (const lab of report.labels) head.insertCell().textContent = lab;
  report.confusion.forEach((row, i) => {
    const tr = table.insertRow();
    tr.insertCell().textContent = report.labels[i];
    row.forEach((count, j) => {
      const cell = tr.insertCell();
      cell.textContent = String(count);
      if (i === j) cell.className = "diag";
    });
  });
  return table;
}

function deltaGlyph(value: number): string {
  if (value > 0) return `▲ ${value.toFixed(3)}`;
  if (value < 0) return `▼ ${Math.abs(value).toFixed(3)}`;
  return "0.000";
}

export function renderCompareTable(doc: CompareDoc): HTMLTableElement {
  const table = document.createElement("table");
  table.className = "compare";
  const head = table.insertRow();
  for (const title of ["Class", "test", "train", "recall"]) {
    head.insertCell().textContent = title;
  }
  for (const d of doc.deltas) {
    head.insertCell().textContent = `${d.name} train`;
    head.insertCell().textContent = `${d.name} Δ-recall`;
  }
  const totalTest = Object.values(doc.baseline.test_counts).reduce((a, b) => a + b, 0);
  const totalTrain = Object.values(doc.baseline.train_class_counts).reduce((a, b) => a + b, 0);
  const overall = table.insertRow();
  overall.insertCell().textContent = "Overall";
  overall.insertCell().textContent = String(totalTest);
  overall.insertCell().textContent = String(totalTrain);
  overall.insertCell().textContent = doc.baseline.overall_recall.toFixed(3);
  for (const d of doc.deltas) {
    overall.insertCell().textContent = "";
    const cell = overall.insertCell();
    cell.textContent = deltaGlyph(d.overall_delta);
    cell.className = d.overall_delta >= 0 ? "up" : "down";
  }
  for (const lab of doc.baseline.labels) {
    const tr = table.insertRow();
    tr.insertCell().textContent = lab;
    tr.insertCell().textContent = String(doc.baseline.test_counts[lab] ?? 0);
    tr.insertCell().textContent = String(doc.baseline.train_class_counts[lab] ?? 0);
    tr.insertCell().textContent = (doc.baseline.recalls[lab] ?? 0).toFixed(3);
    for (const d of doc.deltas) {
      const plus = d.train_deltas[lab] ?? 0;
      tr.insertCell().textContent = plus ? `+${plus}` : "";
      const cell = tr.insertCell();
      const value = d.deltas[lab] ?? 0;
      cell.textContent = deltaGlyph(value);
      cell.className = value >= 0 ? "up" : "down";
    }
  }
  return table;
}
