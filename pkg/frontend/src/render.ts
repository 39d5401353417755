// Canvas rendering: heatmap raster, posed-frame glyphs, probe indicator.
// Drawing goes through a minimal context interface so the geometry is
// testable without a browser canvas.

import { HeatmapResultJson, Population } from "./types.js";

export interface Draw2D {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  beginPath(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  rect(x: number, y: number, w: number, h: number): void;
  fill(): void;
  stroke(): void;
}

/** World rectangle -> canvas pixels, y flipped so +y points up. */
export interface Viewport {
  xMin: number;
  xMax: number;
  yMin: number;
  yMax: number;
  width: number;
  height: number;
}

export function worldToCanvas(vp: Viewport, x: number,
                              y: number): [number, number] {
  const px = ((x - vp.xMin) / (vp.xMax - vp.xMin)) * vp.width;
  const py = (1 - (y - vp.yMin) / (vp.yMax - vp.yMin)) * vp.height;
  return [px, py];
}

export function canvasToWorld(vp: Viewport, px: number,
                              py: number): [number, number] {
  const x = vp.xMin + (px / vp.width) * (vp.xMax - vp.xMin);
  const y = vp.yMin + (1 - py / vp.height) * (vp.yMax - vp.yMin);
  return [x, y];
}

// Compact viridis approximation; enough stops that the lerp error is
// invisible at heatmap scale.
const VIRIDIS: [number, number, number][] = [
  [68, 1, 84], [71, 44, 122], [59, 81, 139], [44, 113, 142],
  [33, 144, 141], [39, 173, 129], [92, 200, 99], [170, 220, 50],
  [253, 231, 37],
];

/** Palette color for t in [0, 1]; out-of-range and NaN clamp to the ends. */
export function colormap(t: number): [number, number, number] {
  if (!Number.isFinite(t) || t <= 0) return [...VIRIDIS[0]];
  if (t >= 1) return [...VIRIDIS[VIRIDIS.length - 1]];
  const pos = t * (VIRIDIS.length - 1);
  const i = Math.floor(pos);
  const f = pos - i;
  const a = VIRIDIS[i];
  const b = VIRIDIS[i + 1];
  return [
    Math.round(a[0] + f * (b[0] - a[0])),
    Math.round(a[1] + f * (b[1] - a[1])),
    Math.round(a[2] + f * (b[2] - a[2])),
  ];
}

/**
 * RGBA pixels for a heatmap grid, one pixel per cell, row 0 at the TOP of
 * the image. Grid rows count up from y_min, so the raster flips them.
 */
export function rasterizeHeatmap(grid: HeatmapResultJson,
                                 range: { min: number; max: number },
                                 ): Uint8ClampedArray<ArrayBuffer> {
  const { rows, cols, values } = grid;
  const span = range.max - range.min;
  const out = new Uint8ClampedArray(rows * cols * 4);
  for (let row = 0; row < rows; row++) {
    const imageRow = rows - 1 - row;
    for (let col = 0; col < cols; col++) {
      const v = values[row * cols + col];
      const t = span > 0 ? (v - range.min) / span : 0.5;
      const [r, g, b] = colormap(t);
      const o = (imageRow * cols + col) * 4;
      out[o] = r;
      out[o + 1] = g;
      out[o + 2] = b;
      out[o + 3] = 255;
    }
  }
  return out;
}

export const OPEN_COLOR = "#2e9e4f";   // gripper open
export const CLOSED_COLOR = "#d43a3a"; // gripper closed
const HIGHLIGHT_COLOR = "#ffffff";

export interface FrameGlyph {
  x: number;
  y: number;
  headingX: number; // unit in-plane heading (first rotation column)
  headingY: number;
  open: boolean;
  selected: boolean;
}

/**
 * Glyph geometry for one population step projected on the grid plane.
 * planeAxes picks the two world axes shown (0=x, 1=y, 2=z).
 */
export function frameGlyphs(pop: Population, step: number,
                            selectedIndex: number | null,
                            planeAxes: [number, number] = [0, 1],
                            ): FrameGlyph[] {
  const [ax, ay] = planeAxes;
  return pop.actions.map((traj, i) => {
    const action = traj[step];
    // First rotation column is the tool x axis; its in-plane part gives the
    // heading. Column j element i of a row-major Mat3 is m[3 * i + j].
    let hx = action.rotation[3 * ax + 0];
    let hy = action.rotation[3 * ay + 0];
    const n = Math.hypot(hx, hy);
    if (n > 1e-12) {
      hx /= n;
      hy /= n;
    } else {
      hx = 1;
      hy = 0;
    }
    return {
      x: action.position[ax],
      y: action.position[ay],
      headingX: hx,
      headingY: hy,
      open: action.gripper > 0,
      selected: i === selectedIndex,
    };
  });
}

export function drawFrames(ctx: Draw2D, vp: Viewport,
                           glyphs: FrameGlyph[]): void {
  const radius = Math.max(3, vp.width * 0.012);
  for (const glyph of glyphs) {
    const [px, py] = worldToCanvas(vp, glyph.x, glyph.y);
    const tipX = px + glyph.headingX * radius * 2.2;
    const tipY = py - glyph.headingY * radius * 2.2;
    ctx.strokeStyle = glyph.open ? OPEN_COLOR : CLOSED_COLOR;
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.moveTo(px, py);
    ctx.lineTo(tipX, tipY);
    ctx.stroke();
    ctx.fillStyle = glyph.open ? OPEN_COLOR : CLOSED_COLOR;
    ctx.beginPath();
    ctx.arc(px, py, radius, 0, 2 * Math.PI);
    ctx.fill();
    if (glyph.selected) {
      ctx.strokeStyle = HIGHLIGHT_COLOR;
      ctx.lineWidth = 2.5;
      ctx.beginPath();
      ctx.arc(px, py, radius + 3, 0, 2 * Math.PI);
      ctx.stroke();
    }
  }
}

/** The probe indicator: a white square with a heading tick. */
export function drawProbe(ctx: Draw2D, vp: Viewport, x: number, y: number,
                          angle: number): void {
  const [px, py] = worldToCanvas(vp, x, y);
  const half = Math.max(5, vp.width * 0.015);
  ctx.strokeStyle = "#ffffff";
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.rect(px - half, py - half, 2 * half, 2 * half);
  ctx.stroke();
  ctx.beginPath();
  ctx.moveTo(px, py);
  ctx.lineTo(px + Math.cos(angle) * half * 2, py - Math.sin(angle) * half * 2);
  ctx.stroke();
}
