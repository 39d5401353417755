// Session state for the explorer: the loaded population, the current
// bandwidths and probe pose, the latest report and heatmap, and the
// freshness flag the stale-data badge renders. All updates are
// pure-function style on a single mutable holder so the render loop has
// one source of truth.

import {
  BandwidthsJson,
  DEFAULT_BANDWIDTHS,
  DensityReportJson,
  HeatmapResultJson,
  MethodName,
  Population,
} from "./types.js";

export interface ProbePose {
  x: number;
  y: number;
  angle: number;   // radians, wrapped to [0, 2 pi)
  gripper: number; // +1 open, -1 closed
}

export interface SliderRange {
  min: number;
  max: number;
}

// Documented UI slider ranges. The kernel only needs positive values; these
// bounds keep the log-scale sliders over the regimes worth exploring.
export const SLIDER_RANGES: Record<keyof BandwidthsJson, SliderRange> = {
  sigma_pos: { min: 1e-4, max: 1.0 },
  sigma_rot: { min: 1e-3, max: Math.PI },
  sigma_grip: { min: 1e-3, max: 10.0 },
};

export type ColormapMode = "per-population" | "global";

export interface SessionState {
  population: Population | null;
  populationDoc: unknown;          // mirror document, forwarded to the server
  bandwidths: BandwidthsJson;
  probe: ProbePose;
  method: MethodName;
  step: number | null;
  report: DensityReportJson | null;
  heatmap: HeatmapResultJson | null;
  stale: boolean;
  staleReason: string | null;
  colormapMode: ColormapMode;
  // Running extrema across every grid seen this session; the global
  // colormap mode normalizes against these instead of the current grid.
  globalRange: { min: number; max: number } | null;
}

export function initialState(): SessionState {
  return {
    population: null,
    populationDoc: null,
    bandwidths: { ...DEFAULT_BANDWIDTHS },
    probe: { x: 0, y: 0, angle: 0, gripper: 1 },
    method: "kdpe",
    step: null,
    report: null,
    heatmap: null,
    stale: false,
    staleReason: null,
    colormapMode: "per-population",
    globalRange: null,
  };
}

/** Clamp a slider value into its documented range; junk falls to min. */
export function clampBandwidth(value: number, range: SliderRange): number {
  if (Number.isNaN(value) || value <= 0) return range.min;
  return Math.min(Math.max(value, range.min), range.max);
}

export function setBandwidth(state: SessionState, key: keyof BandwidthsJson,
                             value: number): void {
  state.bandwidths = {
    ...state.bandwidths,
    [key]: clampBandwidth(value, SLIDER_RANGES[key]),
  };
}

export function wrapAngle(angle: number): number {
  if (!Number.isFinite(angle)) return 0;
  const twoPi = 2 * Math.PI;
  const wrapped = angle % twoPi;
  return wrapped < 0 ? wrapped + twoPi : wrapped;
}

export function setProbe(state: SessionState,
                         probe: Partial<ProbePose>): void {
  const next = { ...state.probe, ...probe };
  next.angle = wrapAngle(next.angle);
  next.gripper = next.gripper >= 0 ? 1 : -1;
  state.probe = next;
}

/** Install a newly loaded population; previous results no longer apply. */
export function setPopulation(state: SessionState, population: Population,
                              doc: unknown): void {
  state.population = population;
  state.populationDoc = doc;
  state.report = null;
  state.heatmap = null;
  state.stale = false;
  state.staleReason = null;
}

/** Fresh results arrived; clear any stale badge. */
export function applyResults(state: SessionState, report: DensityReportJson,
                             heatmap: HeatmapResultJson): void {
  state.report = report;
  state.heatmap = heatmap;
  state.stale = false;
  state.staleReason = null;
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of heatmap.values) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (lo <= hi) {
    state.globalRange = state.globalRange === null
      ? { min: lo, max: hi }
      : { min: Math.min(state.globalRange.min, lo),
          max: Math.max(state.globalRange.max, hi) };
  }
}

/** A request failed: keep the previous render, flag it as stale. */
export function markStale(state: SessionState, reason: string): void {
  state.stale = true;
  state.staleReason = reason;
}

/** The colormap range the current mode asks for. */
export function colormapRange(state: SessionState):
    { min: number; max: number } | null {
  if (state.colormapMode === "global" && state.globalRange !== null) {
    return { ...state.globalRange };
  }
  if (state.heatmap === null) return null;
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of state.heatmap.values) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  return lo <= hi ? { min: lo, max: hi } : null;
}

/**
 * Current bandwidths in the backend CLI's config-file schema, so a tuned
 * set drops straight into `--config`. Valid with or without a population.
 */
export function exportSettings(state: SessionState): string {
  const h = state.bandwidths;
  return JSON.stringify({
    sigma_pos: h.sigma_pos,
    sigma_rot: h.sigma_rot,
    sigma_grip: h.sigma_grip,
  }, null, 2) + "\n";
}
