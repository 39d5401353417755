// Shared shapes. The snake_case interfaces mirror the backend's JSON
// protocol verbatim (population mirror, density reports, heatmap replies);
// camelCase types are UI-internal.

/** 3x3 rotation matrix, row-major, element (i, j) at index 3 * i + j. */
export type Mat3 = Float64Array;

export type Vec3 = [number, number, number];

export interface BandwidthsJson {
  sigma_pos: number;
  sigma_rot: number;
  sigma_grip: number;
}

export interface DensityReportJson {
  log_densities: number[];
  selected_index: number;
  method: string;
  scored_step: number;
  bandwidths: BandwidthsJson;
}

export interface HeatmapArgmax {
  row: number;
  col: number;
  x: number;
  y: number;
  log_density: number;
}

export interface HeatmapRequestJson {
  x_min: number;
  x_max: number;
  y_min: number;
  y_max: number;
  resolution_x: number;
  resolution_y: number;
  angle: number;
  gripper: number;
  plane: "xy" | "xz" | "yz";
  offset: number;
  step: number | null;
  bandwidths: BandwidthsJson;
}

export interface HeatmapResultJson {
  request: HeatmapRequestJson;
  scored_step: number;
  rows: number;
  cols: number;
  /** Row-major from y_min: values[row * cols + col]. */
  values: number[];
  argmax: HeatmapArgmax;
}

/** One end-effector command, rotation already decoded from its 6D columns. */
export interface Action {
  position: Vec3;
  rotation: Mat3;
  gripper: number;
}

export interface Population {
  n: number;
  t: number;
  observationId: string;
  precision: "f64" | "f32";
  /** actions[i][k] is trajectory i at step k. */
  actions: Action[][];
  /** Opaque per-trajectory payloads, kept as base64 (never decoded here). */
  payloads: (string | null)[];
}

export type MethodName = "kdpe" | "kdpe_ood" | "uniform" | "tr_kdpe";

export const METHODS: MethodName[] = ["kdpe", "kdpe_ood", "uniform", "tr_kdpe"];

export const DEFAULT_BANDWIDTHS: BandwidthsJson = {
  sigma_pos: 0.05,
  sigma_rot: 0.25,
  sigma_grip: 1.0,
};
