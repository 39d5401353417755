// Embedded scorer for JSON-mirror populations: the same manifold kernel,
// density estimates, and selection rules the backend implements, so the UI
// stays fully interactive without a server. When a server is connected its
// replies are authoritative; this module exists for the offline path and
// must agree with the backend well below any visible difference (the tests
// pin it to frozen CLI outputs).

import {
  Action,
  BandwidthsJson,
  DEFAULT_BANDWIDTHS,
  DensityReportJson,
  HeatmapRequestJson,
  HeatmapResultJson,
  Mat3,
  MethodName,
  Population,
  Vec3,
} from "./types.js";

const SMALL_ANGLE = 1e-7;
const DEGENERATE_EPS = 1e-8;

// plane name -> [first in-plane axis, second in-plane axis, normal axis]
const PLANES: Record<string, [number, number, number]> = {
  xy: [0, 1, 2],
  xz: [0, 2, 1],
  yz: [1, 2, 0],
};

export class ScoringError extends Error {}

function norm3(x: number, y: number, z: number): number {
  return Math.sqrt(x * x + y * y + z * z);
}

/**
 * Rotation matrix from the 6D two-column encoding (Gram-Schmidt).
 *
 * Scale invariant: both columns are normalized before the degeneracy
 * checks, matching the backend decoder.
 */
export function from6d(r6: ArrayLike<number>): Mat3 {
  if (r6.length !== 6) throw new ScoringError("rotation encoding needs 6 scalars");
  const n1 = norm3(r6[0], r6[1], r6[2]);
  const n2 = norm3(r6[3], r6[4], r6[5]);
  if (!Number.isFinite(n1) || !Number.isFinite(n2)
      || n1 < DEGENERATE_EPS || n2 < DEGENERATE_EPS) {
    throw new ScoringError("near-zero rotation column");
  }
  const b1x = r6[0] / n1, b1y = r6[1] / n1, b1z = r6[2] / n1;
  const u2x = r6[3] / n2, u2y = r6[4] / n2, u2z = r6[5] / n2;
  const cx = b1y * u2z - b1z * u2y;
  const cy = b1z * u2x - b1x * u2z;
  const cz = b1x * u2y - b1y * u2x;
  if (norm3(cx, cy, cz) < DEGENERATE_EPS) {
    throw new ScoringError("rotation columns are parallel");
  }
  const dot = b1x * u2x + b1y * u2y + b1z * u2z;
  let v2x = u2x - dot * b1x, v2y = u2y - dot * b1y, v2z = u2z - dot * b1z;
  const nv = norm3(v2x, v2y, v2z);
  v2x /= nv; v2y /= nv; v2z /= nv;
  const b3x = b1y * v2z - b1z * v2y;
  const b3y = b1z * v2x - b1x * v2z;
  const b3z = b1x * v2y - b1y * v2x;
  // columns are b1, v2, b3
  return Float64Array.of(b1x, v2x, b3x, b1y, v2y, b3y, b1z, v2z, b3z);
}

/** Rodrigues' formula; series below SMALL_ANGLE. */
export function expmap(w: Vec3): Mat3 {
  const theta = norm3(w[0], w[1], w[2]);
  let ax = w[0], ay = w[1], az = w[2];
  let s: number, c1: number; // sin(theta), 1 - cos(theta), both over axis scale
  if (theta < SMALL_ANGLE) {
    s = 1.0;
    c1 = 0.5;
  } else {
    ax /= theta; ay /= theta; az /= theta;
    s = Math.sin(theta);
    c1 = 1.0 - Math.cos(theta);
  }
  // R = I + s * K + c1 * K^2 with K = skew(axis) (or skew(w) in the series)
  const kxx = -(az * az + ay * ay), kyy = -(az * az + ax * ax),
        kzz = -(ay * ay + ax * ax);
  return Float64Array.of(
    1 + c1 * kxx, -s * az + c1 * ax * ay, s * ay + c1 * ax * az,
    s * az + c1 * ax * ay, 1 + c1 * kyy, -s * ax + c1 * ay * az,
    -s * ay + c1 * ax * az, s * ax + c1 * ay * az, 1 + c1 * kzz,
  );
}

/** Minimal rotation angle between two matrices, in [0, pi]. */
export function geodesic(a: Mat3, b: Mat3): number {
  // rel = a^T b; only its trace and skew part are needed for the angle.
  const r00 = a[0] * b[0] + a[3] * b[3] + a[6] * b[6];
  const r11 = a[1] * b[1] + a[4] * b[4] + a[7] * b[7];
  const r22 = a[2] * b[2] + a[5] * b[5] + a[8] * b[8];
  const r21 = a[2] * b[1] + a[5] * b[4] + a[8] * b[7];
  const r12 = a[1] * b[2] + a[4] * b[5] + a[7] * b[8];
  const r02 = a[0] * b[2] + a[3] * b[5] + a[6] * b[8];
  const r20 = a[2] * b[0] + a[5] * b[3] + a[8] * b[6];
  const r10 = a[1] * b[0] + a[4] * b[3] + a[7] * b[6];
  const r01 = a[0] * b[1] + a[3] * b[4] + a[6] * b[7];
  const wx = (r21 - r12) * 0.5;
  const wy = (r02 - r20) * 0.5;
  const wz = (r10 - r01) * 0.5;
  const s = norm3(wx, wy, wz);
  const c = (r00 + r11 + r22 - 1.0) * 0.5;
  return Math.atan2(s, c);
}

const LOG_TWO_PI = Math.log(2 * Math.PI);

/** log of (2 pi)^(-7/2) |H|^(-1/2) for the diagonal bandwidth matrix. */
export function logNormalizer(h: BandwidthsJson): number {
  return -3.5 * LOG_TWO_PI
    - 3 * Math.log(h.sigma_pos)
    - 3 * Math.log(h.sigma_rot)
    - Math.log(h.sigma_grip);
}

export function logKernel(a: Action, b: Action, h: BandwidthsJson,
                          includeNormalizer = true): number {
  const dx = a.position[0] - b.position[0];
  const dy = a.position[1] - b.position[1];
  const dz = a.position[2] - b.position[2];
  const theta = geodesic(b.rotation, a.rotation);
  const dg = a.gripper - b.gripper;
  const quad = (dx * dx + dy * dy + dz * dz) / (h.sigma_pos * h.sigma_pos)
    + (theta * theta) / (h.sigma_rot * h.sigma_rot)
    + (dg * dg) / (h.sigma_grip * h.sigma_grip);
  return -0.5 * quad + (includeNormalizer ? logNormalizer(h) : 0);
}

export function logsumexp(values: ArrayLike<number>): number {
  if (values.length === 0) throw new ScoringError("logsumexp of nothing");
  let max = -Infinity;
  for (let i = 0; i < values.length; i++) {
    if (values[i] > max) max = values[i];
  }
  if (max === -Infinity) return -Infinity;
  let sum = 0;
  for (let i = 0; i < values.length; i++) sum += Math.exp(values[i] - max);
  return max + Math.log(sum);
}

/** Last action inside an 8-step execution horizon. */
export function defaultScoredStep(t: number, executionHorizon = 8): number {
  return Math.min(executionHorizon, t) - 1;
}

export function resolveStep(pop: Population, step: number | null): number {
  if (step === null) return defaultScoredStep(pop.t);
  if (!Number.isInteger(step) || step < 0 || step >= pop.t) {
    throw new ScoringError(`scored step ${step} outside [0, ${pop.t})`);
  }
  return step;
}

function kernelRow(query: Action, support: Action[], h: BandwidthsJson,
                   out: Float64Array): void {
  for (let j = 0; j < support.length; j++) {
    out[j] = logKernel(query, support[j], h);
  }
}

/** Per-trajectory population log density at one step. */
export function scoreStep(pop: Population, step: number,
                          h: BandwidthsJson): Float64Array {
  const support = pop.actions.map((traj) => traj[step]);
  const scores = new Float64Array(pop.n);
  const row = new Float64Array(pop.n);
  const logN = Math.log(pop.n);
  for (let i = 0; i < pop.n; i++) {
    kernelRow(support[i], support, h, row);
    scores[i] = logsumexp(row) - logN;
  }
  return scores;
}

/**
 * Trajectory scores under the first-order Markov factorization: the first
 * step's marginal density plus, per transition, the log ratio of the joint
 * (previous, current) estimate to the previous marginal.
 */
export function trScores(pop: Population, h: BandwidthsJson): Float64Array {
  const logN = Math.log(pop.n);
  const n = pop.n;
  const support0 = pop.actions.map((s) => s[0]);
  let prev: Float64Array[] = pop.actions.map((traj) => {
    const row = new Float64Array(n);
    kernelRow(traj[0], support0, h, row);
    return row;
  });
  const scores = new Float64Array(n);
  for (let i = 0; i < n; i++) scores[i] = logsumexp(prev[i]) - logN;

  const joint = new Float64Array(n);
  for (let step = 1; step < pop.t; step++) {
    const supportStep = pop.actions.map((s) => s[step]);
    const cur = pop.actions.map((traj) => {
      const row = new Float64Array(n);
      kernelRow(traj[step], supportStep, h, row);
      return row;
    });
    for (let i = 0; i < n; i++) {
      for (let j = 0; j < n; j++) joint[j] = prev[i][j] + cur[i][j];
      scores[i] += logsumexp(joint) - logsumexp(prev[i]);
    }
    prev = cur;
  }
  return scores;
}

// Seeded generator for the uniform baseline (splitmix64). This is the UI's
// own stream: a connected server's uniform pick is authoritative and may
// differ for the same seed.
export function seededIndex(seed: number, n: number): number {
  let x = BigInt(Math.floor(seed)) & 0xffffffffffffffffn;
  x = (x + 0x9e3779b97f4a7c15n) & 0xffffffffffffffffn;
  let z = x;
  z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & 0xffffffffffffffffn;
  z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & 0xffffffffffffffffn;
  z = z ^ (z >> 31n);
  return Number(z % BigInt(n));
}

function argbest(scores: Float64Array, sign: 1 | -1): number {
  let best = 0;
  for (let i = 1; i < scores.length; i++) {
    if (sign * scores[i] > sign * scores[best]) best = i;
  }
  return best;
}

export interface SelectOptions {
  method?: MethodName;
  step?: number | null;
  seed?: number;
  bandwidths?: BandwidthsJson;
}

/** Best-of-N selection; mirrors the backend's DensityReport shape. */
export function selectEmbedded(pop: Population,
                               opts: SelectOptions = {}): DensityReportJson {
  const method = opts.method ?? "kdpe";
  const h = opts.bandwidths ?? DEFAULT_BANDWIDTHS;
  const seed = opts.seed ?? 0;
  let scores: Float64Array;
  let scoredStep: number;
  if (method === "tr_kdpe") {
    scores = trScores(pop, h);
    scoredStep = -1;
  } else {
    scoredStep = resolveStep(pop, opts.step ?? null);
    scores = scoreStep(pop, scoredStep, h);
  }
  let index: number;
  if (method === "kdpe_ood") index = argbest(scores, -1);
  else if (method === "uniform") index = seededIndex(seed, pop.n);
  else index = argbest(scores, 1);
  return {
    log_densities: Array.from(scores),
    selected_index: index,
    method,
    scored_step: scoredStep,
    bandwidths: { ...h },
  };
}

export function defaultHeatmapRequest(
    overrides: Partial<HeatmapRequestJson> = {}): HeatmapRequestJson {
  return {
    x_min: -0.25, x_max: 0.25, y_min: -0.25, y_max: 0.25,
    resolution_x: 64, resolution_y: 64,
    angle: 0, gripper: 1, plane: "xy", offset: 0, step: null,
    bandwidths: { ...DEFAULT_BANDWIDTHS },
    ...overrides,
  };
}

/**
 * Probe sweep over one plane; matches the backend grid exactly: cells are
 * probed at their centers and values are row-major from y_min.
 *
 * The probe rotation and gripper are constant across the grid, so their
 * kernel terms are computed once per support action and only the position
 * term varies per cell.
 */
export function heatmapEmbedded(pop: Population,
                                req: HeatmapRequestJson): HeatmapResultJson {
  const plane = PLANES[req.plane];
  if (!plane) throw new ScoringError(`unknown plane ${req.plane}`);
  if (req.resolution_x < 2 || req.resolution_y < 2) {
    throw new ScoringError("heatmap resolution must be at least 2 per axis");
  }
  if (!(req.x_min < req.x_max) || !(req.y_min < req.y_max)) {
    throw new ScoringError("heatmap extents must satisfy min < max");
  }
  for (const v of [req.angle, req.gripper, req.offset]) {
    if (!Number.isFinite(v)) throw new ScoringError("probe values must be finite");
  }
  const [axX, axY, axN] = plane;
  const step = resolveStep(pop, req.step);
  const h = req.bandwidths;
  const support = pop.actions.map((traj) => traj[step]);
  const n = pop.n;

  const axis: Vec3 = [0, 0, 0];
  axis[axN] = 1;
  const probeRot = expmap([axis[0] * req.angle, axis[1] * req.angle,
                           axis[2] * req.angle]);
  const logC = logNormalizer(h);
  const fixed = new Float64Array(n); // rotation + gripper + normalizer terms
  for (let j = 0; j < n; j++) {
    const theta = geodesic(support[j].rotation, probeRot);
    const dg = req.gripper - support[j].gripper;
    fixed[j] = logC - 0.5 * ((theta * theta) / (h.sigma_rot * h.sigma_rot)
      + (dg * dg) / (h.sigma_grip * h.sigma_grip));
  }

  const dx = (req.x_max - req.x_min) / req.resolution_x;
  const dy = (req.y_max - req.y_min) / req.resolution_y;
  const logN = Math.log(n);
  const invPos2 = 1 / (h.sigma_pos * h.sigma_pos);
  const values = new Array<number>(req.resolution_x * req.resolution_y);
  const row = new Float64Array(n);
  const probe: Vec3 = [0, 0, 0];
  probe[axN] = req.offset;
  let peak = 0;
  for (let iy = 0; iy < req.resolution_y; iy++) {
    probe[axY] = req.y_min + dy * (iy + 0.5);
    for (let ix = 0; ix < req.resolution_x; ix++) {
      probe[axX] = req.x_min + dx * (ix + 0.5);
      for (let j = 0; j < n; j++) {
        const px = probe[0] - support[j].position[0];
        const py = probe[1] - support[j].position[1];
        const pz = probe[2] - support[j].position[2];
        row[j] = fixed[j] - 0.5 * (px * px + py * py + pz * pz) * invPos2;
      }
      const cell = iy * req.resolution_x + ix;
      values[cell] = logsumexp(row) - logN;
      if (values[cell] > values[peak]) peak = cell;
    }
  }

  const peakRow = Math.floor(peak / req.resolution_x);
  const peakCol = peak % req.resolution_x;
  return {
    request: { ...req, bandwidths: { ...h } },
    scored_step: step,
    rows: req.resolution_y,
    cols: req.resolution_x,
    values,
    argmax: {
      row: peakRow,
      col: peakCol,
      x: req.x_min + dx * (peakCol + 0.5),
      y: req.y_min + dy * (peakRow + 0.5),
      log_density: values[peak],
    },
  };
}
