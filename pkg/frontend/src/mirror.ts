// JSON-mirror population parsing. The UI consumes only this mirror and the
// server's JSON replies; the binary format stays single-sourced in the
// backend. Scalars arrive as decimal strings so both precisions round-trip
// exactly; parsing goes through Number(), which is correctly rounded.

import { from6d, ScoringError } from "./scorer.js";
import { Action, Population, Vec3 } from "./types.js";

export class MirrorError extends Error {}

const FORMAT_TAG = "kdpe-population";
const ACTION_DIM = 10;

function asFinite(raw: unknown, where: string): number {
  if (typeof raw !== "string" && typeof raw !== "number") {
    throw new MirrorError(`${where}: scalar must be a string or number`);
  }
  // Number("nan") is NaN and Number("inf")/"Infinity" are non-finite, so a
  // single isFinite check covers every rejected spelling.
  const value = typeof raw === "number" ? raw : Number(raw);
  if (!Number.isFinite(value)) {
    throw new MirrorError(`${where}: non-finite scalar ${JSON.stringify(raw)}`);
  }
  return value;
}

function parseAction(row: unknown, where: string): Action {
  if (!Array.isArray(row) || row.length !== ACTION_DIM) {
    throw new MirrorError(`${where}: action needs ${ACTION_DIM} scalars`);
  }
  const s = row.map((v, i) => asFinite(v, `${where}[${i}]`));
  const position: Vec3 = [s[0], s[1], s[2]];
  try {
    return { position, rotation: from6d(s.slice(3, 9)), gripper: s[9] };
  } catch (e) {
    if (e instanceof ScoringError) {
      throw new MirrorError(`${where}: ${e.message}`);
    }
    throw e;
  }
}

/** Parse a mirror document (already JSON-decoded). */
export function parsePopulationDoc(doc: unknown): Population {
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    throw new MirrorError("population document must be a JSON object");
  }
  const d = doc as Record<string, unknown>;
  if (d.format !== FORMAT_TAG) {
    throw new MirrorError(`format tag must be ${JSON.stringify(FORMAT_TAG)}`);
  }
  if (d.version !== 1) {
    throw new MirrorError(`unsupported version ${JSON.stringify(d.version)}`);
  }
  const precision = d.precision;
  if (precision !== "f64" && precision !== "f32") {
    throw new MirrorError(`unknown precision ${JSON.stringify(precision)}`);
  }
  const n = d.n, t = d.t;
  if (!Number.isInteger(n) || !Number.isInteger(t)
      || (n as number) < 1 || (t as number) < 1) {
    throw new MirrorError("n and t must be positive integers");
  }
  if (d.d !== ACTION_DIM) {
    throw new MirrorError(`action dimension must be ${ACTION_DIM}`);
  }
  const observationId = typeof d.observation_id === "string"
    ? d.observation_id : "";
  const trajectories = d.trajectories;
  if (!Array.isArray(trajectories) || trajectories.length !== n) {
    throw new MirrorError(`expected ${n} trajectories`);
  }
  const actions: Action[][] = [];
  const payloads: (string | null)[] = [];
  trajectories.forEach((traj, i) => {
    if (typeof traj !== "object" || traj === null) {
      throw new MirrorError(`trajectory ${i} must be an object`);
    }
    const rows = (traj as Record<string, unknown>).actions;
    if (!Array.isArray(rows) || rows.length !== t) {
      throw new MirrorError(`trajectory ${i}: expected ${t} actions`);
    }
    actions.push(rows.map((row, k) => parseAction(row, `trajectory ${i} action ${k}`)));
    const payload = (traj as Record<string, unknown>).payload_b64;
    payloads.push(typeof payload === "string" ? payload : null);
  });
  return {
    n: n as number,
    t: t as number,
    observationId,
    precision,
    actions,
    payloads,
  };
}

/** Parse mirror JSON text. */
export function parsePopulation(text: string): Population {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch (e) {
    throw new MirrorError(`not valid JSON: ${(e as Error).message}`);
  }
  return parsePopulationDoc(doc);
}
