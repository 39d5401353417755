import { readFileSync } from "node:fs";

import { parsePopulationDoc } from "../src/mirror.js";
import { Population } from "../src/types.js";

export function fixture<T = any>(name: string): T {
  const url = new URL(`./fixtures/${name}`, import.meta.url);
  return JSON.parse(readFileSync(url, "utf-8")) as T;
}

export function fixturePopulation(name: string): Population {
  return parsePopulationDoc(fixture(name));
}

/** |got - want| within tol, relative above magnitude 1, absolute below. */
export function closeRel(got: number, want: number, tol = 1e-9): boolean {
  return Math.abs(got - want) <= tol * Math.max(1, Math.abs(want));
}

export function allCloseRel(got: ArrayLike<number>, want: ArrayLike<number>,
                            tol = 1e-9): boolean {
  if (got.length !== want.length) return false;
  for (let i = 0; i < got.length; i++) {
    if (!closeRel(got[i], want[i], tol)) return false;
  }
  return true;
}
