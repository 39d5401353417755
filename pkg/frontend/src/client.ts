// HTTP client for the backend's JSON facade, plus the latest-wins request
// gate that keeps slider drags from queueing up: at most one scoring
// request is in flight, and newer inputs supersede anything still waiting.

import {
  BandwidthsJson,
  DensityReportJson,
  HeatmapRequestJson,
  HeatmapResultJson,
  MethodName,
} from "./types.js";

export class FacadeError extends Error {
  constructor(message: string, readonly status?: number) {
    super(message);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface SelectRequestBody {
  population: unknown;
  method: MethodName;
  step: number | null;
  seed: number;
  bandwidths: BandwidthsJson;
}

interface SelectReply {
  ok: boolean;
  report?: DensityReportJson;
  error?: { type: string; message: string };
}

export class FacadeClient {
  private readonly base: string;

  constructor(baseUrl: string, private readonly fetchFn: FetchLike =
      (url, init) => fetch(url, init)) {
    this.base = baseUrl.replace(/\/+$/, "");
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    let resp: Response;
    try {
      resp = await this.fetchFn(this.base + path, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      });
    } catch (e) {
      throw new FacadeError(`request failed: ${(e as Error).message}`);
    }
    return this.decode<T>(resp);
  }

  private async decode<T>(resp: Response): Promise<T> {
    let doc: { ok?: boolean; error?: { type?: string; message?: string } };
    try {
      doc = await resp.json();
    } catch {
      throw new FacadeError(`non-JSON reply (status ${resp.status})`,
                            resp.status);
    }
    if (!resp.ok || doc.ok === false) {
      const err = doc.error;
      throw new FacadeError(err ? `${err.type}: ${err.message}`
                                : `status ${resp.status}`, resp.status);
    }
    return doc as T;
  }

  async select(body: SelectRequestBody): Promise<DensityReportJson> {
    const reply = await this.post<SelectReply>("/api/select", body);
    if (!reply.report) throw new FacadeError("reply carries no report");
    return reply.report;
  }

  async heatmap(population: unknown,
                request: HeatmapRequestJson): Promise<HeatmapResultJson> {
    return this.post<HeatmapResultJson>("/api/heatmap",
                                        { population, request });
  }

  /** The backend's built-in planar demo population (mirror document). */
  async fig1(): Promise<unknown> {
    let resp: Response;
    try {
      resp = await this.fetchFn(this.base + "/api/fig1");
    } catch (e) {
      throw new FacadeError(`request failed: ${(e as Error).message}`);
    }
    const doc = await this.decode<{ population: unknown }>(resp);
    return doc.population;
  }

  async health(): Promise<boolean> {
    try {
      const resp = await this.fetchFn(this.base + "/api/health");
      const doc = await resp.json();
      return doc.ok === true;
    } catch {
      return false;
    }
  }
}

/**
 * Latest-wins gate: `submit` starts work immediately when idle; while work
 * is in flight newer submissions replace any waiting one, and the result of
 * a superseded run is discarded without being applied.
 */
export class LatestWins<T> {
  private inflight = false;
  private pending: (() => Promise<T>) | null = null;

  constructor(private readonly apply: (result: T) => void,
              private readonly onError: (err: unknown) => void = () => {}) {}

  submit(work: () => Promise<T>): void {
    if (this.inflight) {
      this.pending = work;
      return;
    }
    void this.run(work);
  }

  get busy(): boolean {
    return this.inflight;
  }

  private async run(work: () => Promise<T>): Promise<void> {
    this.inflight = true;
    try {
      const result = await work();
      if (this.pending === null) this.apply(result);
    } catch (err) {
      if (this.pending === null) this.onError(err);
    } finally {
      this.inflight = false;
      const next = this.pending;
      this.pending = null;
      if (next !== null) void this.run(next);
    }
  }
}
