// Browser wiring: DOM controls on one side, the scorer (embedded or over
// HTTP) on the other, with a latest-wins gate in between so slider drags
// stay responsive.

import { FacadeClient, LatestWins } from "./client.js";
import { MirrorError, parsePopulation, parsePopulationDoc } from "./mirror.js";
import {
  defaultHeatmapRequest,
  heatmapEmbedded,
  selectEmbedded,
} from "./scorer.js";
import {
  applyResults,
  colormapRange,
  exportSettings,
  initialState,
  markStale,
  setBandwidth,
  setPopulation,
  setProbe,
  SLIDER_RANGES,
} from "./state.js";
import {
  canvasToWorld,
  drawFrames,
  drawProbe,
  frameGlyphs,
  rasterizeHeatmap,
  Viewport,
} from "./render.js";
import {
  BandwidthsJson,
  DensityReportJson,
  HeatmapRequestJson,
  HeatmapResultJson,
  MethodName,
} from "./types.js";

const state = initialState();
let client: FacadeClient | null = null;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const canvas = el<HTMLCanvasElement>("view");
const ctx = canvas.getContext("2d")!;
const raster = document.createElement("canvas");
const statusLine = el<HTMLElement>("status");
const staleBadge = el<HTMLElement>("stale-badge");
const selectedLabel = el<HTMLElement>("selected");

function setStatus(text: string, isError = false): void {
  statusLine.textContent = text;
  statusLine.classList.toggle("error", isError);
}

function viewport(): Viewport {
  return {
    xMin: -0.25, xMax: 0.25, yMin: -0.25, yMax: 0.25,
    width: canvas.width, height: canvas.height,
  };
}

function draw(): void {
  ctx.fillStyle = "#14141c";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  const vp = viewport();
  if (state.heatmap) {
    const range = colormapRange(state);
    if (range) {
      const pixels = rasterizeHeatmap(state.heatmap, range);
      raster.width = state.heatmap.cols;
      raster.height = state.heatmap.rows;
      raster.getContext("2d")!.putImageData(
        new ImageData(pixels, state.heatmap.cols, state.heatmap.rows), 0, 0);
      ctx.imageSmoothingEnabled = false;
      ctx.drawImage(raster, 0, 0, canvas.width, canvas.height);
    }
  }
  if (state.population) {
    const step = state.report && state.report.scored_step >= 0
      ? state.report.scored_step
      : Math.min(8, state.population.t) - 1;
    const glyphs = frameGlyphs(state.population, step,
                               state.report?.selected_index ?? null);
    drawFrames(ctx, vp, glyphs);
  }
  drawProbe(ctx, vp, state.probe.x, state.probe.y, state.probe.angle);
  staleBadge.style.display = state.stale ? "inline-block" : "none";
  if (state.stale && state.staleReason) {
    staleBadge.title = state.staleReason;
  }
  selectedLabel.textContent = state.report
    ? `selected index ${state.report.selected_index} `
      + `(log density ${state.report.log_densities[
        state.report.selected_index].toFixed(4)})`
    : "no report yet";
}

function currentHeatmapRequest(): HeatmapRequestJson {
  return defaultHeatmapRequest({
    angle: state.probe.angle,
    gripper: state.probe.gripper,
    step: state.step,
    bandwidths: { ...state.bandwidths },
  });
}

interface Scored {
  report: DensityReportJson;
  heatmap: HeatmapResultJson;
}

const gate = new LatestWins<Scored>(
  (result) => {
    applyResults(state, result.report, result.heatmap);
    draw();
  },
  (err) => {
    markStale(state, String(err));
    setStatus(`scoring failed: ${String(err)}`, true);
    draw();
  },
);

function rescore(): void {
  if (!state.population) return;
  const pop = state.population;
  const doc = state.populationDoc;
  const req = currentHeatmapRequest();
  const method = state.method;
  const step = state.step;
  const seed = 0;
  const h = { ...state.bandwidths };
  if (client) {
    const facade = client;
    gate.submit(async () => ({
      report: await facade.select({ population: doc, method, step, seed,
                                    bandwidths: h }),
      heatmap: await facade.heatmap(doc, req),
    }));
  } else {
    gate.submit(async () => ({
      report: selectEmbedded(pop, { method, step, seed, bandwidths: h }),
      heatmap: heatmapEmbedded(pop, req),
    }));
  }
}

function loadPopulationText(text: string, origin: string): void {
  try {
    const population = parsePopulation(text);
    setPopulation(state, population, JSON.parse(text));
    setStatus(`${origin}: ${population.n} trajectories x `
      + `${population.t} steps (${population.observationId})`);
    draw(); // frames first, the heatmap fills in when scoring lands
    rescore();
  } catch (e) {
    // Session state is untouched on parse failure.
    const detail = e instanceof MirrorError ? e.message : String(e);
    setStatus(`load failed: ${detail}`, true);
  }
}

function bindSlider(id: string, key: keyof BandwidthsJson): void {
  const slider = el<HTMLInputElement>(id);
  const label = el<HTMLElement>(`${id}-value`);
  const range = SLIDER_RANGES[key];
  const toValue = (pos: number) => range.min
    * Math.pow(range.max / range.min, pos);
  const toPos = (value: number) => Math.log(value / range.min)
    / Math.log(range.max / range.min);
  slider.value = String(toPos(state.bandwidths[key]));
  label.textContent = state.bandwidths[key].toPrecision(3);
  slider.addEventListener("input", () => {
    setBandwidth(state, key, toValue(Number(slider.value)));
    label.textContent = state.bandwidths[key].toPrecision(3);
    rescore();
  });
}

function bindControls(): void {
  bindSlider("sigma-pos", "sigma_pos");
  bindSlider("sigma-rot", "sigma_rot");
  bindSlider("sigma-grip", "sigma_grip");

  const angle = el<HTMLInputElement>("probe-angle");
  angle.addEventListener("input", () => {
    setProbe(state, { angle: (Number(angle.value) * Math.PI) / 180 });
    el<HTMLElement>("probe-angle-value").textContent = `${angle.value}°`;
    rescore();
  });

  const gripper = el<HTMLInputElement>("probe-gripper");
  gripper.addEventListener("change", () => {
    setProbe(state, { gripper: gripper.checked ? 1 : -1 });
    rescore();
  });

  const method = el<HTMLSelectElement>("method");
  method.addEventListener("change", () => {
    state.method = method.value as MethodName;
    rescore();
  });

  const stepInput = el<HTMLInputElement>("step");
  stepInput.addEventListener("change", () => {
    state.step = stepInput.value === "" ? null : Number(stepInput.value);
    rescore();
  });

  const colormapMode = el<HTMLSelectElement>("colormap-mode");
  colormapMode.addEventListener("change", () => {
    state.colormapMode = colormapMode.value as typeof state.colormapMode;
    draw();
  });

  canvas.addEventListener("click", (event) => {
    const rect = canvas.getBoundingClientRect();
    const px = ((event.clientX - rect.left) / rect.width) * canvas.width;
    const py = ((event.clientY - rect.top) / rect.height) * canvas.height;
    const [x, y] = canvasToWorld(viewport(), px, py);
    setProbe(state, { x, y });
    rescore();
  });

  el<HTMLInputElement>("file-input").addEventListener("change", (event) => {
    const input = event.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    const reader = new FileReader();
    reader.onload = () => loadPopulationText(String(reader.result), file.name);
    reader.onerror = () => setStatus("could not read the file", true);
    reader.readAsText(file);
  });

  el<HTMLButtonElement>("connect").addEventListener("click", async () => {
    const url = el<HTMLInputElement>("server-url").value.trim();
    if (!url) {
      client = null;
      setStatus("embedded scoring (no server)");
      return;
    }
    const candidate = new FacadeClient(url);
    if (await candidate.health()) {
      client = candidate;
      setStatus(`connected to ${url}`);
      rescore();
    } else {
      setStatus(`no backend at ${url}, staying embedded`, true);
    }
  });

  el<HTMLButtonElement>("load-fig1").addEventListener("click", async () => {
    if (client) {
      try {
        const doc = await client.fig1();
        const population = parsePopulationDoc(doc);
        setPopulation(state, population, doc);
        setStatus(`server fig1: ${population.n} frames`);
        draw();
        rescore();
        return;
      } catch (e) {
        setStatus(`fig1 fetch failed: ${String(e)}`, true);
        return;
      }
    }
    loadPopulationText(FIG1_FALLBACK, "built-in fig1");
  });

  el<HTMLButtonElement>("export").addEventListener("click", () => {
    const blob = new Blob([exportSettings(state)],
                          { type: "application/json" });
    const link = document.createElement("a");
    link.href = URL.createObjectURL(blob);
    link.download = "kdpe-bandwidths.json";
    link.click();
    URL.revokeObjectURL(link.href);
  });
}

// The six-cluster planar demo, embedded so the UI works without a backend.
// Matches the backend's fig1 exactly (three open frames above the x axis,
// three closed below, angles 0/45/90 degrees).
const SQ2 = "0.7071067811865476";
const SQ2M = "0.7071067811865475";
const EPS90 = "1.1102230246251565e-16"; // cos(pi/2) as the backend computes it
function demoAction(x: string, y: string, angle: "0" | "45" | "90",
                    grip: string): string {
  const rot = angle === "0"
    ? `"1.0","0.0","0.0","0.0","1.0","0.0"`
    : angle === "45"
      ? `"${SQ2}","${SQ2M}","0.0","-${SQ2M}","${SQ2}","0.0"`
      : `"${EPS90}","1.0","0.0","-1.0","${EPS90}","0.0"`;
  return `{"actions":[["${x}","${y}","0.0",${rot},"${grip}"]],`
    + `"payload_b64":null}`;
}
const FIG1_FALLBACK = `{"format":"kdpe-population","version":1,`
  + `"precision":"f64","n":6,"t":1,"d":10,"observation_id":"planar-demo",`
  + `"trajectories":[`
  + demoAction("-0.15", "0.1", "0", "1.0") + ","
  + demoAction("0.0", "0.15", "45", "1.0") + ","
  + demoAction("0.15", "0.1", "90", "1.0") + ","
  + demoAction("-0.15", "-0.1", "0", "-1.0") + ","
  + demoAction("0.0", "-0.15", "45", "-1.0") + ","
  + demoAction("0.15", "-0.1", "90", "-1.0") + "]}";

bindControls();
setStatus("load a population (JSON mirror) or the built-in demo");
draw();
