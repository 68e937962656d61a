/** DOM wiring: renders the ViewState and forwards operator actions to the API.
 * Rendering is a pure projection of the state object; user actions never
 * mutate the view directly, they go through the service and come back as
 * stream events. */

import { ApiClient, ApiError, newRequestId } from "./api.js";
import {
  applyEvent,
  applyRegionList,
  initialState,
  markConnected,
  markDisconnected,
  markPumpPending,
  selectRegion,
  selectedRegionView,
  type RegionView,
  type ViewState,
} from "./state.js";
import { openEventStream } from "./stream.js";

const params = new URLSearchParams(location.search);
const SERVICE_URL = params.get("service") ?? "http://127.0.0.1:8787";

const client = new ApiClient(SERVICE_URL);
const state: ViewState = initialState();

const el = {
  banner: document.getElementById("banner") as HTMLDivElement,
  regions: document.getElementById("regions") as HTMLDivElement,
  gaugeTemp: document.getElementById("gauge-temp") as HTMLDivElement,
  gaugeHum: document.getElementById("gauge-hum") as HTMLDivElement,
  gaugeMoist: document.getElementById("gauge-moist") as HTMLDivElement,
  tileMeta: document.getElementById("tile-meta") as HTMLDivElement,
  pumpState: document.getElementById("pump-state") as HTMLSpanElement,
  pumpOn: document.getElementById("pump-on") as HTMLButtonElement,
  pumpOff: document.getElementById("pump-off") as HTMLButtonElement,
  pumpQty: document.getElementById("pump-qty") as HTMLInputElement,
  decision: document.getElementById("decision") as HTMLDivElement,
  dispatch: document.getElementById("dispatch") as HTMLButtonElement,
  droneMeta: document.getElementById("drone-meta") as HTMLDivElement,
  map: document.getElementById("map") as HTMLCanvasElement,
  chart: document.getElementById("chart") as HTMLCanvasElement,
  toast: document.getElementById("toast") as HTMLDivElement,
};

let toastTimer: number | undefined;
function toast(message: string): void {
  el.toast.textContent = message;
  el.toast.classList.add("visible");
  window.clearTimeout(toastTimer);
  toastTimer = window.setTimeout(() => el.toast.classList.remove("visible"), 4000);
}

function fmt(value: number | null, unit: string, digits = 1): string {
  return value === null ? "--" : `${value.toFixed(digits)}${unit}`;
}

function renderRegionSelector(): void {
  el.regions.textContent = "";
  const ids = Object.keys(state.regions).map(Number).sort((a, b) => a - b);
  for (const id of ids) {
    const region = state.regions[id]!;
    const button = document.createElement("button");
    button.className = "region-tab" + (state.selectedRegion === id ? " active" : "");
    button.textContent = region.name;
    button.onclick = () => {
      selectRegion(state, id);
      render();
    };
    el.regions.appendChild(button);
  }
}

function renderTiles(region: RegionView | null): void {
  el.gaugeTemp.textContent = fmt(region?.temperatureC ?? null, " °C");
  el.gaugeHum.textContent = fmt(region?.humidityPct ?? null, " %");
  el.gaugeMoist.textContent = fmt(region?.moisturePct ?? null, " %");
  if (!region || region.tileOffset === null) {
    el.tileMeta.textContent = "no data yet";
  } else {
    el.tileMeta.textContent =
      `sampled at ${(region.tileAt! / 1000).toFixed(0)} s · record #${region.tileOffset}`;
  }
  if (!region) {
    el.pumpState.textContent = "--";
    el.decision.textContent = "";
    return;
  }
  el.pumpState.textContent = region.pumpPending
    ? "pending…"
    : region.pumpOn
      ? "ON"
      : "OFF";
  el.pumpState.className = region.pumpPending ? "pending" : region.pumpOn ? "on" : "off";
  el.pumpOn.disabled = region.pumpPending;
  el.pumpOff.disabled = region.pumpPending;
  if (region.lastDecision) {
    const d = region.lastDecision;
    const what =
      d.command === "on"
        ? `irrigate ${d.quantityL.toFixed(1)} L`
        : d.command === "off"
          ? "stop pump"
          : "no change";
    el.decision.textContent = `latest decision: ${what} (record #${d.offset})`;
  } else {
    el.decision.textContent = "latest decision: none yet";
  }
}

function renderDrone(): void {
  const drone = state.drone;
  el.dispatch.disabled = state.tourActive;
  el.dispatch.textContent = state.tourActive ? "drone busy (touring)" : "dispatch drone";
  el.droneMeta.textContent = drone
    ? `${drone.mode} @ (${drone.x.toFixed(1)}, ${drone.y.toFixed(1)}) m`
    : "no position yet";

  const ctx = el.map.getContext("2d")!;
  const { width, height } = el.map;
  ctx.clearRect(0, 0, width, height);
  const points: Array<{ x: number; y: number }> = Object.values(state.regions).map((r) => ({
    x: r.position[0],
    y: r.position[1],
  }));
  points.push({ x: 0, y: 0 });
  if (drone) points.push({ x: drone.x, y: drone.y });
  const xs = points.map((p) => p.x);
  const ys = points.map((p) => p.y);
  const pad = 18;
  const minX = Math.min(...xs) - 5;
  const maxX = Math.max(...xs) + 5;
  const minY = Math.min(...ys) - 5;
  const maxY = Math.max(...ys) + 5;
  const sx = (x: number) => pad + ((x - minX) / (maxX - minX)) * (width - 2 * pad);
  const sy = (y: number) => height - pad - ((y - minY) / (maxY - minY)) * (height - 2 * pad);

  ctx.fillStyle = "#889";
  ctx.fillRect(sx(0) - 4, sy(0) - 4, 8, 8); // base
  for (const region of Object.values(state.regions)) {
    const x = sx(region.position[0]);
    const y = sy(region.position[1]);
    ctx.fillStyle = region.pumpOn ? "#2b8a3e" : "#4a5568";
    ctx.beginPath();
    ctx.arc(x, y, 7, 0, Math.PI * 2);
    ctx.fill();
    ctx.fillStyle = "#ccc";
    ctx.font = "11px sans-serif";
    ctx.fillText(region.name, x + 10, y + 4);
  }
  if (drone) {
    ctx.fillStyle = "#e8590c";
    ctx.beginPath();
    ctx.arc(sx(drone.x), sy(drone.y), 5, 0, Math.PI * 2);
    ctx.fill();
  }
}

function renderChart(region: RegionView | null): void {
  const ctx = el.chart.getContext("2d")!;
  const { width, height } = el.chart;
  ctx.clearRect(0, 0, width, height);
  if (!region || region.series.length === 0) {
    ctx.fillStyle = "#777";
    ctx.font = "13px sans-serif";
    ctx.fillText("no data yet", 16, height / 2);
    return;
  }
  const series = region.series;
  const t0 = series[0]!.at;
  const t1 = Math.max(series[series.length - 1]!.at, t0 + 1);
  const pad = 24;
  const sx = (t: number) => pad + ((t - t0) / (t1 - t0)) * (width - 2 * pad);
  const lines: Array<{ pick: (p: (typeof series)[number]) => number; color: string; max: number }> = [
    { pick: (p) => p.temperatureC, color: "#e8590c", max: 50 },
    { pick: (p) => p.humidityPct, color: "#1971c2", max: 100 },
    { pick: (p) => p.moisturePct, color: "#2b8a3e", max: 100 },
  ];
  for (const line of lines) {
    ctx.strokeStyle = line.color;
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    series.forEach((p, i) => {
      const x = sx(p.at);
      const y = height - pad - (line.pick(p) / line.max) * (height - 2 * pad);
      if (i === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    });
    ctx.stroke();
    series.forEach((p) => {
      const x = sx(p.at);
      const y = height - pad - (line.pick(p) / line.max) * (height - 2 * pad);
      ctx.fillStyle = line.color;
      ctx.fillRect(x - 1.5, y - 1.5, 3, 3);
    });
  }
}

function renderBanner(): void {
  if (state.connected) {
    el.banner.textContent = `live · ${SERVICE_URL}`;
    el.banner.className = "banner live";
  } else {
    const reason = state.closeReason ? ` (${state.closeReason})` : "";
    el.banner.textContent = `disconnected${reason} — retrying…`;
    el.banner.className = "banner dead";
  }
}

function render(): void {
  renderBanner();
  renderRegionSelector();
  const region = selectedRegionView(state);
  renderTiles(region);
  renderDrone();
  renderChart(region);
}

el.dispatch.onclick = async () => {
  try {
    await client.dispatchDrone(newRequestId());
  } catch (err) {
    toast(err instanceof ApiError && err.status === 409 ? "drone is busy" : `dispatch failed: ${err}`);
  }
};

async function sendOverride(command: "on" | "off"): Promise<void> {
  const region = selectedRegionView(state);
  if (!region) return;
  const quantity = command === "on" ? Number(el.pumpQty.value || "0") : 0;
  markPumpPending(state, region.id);
  render();
  try {
    await client.overridePump(region.id, command, quantity, newRequestId());
  } catch (err) {
    region.pumpPending = false; // request failed: state unchanged
    render();
    toast(`override failed: ${err instanceof Error ? err.message : err}`);
  }
}

el.pumpOn.onclick = () => void sendOverride("on");
el.pumpOff.onclick = () => void sendOverride("off");

async function refreshRegions(): Promise<void> {
  applyRegionList(state, await client.listRegions());
  render();
}

async function main(): Promise<void> {
  for (;;) {
    try {
      await refreshRegions();
      break;
    } catch {
      markDisconnected(state, "service unreachable");
      render();
      await new Promise((resolve) => setTimeout(resolve, 1500));
    }
  }
  openEventStream({
    baseUrl: SERVICE_URL,
    getCursor: () => state.cursor,
    onConnect: () => {
      markConnected(state);
      void refreshRegions(); // snapshot + replay-from-cursor reconverge
    },
    onEvent: (event) => {
      applyEvent(state, event);
      render();
    },
    onDisconnect: (reason) => {
      markDisconnected(state, reason);
      render();
    },
  });
  render();
}

void main();
