/** Dashboard view state and its pure reducers.
 *
 * The view is a pure function of API snapshots plus the event stream: every
 * displayed value carries the store offset it came from, replayed events are
 * ignored via the offset cursor, and reconnecting from the cursor rebuilds
 * the identical view. Nothing in here fabricates readings.
 */

import type { RegionSummary, StoreRecord, StreamEvent } from "./types.js";

export const CHART_WINDOW_MS = 60 * 60 * 1000; // last hour of sim time

export interface SeriesPoint {
  at: number;
  offset: number;
  temperatureC: number;
  humidityPct: number;
  moisturePct: number;
}

export interface RegionView {
  id: number;
  name: string;
  position: [number, number];
  /** Live tiles; null until a reading exists. */
  temperatureC: number | null;
  humidityPct: number | null;
  moisturePct: number | null;
  /** Store offset backing the tiles (provenance). */
  tileOffset: number | null;
  tileAt: number | null;
  pumpOn: boolean;
  /** An override is in flight; cleared by the confirming pump event. */
  pumpPending: boolean;
  totalDeliveredL: number;
  lastDecision: { command: string; quantityL: number; offset: number } | null;
  series: SeriesPoint[];
}

export interface DroneView {
  mode: string;
  x: number;
  y: number;
}

export interface ViewState {
  connected: boolean;
  closeReason: string | null;
  selectedRegion: number | null;
  /** Next store offset we have not applied yet. */
  cursor: number;
  regions: Record<number, RegionView>;
  drone: DroneView | null;
  tourActive: boolean;
  lastEventAt: number;
}

export function initialState(): ViewState {
  return {
    connected: false,
    closeReason: null,
    selectedRegion: null,
    cursor: 0,
    regions: {},
    drone: null,
    tourActive: false,
    lastEventAt: 0,
  };
}

function emptyRegion(summary: RegionSummary): RegionView {
  return {
    id: summary.id,
    name: summary.name,
    position: summary.position,
    temperatureC: null,
    humidityPct: null,
    moisturePct: null,
    tileOffset: null,
    tileAt: null,
    pumpOn: summary.pump.on,
    pumpPending: false,
    totalDeliveredL: summary.pump.total_delivered_l,
    lastDecision: null,
    series: [],
  };
}

function readingPoint(record: StoreRecord): SeriesPoint {
  const body = record.body as {
    sampled_at: number;
    temperature_c: number;
    humidity_pct: number;
    soil_moisture_pct: number;
  };
  return {
    at: body.sampled_at,
    offset: record.offset,
    temperatureC: body.temperature_c,
    humidityPct: body.humidity_pct,
    moisturePct: body.soil_moisture_pct,
  };
}

function applyReading(region: RegionView, record: StoreRecord): void {
  if (region.series.some((p) => p.offset === record.offset)) return;
  const point = readingPoint(record);
  region.series.push(point);
  region.series.sort((a, b) => a.offset - b.offset);
  const newest = region.series[region.series.length - 1]!;
  const horizon = newest.at - CHART_WINDOW_MS;
  region.series = region.series.filter((p) => p.at >= horizon);
  if (region.tileOffset === null || record.offset > region.tileOffset) {
    region.temperatureC = point.temperatureC;
    region.humidityPct = point.humidityPct;
    region.moisturePct = point.moisturePct;
    region.tileOffset = record.offset;
    region.tileAt = point.at;
  }
}

/** Seed or refresh the region list from a GET /v1/regions snapshot. */
export function applyRegionList(state: ViewState, summaries: RegionSummary[]): ViewState {
  for (const summary of summaries) {
    let region = state.regions[summary.id];
    if (!region) {
      region = emptyRegion(summary);
      state.regions[summary.id] = region;
    }
    region.name = summary.name;
    region.position = summary.position;
    if (summary.latest_reading) applyReading(region, summary.latest_reading);
    if (summary.latest_decision) {
      const body = summary.latest_decision.body as { command: string; water_quantity_l: number };
      region.lastDecision = {
        command: body.command,
        quantityL: body.water_quantity_l,
        offset: summary.latest_decision.offset,
      };
    }
    if (!region.pumpPending) region.pumpOn = summary.pump.on;
    region.totalDeliveredL = summary.pump.total_delivered_l;
  }
  if (state.selectedRegion === null) {
    const ids = Object.keys(state.regions).map(Number).sort((a, b) => a - b);
    state.selectedRegion = ids.length ? ids[0]! : null;
  }
  return state;
}

/** Apply one event-stream line. Offset-bearing events below the cursor are
 * duplicates from a reconnect replay and are dropped. */
export function applyEvent(state: ViewState, event: StreamEvent): ViewState {
  if (event.kind === "stream_closed") {
    state.connected = false;
    state.closeReason = event.reason ?? "closed";
    return state;
  }
  const offset = event.offset ?? null;
  if (offset !== null) {
    if (offset < state.cursor) return state; // already applied
    state.cursor = offset + 1;
  }
  if (event.at !== undefined) state.lastEventAt = event.at;
  const body = (event.body ?? {}) as Record<string, unknown>;

  switch (event.kind) {
    case "drone_position": {
      state.drone = {
        mode: String(body.mode ?? "idle"),
        x: Number(body.x ?? 0),
        y: Number(body.y ?? 0),
      };
      state.tourActive = state.drone.mode !== "idle";
      break;
    }
    case "reading": {
      const region = state.regions[Number(body.region_id)];
      if (region && offset !== null) {
        applyReading(region, { offset, kind: "reading", at: event.at ?? 0, body });
      }
      break;
    }
    case "decision": {
      const region = state.regions[Number(body.region_id)];
      if (region && offset !== null) {
        region.lastDecision = {
          command: String(body.command),
          quantityL: Number(body.water_quantity_l ?? 0),
          offset,
        };
      }
      break;
    }
    case "pump_event": {
      const region = state.regions[Number(body.region_id)];
      if (region) {
        region.pumpOn = Boolean(body.on);
        region.pumpPending = false;
        region.totalDeliveredL = Number(body.total_delivered_l ?? region.totalDeliveredL);
      }
      break;
    }
    case "tour_report": {
      state.tourActive = false;
      break;
    }
    default:
      break; // overrides and future kinds advance the cursor, nothing to render
  }
  return state;
}

export function selectRegion(state: ViewState, id: number): ViewState {
  if (state.regions[id]) state.selectedRegion = id;
  return state;
}

/** Optimistic flag while an override request is in flight. */
export function markPumpPending(state: ViewState, id: number): ViewState {
  const region = state.regions[id];
  if (region) region.pumpPending = true;
  return state;
}

export function markConnected(state: ViewState): ViewState {
  state.connected = true;
  state.closeReason = null;
  return state;
}

export function markDisconnected(state: ViewState, reason: string): ViewState {
  state.connected = false;
  state.closeReason = reason;
  return state;
}

export function selectedRegionView(state: ViewState): RegionView | null {
  return state.selectedRegion === null ? null : state.regions[state.selectedRegion] ?? null;
}
