/** End-to-end: drive the dashboard state layer against a real served scenario.
 *
 * Spawns the python control service on an ephemeral port, then exercises the
 * same code paths the browser app uses: region listing, the event stream
 * with cursor, drone dispatch, and a pump override confirmed by a pump
 * event that must be visible in both the view state and the store.
 */

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join, resolve } from "node:path";
import { fileURLToPath } from "node:url";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient, newRequestId } from "../src/api.js";
import {
  applyEvent,
  applyRegionList,
  initialState,
  markPumpPending,
  type ViewState,
} from "../src/state.js";
import { openEventStream, type StreamHandle } from "../src/stream.js";
import type { StreamEvent } from "../src/types.js";

const repoRoot = resolve(dirname(fileURLToPath(import.meta.url)), "..", "..");

let proc: ChildProcess;
let outDir: string;
let baseUrl: string;
let client: ApiClient;
let stream: StreamHandle;
const state: ViewState = initialState();
const eventLog: StreamEvent[] = [];

function waitFor(predicate: () => boolean, what: string, timeoutMs = 30_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  return new Promise((resolvePromise, reject) => {
    const poll = () => {
      if (predicate()) return resolvePromise();
      if (Date.now() > deadline) return reject(new Error(`timed out waiting for ${what}`));
      setTimeout(poll, 25);
    };
    poll();
  });
}

beforeAll(async () => {
  outDir = mkdtempSync(join(tmpdir(), "agrimule-e2e-"));
  proc = spawn(
    "python3",
    [
      "-m",
      "agrimule.cli",
      "run",
      join(repoRoot, "scenarios", "default.json"),
      "--serve",
      "--pace",
      "50",
      "--port",
      "0",
      "--out",
      outDir,
    ],
    { cwd: repoRoot, stdio: ["ignore", "pipe", "inherit"] },
  );
  baseUrl = await new Promise<string>((resolvePromise, reject) => {
    const timer = setTimeout(() => reject(new Error("service did not start")), 20_000);
    let buffer = "";
    proc.stdout!.on("data", (chunk: Buffer) => {
      buffer += chunk.toString();
      const match = buffer.match(/serving \S+ on (http:\/\/[\d.]+:\d+)\/v1/);
      if (match) {
        clearTimeout(timer);
        resolvePromise(match[1]!);
      }
    });
    proc.on("exit", (code) => reject(new Error(`service exited early (${code})`)));
  });
  client = new ApiClient(baseUrl);
}, 30_000);

afterAll(async () => {
  stream?.stop();
  await stream?.done;
  proc?.kill("SIGTERM");
  await new Promise((resolvePromise) => setTimeout(resolvePromise, 200));
  proc?.kill("SIGKILL");
  rmSync(outDir, { recursive: true, force: true });
});

describe("dashboard against a served default scenario", () => {
  it("lists both regions from the live service", async () => {
    applyRegionList(state, await client.listRegions());
    const names = Object.values(state.regions).map((r) => r.name).sort();
    expect(names).toEqual(["Region 1", "Region 2"]);
  }, 20_000);

  it("live-updates both regions after a dispatched tour", async () => {
    stream = openEventStream({
      baseUrl,
      getCursor: () => state.cursor,
      retryDelayMs: 200,
      onEvent: (event) => {
        eventLog.push(event);
        applyEvent(state, event);
      },
    });

    // dispatch our own tour; retry while the scheduled one holds the drone
    let tourId: number | null = null;
    await waitFor(() => true, "stream warmup", 100);
    const deadline = Date.now() + 30_000;
    while (tourId === null && Date.now() < deadline) {
      try {
        tourId = await client.dispatchDrone(newRequestId());
      } catch {
        await new Promise((resolvePromise) => setTimeout(resolvePromise, 200));
      }
    }
    expect(tourId).not.toBeNull();

    await waitFor(
      () => eventLog.some((e) => e.kind === "tour_report" && Number(e.body?.tour_id) === tourId),
      `tour ${tourId} to complete`,
    );
    for (const region of Object.values(state.regions)) {
      expect(region.tileOffset).not.toBeNull();
      expect(region.moisturePct).not.toBeNull();
      expect(region.series.length).toBeGreaterThan(0);
    }
    const readingEvents = eventLog.filter((e) => e.kind === "reading");
    expect(readingEvents.length).toBeGreaterThanOrEqual(2);
    expect(eventLog.some((e) => e.kind === "drone_position")).toBe(true);
  }, 45_000);

  it("pump override round-trips to a pump event visible in UI state and store", async () => {
    const before = eventLog.filter(
      (e) => e.kind === "pump_event" && Number(e.body?.region_id) === 2,
    ).length;
    markPumpPending(state, 2);
    expect(state.regions[2]!.pumpPending).toBe(true);
    await client.overridePump(2, "on", 25, newRequestId());

    await waitFor(
      () =>
        eventLog.filter((e) => e.kind === "pump_event" && Number(e.body?.region_id) === 2).length >
        before,
      "the confirming pump event",
    );
    // the stream delivery itself flipped the tile: no polling, no refetch
    expect(state.regions[2]!.pumpOn).toBe(true);
    expect(state.regions[2]!.pumpPending).toBe(false);

    const stored = await client.telemetry(2, { kind: "pump_event" });
    expect(stored.length).toBeGreaterThan(0);
    expect(stored.some((r) => r.body.on === true)).toBe(true);
  }, 45_000);
});
