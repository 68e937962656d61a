/** Typed client for the control service /v1 API. All mutations go through
 * here; request ids make retries idempotent server-side. */

import type { RegionSummary, StatusDto, StoreRecord } from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function check(response: Response): Promise<any> {
  const body = await response.json().catch(() => ({}));
  if (!response.ok) {
    throw new ApiError(response.status, String(body.error ?? response.statusText));
  }
  return body;
}

export class ApiClient {
  constructor(public baseUrl: string) {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async listRegions(): Promise<RegionSummary[]> {
    const body = await check(await fetch(this.url("/v1/regions")));
    return body.regions as RegionSummary[];
  }

  async status(): Promise<StatusDto> {
    return (await check(await fetch(this.url("/v1/status")))) as StatusDto;
  }

  async telemetry(
    regionId: number,
    params: { kind?: string; startMs?: number; endMs?: number } = {},
  ): Promise<StoreRecord[]> {
    const query = new URLSearchParams();
    if (params.kind) query.set("kind", params.kind);
    if (params.startMs !== undefined) query.set("start_ms", String(params.startMs));
    if (params.endMs !== undefined) query.set("end_ms", String(params.endMs));
    const qs = query.toString();
    const body = await check(
      await fetch(this.url(`/v1/regions/${regionId}/telemetry${qs ? "?" + qs : ""}`)),
    );
    return body.records as StoreRecord[];
  }

  async dispatchDrone(requestId: string): Promise<number> {
    const body = await check(
      await fetch(this.url("/v1/drone/dispatch"), {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ request_id: requestId }),
      }),
    );
    return body.tour_id as number;
  }

  async overridePump(
    regionId: number,
    command: "on" | "off",
    quantityL: number,
    requestId: string,
  ): Promise<void> {
    await check(
      await fetch(this.url(`/v1/regions/${regionId}/pump`), {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({
          command,
          quantity_l: quantityL,
          request_id: requestId,
          operator: "dashboard",
        }),
      }),
    );
  }
}

export function newRequestId(): string {
  return `ui-${Date.now().toString(36)}-${Math.random().toString(36).slice(2, 10)}`;
}
