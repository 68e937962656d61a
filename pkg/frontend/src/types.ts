/** DTOs mirroring the control service /v1 JSON bodies. */

export interface StoreRecord {
  offset: number;
  kind: string;
  at: number;
  body: Record<string, unknown>;
}

/** One line of the /v1/events stream. Store-backed events carry an offset;
 * drone positions and stream control lines do not. */
export interface StreamEvent {
  offset?: number | null;
  kind: string;
  at?: number;
  body?: Record<string, unknown>;
  reason?: string;
}

export interface PolicyDto {
  m_low_pct: number;
  m_high_pct: number;
  max_quantity_l: number;
}

export interface PumpDto {
  on: boolean;
  flow_rate_lpm: number;
  total_delivered_l: number;
  commanded_remaining_l: number;
}

export interface RegionSummary {
  id: number;
  name: string;
  position: [number, number];
  policy: PolicyDto;
  pump: PumpDto;
  latest_reading: StoreRecord | null;
  latest_decision: StoreRecord | null;
}

export interface StatusDto {
  scenario: string;
  sim_time_ms: number;
  duration_ms: number;
  pace: number;
  drone: { mode: string; x: number; y: number; buffered_readings: number };
  next_offset: number;
}
