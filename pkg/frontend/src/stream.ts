/** NDJSON event-stream consumer with an offset cursor and auto-reconnect. */

import type { StreamEvent } from "./types.js";

/** Split a byte stream into complete text lines; tolerates arbitrary chunking. */
export async function* ndjsonLines(
  stream: ReadableStream<Uint8Array>,
): AsyncGenerator<string> {
  const reader = stream.getReader();
  const decoder = new TextDecoder();
  let pending = "";
  try {
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      pending += decoder.decode(value, { stream: true });
      for (;;) {
        const nl = pending.indexOf("\n");
        if (nl < 0) break;
        const line = pending.slice(0, nl).trim();
        pending = pending.slice(nl + 1);
        if (line) yield line;
      }
    }
    const tail = pending.trim();
    if (tail) yield tail;
  } finally {
    reader.releaseLock();
  }
}

export function parseEventLine(line: string): StreamEvent | null {
  try {
    const obj = JSON.parse(line);
    if (obj && typeof obj === "object" && typeof obj.kind === "string") {
      return obj as StreamEvent;
    }
  } catch {
    // fall through: a malformed line is dropped, never invented
  }
  return null;
}

export interface StreamHandle {
  stop(): void;
  done: Promise<void>;
}

export interface StreamOptions {
  baseUrl: string;
  /** Called before every (re)connect to resume without gaps. */
  getCursor: () => number;
  onEvent: (event: StreamEvent) => void;
  onConnect?: () => void;
  onDisconnect?: (reason: string) => void;
  retryDelayMs?: number;
}

/** Consume /v1/events, reconnecting from the caller's cursor on any failure. */
export function openEventStream(options: StreamOptions): StreamHandle {
  let stopped = false;
  let controller: AbortController | null = null;
  const retryDelay = options.retryDelayMs ?? 1000;

  const done = (async () => {
    while (!stopped) {
      controller = new AbortController();
      const url = `${options.baseUrl}/v1/events?from=${options.getCursor()}`;
      try {
        const response = await fetch(url, { signal: controller.signal });
        if (!response.ok || !response.body) {
          throw new Error(`events stream: http ${response.status}`);
        }
        options.onConnect?.();
        for await (const line of ndjsonLines(response.body)) {
          const event = parseEventLine(line);
          if (event) options.onEvent(event);
          if (stopped) break;
        }
        if (!stopped) options.onDisconnect?.("stream ended");
      } catch (err) {
        if (!stopped) {
          options.onDisconnect?.(err instanceof Error ? err.message : String(err));
        }
      }
      if (stopped) break;
      await new Promise((resolve) => setTimeout(resolve, retryDelay));
    }
  })();

  return {
    stop() {
      stopped = true;
      controller?.abort();
    },
    done,
  };
}
