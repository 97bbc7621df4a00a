import type { CommandRecord, Tag } from "../src/types.js";

let seqCounter = 0;

/** Build a tag with sensible defaults, overriding only what a test needs. */
export function makeTag(overrides: Partial<Tag> & { name: string }): Tag {
  seqCounter += 1;
  return {
    kind: "measurement",
    device: overrides.name.split("/")[0] ?? "DEV",
    zone: "SmartHome",
    value: 0,
    quality: "good",
    source_ts: 1000,
    scada_ts: 1002,
    seq: seqCounter,
    ...overrides,
  };
}

export function makeStatus(name: string, value: boolean, overrides: Partial<Tag> = {}): Tag {
  return makeTag({ name, kind: "status", value, ...overrides });
}

export function makeCommand(
  overrides: Partial<CommandRecord> & { cmd_id: number },
): CommandRecord {
  return {
    tag: "SPLC/CSWI_Q4_1.Oper",
    value: true,
    operator: "console",
    issued_ts: 5000,
    outcome: null,
    resolved_ts: null,
    error: null,
    status_tag: "SIED1/XCBR_Q4_1.stVal",
    observed: null,
    observed_quality: null,
    observed_ts: null,
    ...overrides,
  };
}

/** Deterministic stand-in for EventSource, driven by the test. */
export class FakeEventSource {
  static instances: FakeEventSource[] = [];

  readonly listeners = new Map<string, Array<(ev: MessageEvent) => void>>();
  onerror: ((ev: unknown) => void) | null = null;
  onopen: ((ev: unknown) => void) | null = null;
  closed = false;

  constructor(readonly url: string) {
    FakeEventSource.instances.push(this);
  }

  addEventListener(type: string, listener: (ev: MessageEvent) => void): void {
    const bucket = this.listeners.get(type) ?? [];
    bucket.push(listener);
    this.listeners.set(type, bucket);
  }

  close(): void {
    this.closed = true;
  }

  open(): void {
    this.onopen?.({});
  }

  emit(type: string, data: unknown): void {
    for (const listener of this.listeners.get(type) ?? []) {
      listener({ data: JSON.stringify(data) } as MessageEvent);
    }
  }

  fail(): void {
    this.onerror?.({});
  }

  static reset(): void {
    FakeEventSource.instances = [];
  }
}

export interface RecordedRequest {
  url: string;
  method: string;
  headers: Record<string, string>;
  body: unknown;
}

/** fetch stub that routes by path prefix and records every request. */
export function makeFakeFetch(
  routes: Record<string, (req: RecordedRequest) => { status?: number; body: unknown }>,
): { fetchFn: typeof fetch; requests: RecordedRequest[] } {
  const requests: RecordedRequest[] = [];
  const fetchFn = (async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = String(input);
    const req: RecordedRequest = {
      url,
      method: init?.method ?? "GET",
      headers: Object.fromEntries(
        Object.entries((init?.headers as Record<string, string>) ?? {}),
      ),
      body: init?.body ? JSON.parse(String(init.body)) : undefined,
    };
    requests.push(req);
    const path = new URL(url, "http://unit.test").pathname;
    const route = routes[path];
    if (!route) {
      return new Response(JSON.stringify({ ok: false, error: "not found" }), { status: 404 });
    }
    const { status = 200, body } = route(req);
    return new Response(JSON.stringify(body), {
      status,
      headers: { "Content-Type": "application/json" },
    });
  }) as typeof fetch;
  return { fetchFn, requests };
}
