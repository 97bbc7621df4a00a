import type {
  CommandRecord,
  ConsoleConfig,
  HistorySample,
  StreamEvent,
  Tag,
  TruthDoc,
} from "./types.js";

export type ConnectionState = "connecting" | "live" | "reconnecting";

export interface LiveHandlers {
  onSnapshot(ev: StreamEvent): void;
  onUpdate(ev: StreamEvent): void;
  onState(state: ConnectionState): void;
}

export interface LiveConnection {
  close(): void;
}

/** Minimal surface of EventSource so tests can substitute a fake. */
export interface EventSourceLike {
  addEventListener(type: string, listener: (ev: MessageEvent) => void): void;
  close(): void;
  onerror: ((ev: unknown) => void) | null;
  onopen: ((ev: unknown) => void) | null;
}

export type EventSourceFactory = (url: string) => EventSourceLike;

export interface GatewayOptions {
  fetchFn?: typeof fetch;
  eventSource?: EventSourceFactory;
  /** Cadence of the /tags polling fallback while the stream is down. */
  pollMs?: number;
}

export class GatewayError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "GatewayError";
  }
}

/** The stream's own retry hint; polling matches it so the fallback
 *  refreshes no slower than a healthy reconnect would. */
export const POLL_FALLBACK_MS = 2000;

/**
 * HTTP + SSE client for the operator gateway.
 *
 * Everything the console displays comes through this client; the one
 * exception is the explicitly separate ground-truth document used by the
 * opt-in debug view, which lives on the harness, not the gateway.
 */
export class GatewayClient {
  private readonly fetchFn: typeof fetch;
  private readonly makeEventSource: EventSourceFactory | null;
  private readonly pollMs: number;

  constructor(
    private readonly config: ConsoleConfig,
    options: GatewayOptions = {},
  ) {
    this.fetchFn = options.fetchFn ?? fetch.bind(globalThis);
    this.makeEventSource = options.eventSource ?? defaultEventSourceFactory();
    this.pollMs = options.pollMs ?? POLL_FALLBACK_MS;
  }

  private url(path: string, params?: Record<string, string | number | undefined>): string {
    let query = "";
    if (params) {
      const pairs = Object.entries(params)
        .filter(([, v]) => v !== undefined)
        .map(([k, v]) => `${encodeURIComponent(k)}=${encodeURIComponent(String(v))}`);
      if (pairs.length > 0) query = `?${pairs.join("&")}`;
    }
    return `${this.config.gatewayBase}${path}${query}`;
  }

  private async getJson<T>(url: string): Promise<T> {
    const resp = await this.fetchFn(url);
    const body = (await resp.json().catch(() => ({}))) as Record<string, unknown>;
    if (!resp.ok) {
      throw new GatewayError(resp.status, String(body.error ?? resp.statusText));
    }
    return body as T;
  }

  async health(): Promise<{ ok: boolean; now_ms: number; devices: number }> {
    return this.getJson(this.url("/health"));
  }

  async tags(filter: { zone?: string; kind?: string; device?: string } = {}): Promise<StreamEvent> {
    const body = await this.getJson<{ tags: Tag[]; now_ms: number }>(this.url("/tags", filter));
    return { tags: body.tags, now_ms: body.now_ms };
  }

  async tag(name: string): Promise<Tag> {
    const body = await this.getJson<{ tag: Tag }>(this.url("/tags", { name }));
    return body.tag;
  }

  /** Issue a supervisory write; resolves with the pending ledger record. */
  async write(tag: string, value: number | boolean): Promise<CommandRecord> {
    const resp = await this.fetchFn(this.url("/write"), {
      method: "POST",
      headers: {
        "Content-Type": "application/json",
        "X-Auth-Token": this.config.credential,
      },
      body: JSON.stringify({ tag, value, operator: this.config.operator }),
    });
    const body = (await resp.json().catch(() => ({}))) as Record<string, unknown>;
    if (!resp.ok) {
      throw new GatewayError(resp.status, String(body.error ?? resp.statusText));
    }
    return body.command as CommandRecord;
  }

  async command(cmdId: number): Promise<CommandRecord> {
    const body = await this.getJson<{ commands: CommandRecord[] }>(
      this.url("/commands", { cmd_id: cmdId }),
    );
    return body.commands[0];
  }

  async commands(limit = 50): Promise<CommandRecord[]> {
    const body = await this.getJson<{ commands: CommandRecord[] }>(
      this.url("/commands", { limit }),
    );
    return body.commands;
  }

  async history(tag: string, t0?: number, t1?: number): Promise<HistorySample[]> {
    const body = await this.getJson<{ samples: HistorySample[] }>(
      this.url("/history", { tag, t0, t1, aggregate: "raw" }),
    );
    return body.samples;
  }

  /** Ground truth from the harness; only meaningful with the debug view. */
  async truth(): Promise<TruthDoc> {
    if (!this.config.truthUrl) return { ok: false, error: "no truth source configured" };
    return this.getJson<TruthDoc>(this.config.truthUrl);
  }

  /**
   * Live data feed: server-sent events first, with an automatic polling
   * fallback at the stream's retry cadence whenever the stream is down.
   * State transitions drive the console's reconnect banner.
   */
  connectLive(handlers: LiveHandlers): LiveConnection {
    let closed = false;
    let pollTimer: ReturnType<typeof setInterval> | null = null;
    let state: ConnectionState | null = null;

    const setState = (next: ConnectionState) => {
      if (closed || state === next) return;
      state = next;
      handlers.onState(next);
    };

    const stopPolling = () => {
      if (pollTimer !== null) {
        clearInterval(pollTimer);
        pollTimer = null;
      }
    };

    const pollOnce = () => {
      this.tags()
        .then((ev) => {
          if (!closed) handlers.onSnapshot(ev);
        })
        .catch(() => {
          /* gateway still down; keep polling */
        });
    };

    const startPolling = () => {
      if (closed || pollTimer !== null) return;
      pollOnce();
      pollTimer = setInterval(pollOnce, this.pollMs);
    };

    setState("connecting");

    let source: EventSourceLike | null = null;
    if (this.makeEventSource) {
      try {
        source = this.makeEventSource(this.url("/stream"));
      } catch {
        source = null;
      }
    }

    if (source === null) {
      // No stream transport at all: run on polling alone, and say so.
      setState("reconnecting");
      startPolling();
      return {
        close() {
          closed = true;
          stopPolling();
        },
      };
    }

    const es = source;
    es.onopen = () => {
      setState("live");
      stopPolling();
    };
    es.addEventListener("snapshot", (ev) => {
      if (closed) return;
      setState("live");
      stopPolling();
      handlers.onSnapshot(JSON.parse(ev.data) as StreamEvent);
    });
    es.addEventListener("update", (ev) => {
      if (closed) return;
      handlers.onUpdate(JSON.parse(ev.data) as StreamEvent);
    });
    es.onerror = () => {
      if (closed) return;
      setState("reconnecting");
      startPolling();
    };

    return {
      close() {
        closed = true;
        stopPolling();
        es.close();
      },
    };
  }
}

function defaultEventSourceFactory(): EventSourceFactory | null {
  const ctor = (globalThis as { EventSource?: new (url: string) => EventSourceLike }).EventSource;
  if (!ctor) return null;
  return (url) => new ctor(url);
}
