/** JSON shapes served by the supervisory gateway and the harness truth route. */

export type Quality = "good" | "stale" | "invalid";

export type TagKind = "measurement" | "status" | "control";

/** One supervisory tag as the gateway reports it. */
export interface Tag {
  name: string;
  kind: TagKind;
  device: string;
  zone: string;
  value: number | boolean | string | null;
  quality: Quality;
  source_ts: number | null;
  scada_ts: number | null;
  seq: number;
}

/** Outcome is null while the readback window is still open. */
export type CommandOutcome = "acked" | "failed" | "timeout" | null;

/** One entry of the supervisory command ledger. */
export interface CommandRecord {
  cmd_id: number;
  tag: string;
  value: number | boolean | string;
  operator: string;
  issued_ts: number;
  outcome: CommandOutcome;
  resolved_ts: number | null;
  error: string | null;
  status_tag: string | null;
  observed: number | boolean | string | null;
  observed_quality: Quality | null;
  observed_ts: number | null;
}

/** One raw historian sample returned by /history. */
export interface HistorySample {
  tag: string;
  seq: number;
  value: number | boolean | string | null;
  quality: Quality;
  scada_ts: number;
  persist_ts: number;
}

/** SSE payload: every tag on `snapshot`, changed tags on `update`. */
export interface StreamEvent {
  now_ms: number;
  tags: Tag[];
}

/** Bus record inside the harness ground-truth document. */
export interface TruthBus {
  bus_id: string;
  zone: string;
  voltage_ll: number;
  current_a: number;
  p_kw: number;
  q_kvar: number;
  frequency_hz: number;
}

/** Process-model ground truth served by the harness, not the gateway. */
export interface TruthDoc {
  ok: boolean;
  now_ms?: number;
  degraded?: boolean;
  breakers?: Record<string, boolean>;
  buses?: TruthBus[];
  error?: string;
}

/** Console configuration resolved at startup. */
export interface ConsoleConfig {
  /** Gateway origin, e.g. "http://127.0.0.1:18830". Empty = same origin. */
  gatewayBase: string;
  /** Credential sent with writes. */
  credential: string;
  /** Operator name recorded on the ledger. */
  operator: string;
  /** Optional harness truth URL; the debug view stays hidden without it. */
  truthUrl: string;
  /** Ground-truth comparison view. Off unless explicitly enabled. */
  debug: boolean;
}
