import { formatValue, presentationOf } from "./format.js";
import { lampColor, lampLabel } from "./lamp.js";
import type { Tag } from "./types.js";

/** A breaker as the operator sees it: paired status and control tags. */
export interface BreakerRow {
  breakerId: string;
  status?: Tag;
  control?: Tag;
}

/** A dispatchable load setpoint (percent, steps of ten). */
export interface LoadRow {
  loadId: string;
  control: Tag;
}

const STATUS_RE = /\/XCBR_(.+)\.stVal$/;
const CONTROL_RE = /\/CSWI_(.+)\.Oper$/;
const LOAD_RE = /\/LODC_(.+)\.SetPct$/;

/** Breaker id encoded in a status or switch-control tag name, if any. */
export function breakerIdOf(name: string): string | null {
  const m = STATUS_RE.exec(name) ?? CONTROL_RE.exec(name);
  return m ? m[1] : null;
}

/** Pair status and control tags per breaker, sorted by breaker id. */
export function breakerRows(tags: ReadonlyArray<Tag>): BreakerRow[] {
  const rows = new Map<string, BreakerRow>();
  const rowFor = (id: string): BreakerRow => {
    let row = rows.get(id);
    if (!row) {
      row = { breakerId: id };
      rows.set(id, row);
    }
    return row;
  };
  for (const tag of tags) {
    const asStatus = STATUS_RE.exec(tag.name);
    if (asStatus) {
      rowFor(asStatus[1]).status = tag;
      continue;
    }
    const asControl = CONTROL_RE.exec(tag.name);
    if (asControl) rowFor(asControl[1]).control = tag;
  }
  return [...rows.values()].sort((a, b) => a.breakerId.localeCompare(b.breakerId));
}

/** Load setpoint controls, sorted by load id. */
export function loadRows(tags: ReadonlyArray<Tag>): LoadRow[] {
  const rows: LoadRow[] = [];
  for (const tag of tags) {
    const m = LOAD_RE.exec(tag.name);
    if (m) rows.push({ loadId: m[1], control: tag });
  }
  return rows.sort((a, b) => a.loadId.localeCompare(b.loadId));
}

/**
 * Accidental-repeat guard for control writes.
 *
 * A tag with a write in flight refuses further writes until the command
 * resolves (the app calls `release`) or a hold window expires, whichever
 * comes first.  A double-click therefore issues exactly one command.
 */
export class WriteGuard {
  private readonly busy = new Map<string, ReturnType<typeof setTimeout>>();

  constructor(private readonly holdMs = 3000) {}

  /** Run `fn` unless `tag` is already in flight. True if it ran. */
  attempt(tag: string, fn: () => void): boolean {
    if (this.busy.has(tag)) return false;
    const timer = setTimeout(() => this.busy.delete(tag), this.holdMs);
    this.busy.set(tag, timer);
    fn();
    return true;
  }

  isBusy(tag: string): boolean {
    return this.busy.has(tag);
  }

  release(tag: string): void {
    const timer = this.busy.get(tag);
    if (timer !== undefined) {
      clearTimeout(timer);
      this.busy.delete(tag);
    }
  }
}

/** Callbacks the zone panels need from the application shell. */
export interface PanelActions {
  writeBool(tag: string, value: boolean): void;
  writePercent(tag: string, value: number): void;
  isBusy(tag: string): boolean;
}

const PERCENT_STEPS = Array.from({ length: 11 }, (_, i) => i * 10);

/** Render every zone panel into `root`, replacing previous content. */
export function renderZones(
  root: HTMLElement,
  tagsByZone: ReadonlyMap<string, Tag[]>,
  actions: PanelActions,
): void {
  root.textContent = "";
  for (const [zone, tags] of tagsByZone) {
    root.appendChild(renderZone(zone, tags, actions));
  }
}

function renderZone(zone: string, tags: Tag[], actions: PanelActions): HTMLElement {
  const panel = el("section", "zone-panel");
  panel.dataset.zone = zone;

  const head = el("h2", "zone-title");
  head.textContent = zone;
  panel.appendChild(head);

  const switches = el("div", "switch-grid");
  for (const row of breakerRows(tags)) switches.appendChild(renderBreaker(row, actions));
  panel.appendChild(switches);

  const meters = el("div", "meter-grid");
  for (const tag of tags.filter((t) => t.kind === "measurement")) {
    meters.appendChild(renderTile(tag));
  }
  panel.appendChild(meters);

  const loads = loadRows(tags);
  if (loads.length > 0) {
    const list = el("div", "load-list");
    for (const row of loads) list.appendChild(renderLoad(row, actions));
    panel.appendChild(list);
  }
  return panel;
}

function renderBreaker(row: BreakerRow, actions: PanelActions): HTMLElement {
  const card = el("div", "switch-card");
  card.dataset.breaker = row.breakerId;

  const color = lampColor(row.status);
  const lamp = el("span", `lamp lamp-${color}`);
  lamp.dataset.lamp = color;
  lamp.title = lampLabel(color);
  card.appendChild(lamp);

  const name = el("span", "switch-name");
  name.textContent = row.breakerId;
  card.appendChild(name);

  const state = el("span", "switch-state");
  state.textContent = lampLabel(color);
  card.appendChild(state);

  if (row.control) {
    const controlTag = row.control.name;
    const busy = actions.isBusy(controlTag);
    for (const want of [true, false]) {
      const btn = el("button", "switch-btn") as HTMLButtonElement;
      btn.textContent = want ? "CLOSE" : "OPEN";
      btn.dataset.command = want ? "close" : "open";
      btn.dataset.tag = controlTag;
      btn.disabled = busy;
      btn.addEventListener("click", () => actions.writeBool(controlTag, want));
      card.appendChild(btn);
    }
    if (busy) {
      const pending = el("span", "switch-pending");
      pending.textContent = "sending…";
      card.appendChild(pending);
    }
  }
  return card;
}

function renderTile(tag: Tag): HTMLElement {
  const tile = el("div", `tile quality-${tag.quality}`);
  tile.dataset.tag = tag.name;

  const label = el("div", "tile-label");
  label.textContent = `${tag.device} ${presentationOf(tag.name).label}`;
  tile.appendChild(label);

  const value = el("div", "tile-value");
  value.textContent = formatValue(tag);
  tile.appendChild(value);

  if (tag.quality !== "good") {
    const badge = el("div", "tile-quality");
    badge.textContent = tag.quality.toUpperCase();
    tile.appendChild(badge);
  }
  return tile;
}

function renderLoad(row: LoadRow, actions: PanelActions): HTMLElement {
  const line = el("div", "load-row");
  line.dataset.load = row.loadId;

  const label = el("span", "load-label");
  label.textContent = `${row.loadId} demand`;
  line.appendChild(label);

  const select = el("select", "load-select") as HTMLSelectElement;
  for (const pct of PERCENT_STEPS) {
    const opt = document.createElement("option");
    opt.value = String(pct);
    opt.textContent = `${pct} %`;
    select.appendChild(opt);
  }
  select.value = String(typeof row.control.value === "number" ? row.control.value : 0);
  line.appendChild(select);

  const apply = el("button", "load-apply") as HTMLButtonElement;
  apply.textContent = "Set";
  apply.dataset.tag = row.control.name;
  apply.disabled = actions.isBusy(row.control.name);
  apply.addEventListener("click", () =>
    actions.writePercent(row.control.name, Number(select.value)),
  );
  line.appendChild(apply);

  const current = el("span", "load-current");
  current.textContent = `${row.control.value ?? "—"} %`;
  line.appendChild(current);
  return line;
}

function el(name: string, className: string): HTMLElement {
  const node = document.createElement(name);
  node.className = className;
  return node;
}
