import { renderChart } from "./chart.js";
import type { ConnectionState, GatewayClient, LiveConnection } from "./gateway.js";
import { renderDebug } from "./debug.js";
import { formatClock } from "./format.js";
import { renderLedger } from "./ledger.js";
import { renderZones, WriteGuard, type PanelActions } from "./panels.js";
import { TagStore } from "./store.js";
import { installStyles } from "./styles.js";
import type { CommandRecord, TruthDoc } from "./types.js";

/** Cadence for ledger refresh and (when enabled) truth refresh. */
const SIDE_POLL_MS = 2000;

/**
 * Application shell: owns the tag store, the live connection, and one
 * rendering pass that redraws every view from current state.  All data
 * on the operator surface arrives through the gateway client; the
 * optional debug block is the only consumer of the harness truth route.
 */
export class ConsoleApp {
  readonly store = new TagStore();
  readonly guard = new WriteGuard();

  private live: LiveConnection | null = null;
  private ledgerTimer: ReturnType<typeof setInterval> | null = null;
  private truthTimer: ReturnType<typeof setInterval> | null = null;
  private renderQueued = false;

  private connState: ConnectionState = "connecting";
  private records: CommandRecord[] = [];
  private truth: TruthDoc = { ok: false, error: "not loaded yet" };
  private readonly pendingByTag = new Map<string, number>();
  private chartTag = "";

  // Skeleton nodes, created once in start().
  private clockEl!: HTMLElement;
  private bannerEl!: HTMLElement;
  private zonesEl!: HTMLElement;
  private ledgerBody!: HTMLElement;
  private chartSelect!: HTMLSelectElement;
  private chartSvg!: SVGSVGElement;
  private debugEl: HTMLElement | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly client: GatewayClient,
    private readonly options: { debug: boolean; title?: string } = { debug: false },
  ) {}

  start(): void {
    installStyles(this.root.ownerDocument);
    this.buildSkeleton();

    this.live = this.client.connectLive({
      onSnapshot: (ev) => {
        this.store.applySnapshot(ev.tags, ev.now_ms);
        this.scheduleRender();
      },
      onUpdate: (ev) => {
        this.store.applyUpdate(ev.tags, ev.now_ms);
        this.scheduleRender();
      },
      onState: (state) => {
        this.connState = state;
        this.scheduleRender();
      },
    });

    this.refreshLedger();
    this.ledgerTimer = setInterval(() => this.refreshLedger(), SIDE_POLL_MS);
    if (this.debugEl) {
      this.refreshTruth();
      this.truthTimer = setInterval(() => this.refreshTruth(), SIDE_POLL_MS);
    }
    this.scheduleRender();
  }

  stop(): void {
    this.live?.close();
    this.live = null;
    if (this.ledgerTimer !== null) clearInterval(this.ledgerTimer);
    if (this.truthTimer !== null) clearInterval(this.truthTimer);
    this.ledgerTimer = null;
    this.truthTimer = null;
  }

  /** Draw every view from current state. Coalesced via scheduleRender. */
  renderNow(): void {
    this.renderQueued = false;
    this.clockEl.textContent = `t = ${formatClock(this.store.nowMs())}`;

    this.bannerEl.className = `conn-banner state-${this.connState}`;
    this.bannerEl.textContent =
      this.connState === "live"
        ? "LIVE"
        : this.connState === "connecting"
          ? "connecting…"
          : "RECONNECTING — data may lag";

    const actions: PanelActions = {
      writeBool: (tag, value) => this.issueWrite(tag, value),
      writePercent: (tag, value) => this.issueWrite(tag, value),
      isBusy: (tag) => this.guard.isBusy(tag),
    };
    renderZones(this.zonesEl, this.store.byZone(), actions);

    renderLedger(this.ledgerBody, this.records);
    this.refreshChartChoices();
    if (this.debugEl) renderDebug(this.debugEl, this.store.all(), this.truth);
  }

  private scheduleRender(): void {
    if (this.renderQueued) return;
    this.renderQueued = true;
    queueMicrotask(() => {
      if (this.renderQueued) this.renderNow();
    });
  }

  private issueWrite(tag: string, value: number | boolean): void {
    this.guard.attempt(tag, () => {
      this.client
        .write(tag, value)
        .then((rec) => {
          this.pendingByTag.set(tag, rec.cmd_id);
          this.refreshLedger();
        })
        .catch(() => {
          // Refused or unreachable: free the switch for another try.
          this.guard.release(tag);
          this.scheduleRender();
        });
    });
    this.scheduleRender();
  }

  private refreshLedger(): void {
    this.client
      .commands()
      .then((records) => {
        this.records = records;
        for (const rec of records) {
          if (rec.outcome !== null && this.pendingByTag.get(rec.tag) === rec.cmd_id) {
            this.pendingByTag.delete(rec.tag);
            this.guard.release(rec.tag);
          }
        }
        this.scheduleRender();
      })
      .catch(() => {
        /* gateway down; the connection banner already says so */
      });
  }

  private refreshTruth(): void {
    this.client
      .truth()
      .then((doc) => {
        this.truth = doc;
        this.scheduleRender();
      })
      .catch((err) => {
        this.truth = { ok: false, error: String(err) };
        this.scheduleRender();
      });
  }

  private refreshChartChoices(): void {
    const names = this.store
      .all()
      .filter((t) => t.kind === "measurement" || t.kind === "status")
      .map((t) => t.name)
      .sort();
    const current = new Set(Array.from(this.chartSelect.options).map((o) => o.value));
    if (names.length === current.size && names.every((n) => current.has(n))) return;
    const keep = this.chartSelect.value;
    this.chartSelect.textContent = "";
    for (const name of names) {
      const opt = this.root.ownerDocument.createElement("option");
      opt.value = name;
      opt.textContent = name;
      this.chartSelect.appendChild(opt);
    }
    if (names.includes(keep)) this.chartSelect.value = keep;
  }

  private loadChart(): void {
    const tag = this.chartSelect.value;
    if (!tag) return;
    this.chartTag = tag;
    const now = this.store.nowMs();
    const t0 = Math.max(0, now - 60_000);
    this.client
      .history(tag, t0, now)
      .then((samples) => renderChart(this.chartSvg, samples))
      .catch(() => renderChart(this.chartSvg, []));
  }

  /** Tag currently plotted, for tests and the window title. */
  chartedTag(): string {
    return this.chartTag;
  }

  private buildSkeleton(): void {
    const doc = this.root.ownerDocument;
    this.root.textContent = "";

    const head = doc.createElement("header");
    head.className = "console-head";
    const title = doc.createElement("h1");
    title.textContent = this.options.title ?? "Microgrid operator console";
    head.appendChild(title);
    this.clockEl = doc.createElement("span");
    this.clockEl.className = "sim-clock";
    head.appendChild(this.clockEl);
    this.bannerEl = doc.createElement("span");
    this.bannerEl.className = "conn-banner state-connecting";
    this.bannerEl.dataset.role = "connection";
    head.appendChild(this.bannerEl);
    this.root.appendChild(head);

    const body = doc.createElement("main");
    body.className = "console-body";
    this.root.appendChild(body);

    this.zonesEl = doc.createElement("div");
    this.zonesEl.className = "zones";
    body.appendChild(this.zonesEl);

    const ledgerBlock = doc.createElement("section");
    ledgerBlock.className = "block";
    const ledgerTitle = doc.createElement("h2");
    ledgerTitle.textContent = "Command ledger";
    ledgerBlock.appendChild(ledgerTitle);
    const table = doc.createElement("table");
    table.className = "ledger";
    this.ledgerBody = doc.createElement("tbody");
    table.appendChild(this.ledgerBody);
    ledgerBlock.appendChild(table);
    body.appendChild(ledgerBlock);

    const chartBlock = doc.createElement("section");
    chartBlock.className = "block";
    const chartTitle = doc.createElement("h2");
    chartTitle.textContent = "History";
    chartBlock.appendChild(chartTitle);
    const controls = doc.createElement("div");
    controls.className = "chart-controls";
    this.chartSelect = doc.createElement("select");
    controls.appendChild(this.chartSelect);
    const loadBtn = doc.createElement("button");
    loadBtn.textContent = "Plot last 60 s";
    loadBtn.addEventListener("click", () => this.loadChart());
    controls.appendChild(loadBtn);
    chartBlock.appendChild(controls);
    this.chartSvg = doc.createElementNS("http://www.w3.org/2000/svg", "svg") as SVGSVGElement;
    this.chartSvg.setAttribute("class", "chart");
    chartBlock.appendChild(this.chartSvg);
    body.appendChild(chartBlock);

    if (this.options.debug) {
      const debugBlock = doc.createElement("section");
      debugBlock.className = "block";
      const debugTitle = doc.createElement("h2");
      debugTitle.textContent = "Ground truth (debug)";
      debugBlock.appendChild(debugTitle);
      this.debugEl = doc.createElement("div");
      this.debugEl.dataset.role = "debug";
      debugBlock.appendChild(this.debugEl);
      body.appendChild(debugBlock);
    }
  }
}
