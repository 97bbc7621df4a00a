/** Console stylesheet, installed once at startup. */
export const STYLES = `
:root {
  --bg: #11151c;
  --panel: #1a2029;
  --card: #232b37;
  --text: #d7dee8;
  --muted: #8593a5;
  --line: #2e3947;
  --green: #3ecf6a;
  --red: #e5484d;
  --grey: #5c6775;
  --amber: #f5a524;
  --accent: #4f9cf9;
}
* { box-sizing: border-box; }
body {
  margin: 0;
  background: var(--bg);
  color: var(--text);
  font: 14px/1.45 "Segoe UI", system-ui, sans-serif;
}
header.console-head {
  display: flex;
  align-items: baseline;
  gap: 16px;
  padding: 14px 20px;
  border-bottom: 1px solid var(--line);
}
header.console-head h1 { font-size: 18px; margin: 0; }
.sim-clock { color: var(--muted); font-variant-numeric: tabular-nums; }
.conn-banner {
  margin-left: auto;
  padding: 4px 12px;
  border-radius: 4px;
  font-weight: 600;
  background: var(--card);
  color: var(--muted);
}
.conn-banner.state-live { color: var(--green); }
.conn-banner.state-reconnecting { background: #3a2a12; color: var(--amber); }
.conn-banner.state-connecting { color: var(--muted); }

main.console-body { padding: 16px 20px 48px; max-width: 1280px; margin: 0 auto; }
.zones { display: grid; grid-template-columns: repeat(auto-fit, minmax(280px, 1fr)); gap: 14px; }

.zone-panel { background: var(--panel); border: 1px solid var(--line); border-radius: 8px; padding: 12px 14px; }
.zone-title { margin: 0 0 10px; font-size: 15px; letter-spacing: 0.04em; text-transform: uppercase; color: var(--accent); }

.switch-grid { display: flex; flex-direction: column; gap: 6px; margin-bottom: 10px; }
.switch-card {
  display: flex; align-items: center; gap: 8px;
  background: var(--card); border-radius: 6px; padding: 6px 10px;
}
.switch-name { font-weight: 600; min-width: 48px; }
.switch-state { color: var(--muted); min-width: 48px; font-size: 12px; }
.switch-btn {
  background: #2d3a4c; color: var(--text); border: 1px solid var(--line);
  border-radius: 4px; padding: 3px 10px; cursor: pointer; font-size: 12px;
}
.switch-btn:hover:not(:disabled) { background: #3a4b61; }
.switch-btn:disabled { opacity: 0.45; cursor: default; }
.switch-pending { color: var(--amber); font-size: 12px; }

.lamp {
  width: 14px; height: 14px; border-radius: 50%;
  display: inline-block; flex-shrink: 0;
  border: 1px solid rgba(0,0,0,0.4);
}
.lamp-green { background: var(--green); box-shadow: 0 0 6px var(--green); }
.lamp-red { background: var(--red); box-shadow: 0 0 6px var(--red); }
.lamp-grey { background: var(--grey); }

.meter-grid { display: grid; grid-template-columns: repeat(auto-fill, minmax(118px, 1fr)); gap: 6px; }
.tile { background: var(--card); border-radius: 6px; padding: 6px 8px; }
.tile-label { color: var(--muted); font-size: 11px; white-space: nowrap; overflow: hidden; text-overflow: ellipsis; }
.tile-value { font-size: 15px; font-variant-numeric: tabular-nums; }
.tile.quality-stale, .tile.quality-invalid { opacity: 0.55; border: 1px dashed var(--grey); }
.tile-quality { color: var(--amber); font-size: 10px; letter-spacing: 0.08em; }

.load-list { margin-top: 10px; display: flex; flex-direction: column; gap: 4px; }
.load-row { display: flex; align-items: center; gap: 8px; font-size: 13px; }
.load-label { color: var(--muted); min-width: 110px; }
.load-select, .load-apply {
  background: var(--card); color: var(--text);
  border: 1px solid var(--line); border-radius: 4px; padding: 2px 6px;
}
.load-apply { cursor: pointer; }
.load-apply:disabled { opacity: 0.45; cursor: default; }
.load-current { color: var(--muted); font-variant-numeric: tabular-nums; }

section.block { margin-top: 26px; }
section.block > h2 { font-size: 15px; color: var(--accent); text-transform: uppercase; letter-spacing: 0.04em; }

table.ledger { width: 100%; border-collapse: collapse; font-size: 13px; }
table.ledger td, table.ledger th { padding: 4px 8px; border-bottom: 1px solid var(--line); text-align: left; }
.badge { padding: 1px 8px; border-radius: 10px; font-size: 11px; font-weight: 700; }
.badge-acked { background: #14351f; color: var(--green); }
.badge-failed { background: #3b1619; color: var(--red); }
.badge-timeout { background: #3a2a12; color: var(--amber); }
.badge-pending { background: var(--card); color: var(--muted); }

.chart-controls { display: flex; gap: 8px; align-items: center; margin-bottom: 8px; }
.chart-controls select, .chart-controls button {
  background: var(--card); color: var(--text);
  border: 1px solid var(--line); border-radius: 4px; padding: 3px 8px;
}
svg.chart { width: 100%; background: var(--panel); border: 1px solid var(--line); border-radius: 8px; }
.chart-line { stroke: var(--accent); stroke-width: 1.6; }
.chart-empty, .chart-range { fill: var(--muted); font-size: 12px; }

.debug-note { color: var(--muted); font-size: 12px; }
.debug-error { color: var(--red); }
table.debug-table { border-collapse: collapse; font-size: 13px; }
table.debug-table td, table.debug-table th { padding: 4px 12px; border-bottom: 1px solid var(--line); text-align: left; }
table.debug-table tr.mismatch { background: #3b1619; }
.debug-flag { color: var(--red); font-weight: 700; }
`;

/** Append the stylesheet to the document head (idempotent). */
export function installStyles(doc: Document): void {
  if (doc.getElementById("console-styles")) return;
  const style = doc.createElement("style");
  style.id = "console-styles";
  style.textContent = STYLES;
  doc.head.appendChild(style);
}
