import { formatClock } from "./format.js";
import type { CommandRecord } from "./types.js";

/** Badge class for a ledger outcome; null means still pending. */
export function outcomeBadge(outcome: CommandRecord["outcome"]): string {
  return outcome === null ? "pending" : outcome;
}

/** Render the command ledger, newest first, replacing previous rows. */
export function renderLedger(tbody: HTMLElement, records: ReadonlyArray<CommandRecord>): void {
  tbody.textContent = "";
  const newestFirst = [...records].sort((a, b) => b.cmd_id - a.cmd_id);
  for (const rec of newestFirst) {
    const row = document.createElement("tr");
    row.dataset.cmdId = String(rec.cmd_id);

    cell(row, "ledger-id", `#${rec.cmd_id}`);
    cell(row, "ledger-time", formatClock(rec.issued_ts));
    cell(row, "ledger-operator", rec.operator);
    cell(row, "ledger-tag", rec.tag);
    cell(row, "ledger-value", String(rec.value));

    const badge = outcomeBadge(rec.outcome);
    const outcomeCell = cell(row, "ledger-outcome", "");
    const pill = document.createElement("span");
    pill.className = `badge badge-${badge}`;
    pill.textContent = badge.toUpperCase();
    outcomeCell.appendChild(pill);

    const observed =
      rec.observed === null ? "—" : `${rec.observed} (${rec.observed_quality ?? "?"})`;
    cell(row, "ledger-observed", observed);

    if (rec.error) {
      const detail = cell(row, "ledger-error", rec.error);
      detail.title = rec.error;
    } else {
      cell(row, "ledger-error", "");
    }
    tbody.appendChild(row);
  }
}

function cell(row: HTMLTableRowElement, className: string, text: string): HTMLTableCellElement {
  const td = document.createElement("td");
  td.className = className;
  td.textContent = text;
  row.appendChild(td);
  return td;
}
