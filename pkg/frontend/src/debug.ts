import { lampColor, type LampColor } from "./lamp.js";
import { breakerRows } from "./panels.js";
import type { Tag, TruthDoc } from "./types.js";

/** One operator-vs-process comparison line of the debug view. */
export interface TruthComparison {
  breakerId: string;
  /** What the console's own lamp shows, from supervisory data alone. */
  operatorLamp: LampColor;
  /** What the process model says the breaker is actually doing. */
  truthClosed: boolean | null;
  /** True when the operator view contradicts the process. */
  mismatch: boolean;
}

/**
 * Compare the supervisory picture against process-model ground truth.
 *
 * The operator lamp is computed by the same rule the zone panels use, so
 * this view never invents a friendlier reading; truth comes from the
 * harness document, which bypasses the supervisory chain entirely.
 */
export function compareTruth(
  tags: ReadonlyArray<Tag>,
  truth: TruthDoc,
): TruthComparison[] {
  const out: TruthComparison[] = [];
  const breakers = truth.breakers ?? {};
  for (const row of breakerRows(tags)) {
    if (!row.status) continue;
    const operatorLamp = lampColor(row.status);
    const truthClosed = row.breakerId in breakers ? breakers[row.breakerId] : null;
    const truthLamp: LampColor =
      truthClosed === null ? "grey" : truthClosed ? "green" : "red";
    out.push({
      breakerId: row.breakerId,
      operatorLamp,
      truthClosed,
      mismatch: truthLamp !== "grey" && operatorLamp !== truthLamp,
    });
  }
  return out.sort((a, b) => a.breakerId.localeCompare(b.breakerId));
}

/** Render the comparison table, replacing previous content. */
export function renderDebug(
  root: HTMLElement,
  tags: ReadonlyArray<Tag>,
  truth: TruthDoc,
): void {
  root.textContent = "";

  const note = document.createElement("p");
  note.className = "debug-note";
  note.textContent =
    "Ground truth is read from the process model directly and is invisible " +
    "to operators; disagreement means the supervisory picture is wrong.";
  root.appendChild(note);

  if (!truth.ok) {
    const err = document.createElement("p");
    err.className = "debug-error";
    err.textContent = `ground truth unavailable: ${truth.error ?? "unknown"}`;
    root.appendChild(err);
    return;
  }

  const table = document.createElement("table");
  table.className = "debug-table";
  const head = document.createElement("tr");
  for (const title of ["Breaker", "Operator view", "Process truth", ""]) {
    const th = document.createElement("th");
    th.textContent = title;
    head.appendChild(th);
  }
  table.appendChild(head);

  for (const cmp of compareTruth(tags, truth)) {
    const row = document.createElement("tr");
    row.dataset.breaker = cmp.breakerId;
    if (cmp.mismatch) row.className = "mismatch";

    const name = document.createElement("td");
    name.textContent = cmp.breakerId;
    row.appendChild(name);

    const operator = document.createElement("td");
    const opLamp = document.createElement("span");
    opLamp.className = `lamp lamp-${cmp.operatorLamp}`;
    opLamp.dataset.lamp = cmp.operatorLamp;
    operator.appendChild(opLamp);
    operator.append(` ${cmp.operatorLamp === "green" ? "ON" : cmp.operatorLamp === "red" ? "OFF" : "STALE"}`);
    operator.className = "debug-operator";
    row.appendChild(operator);

    const truthCell = document.createElement("td");
    truthCell.className = "debug-truth";
    const truthLamp = document.createElement("span");
    const truthColor: LampColor =
      cmp.truthClosed === null ? "grey" : cmp.truthClosed ? "green" : "red";
    truthLamp.className = `lamp lamp-${truthColor}`;
    truthLamp.dataset.lamp = truthColor;
    truthCell.appendChild(truthLamp);
    truthCell.append(
      ` ${cmp.truthClosed === null ? "unknown" : cmp.truthClosed ? "ON" : "OFF"}`,
    );
    row.appendChild(truthCell);

    const flag = document.createElement("td");
    flag.className = "debug-flag";
    flag.textContent = cmp.mismatch ? "⚠ DISAGREES" : "";
    row.appendChild(flag);

    table.appendChild(row);
  }
  root.appendChild(table);
}
