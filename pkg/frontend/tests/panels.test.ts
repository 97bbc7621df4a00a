import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import {
  breakerIdOf,
  breakerRows,
  loadRows,
  renderZones,
  WriteGuard,
  type PanelActions,
} from "../src/panels.js";
import type { Tag } from "../src/types.js";
import { makeStatus, makeTag } from "./helpers.js";

function smartHomeTags(): Tag[] {
  return [
    makeStatus("SIED1/XCBR_Q4_1.stVal", true, { zone: "SmartHome" }),
    makeTag({ name: "SPLC/CSWI_Q4_1.Oper", kind: "control", value: true, zone: "SmartHome" }),
    makeTag({ name: "SIED1/MMXU1.PhV", value: 400.2, zone: "SmartHome" }),
    makeTag({ name: "SIED1/MMXU1.TotW", value: 35.75, zone: "SmartHome" }),
    makeTag({ name: "SPLC/LODC_LB1.SetPct", kind: "control", value: 70, zone: "SmartHome" }),
  ];
}

function recordingActions(guard?: WriteGuard) {
  const writes: Array<{ tag: string; value: number | boolean }> = [];
  const g = guard ?? new WriteGuard();
  const actions: PanelActions = {
    writeBool: (tag, value) => g.attempt(tag, () => writes.push({ tag, value })),
    writePercent: (tag, value) => g.attempt(tag, () => writes.push({ tag, value })),
    isBusy: (tag) => g.isBusy(tag),
  };
  return { writes, actions, guard: g };
}

describe("tag pairing", () => {
  it("extracts breaker ids from status and control names", () => {
    expect(breakerIdOf("SIED1/XCBR_Q4_1.stVal")).toBe("Q4_1");
    expect(breakerIdOf("SPLC/CSWI_Q4_1.Oper")).toBe("Q4_1");
    expect(breakerIdOf("SIED1/MMXU1.PhV")).toBeNull();
  });

  it("pairs each breaker's status with its control", () => {
    const rows = breakerRows(smartHomeTags());
    expect(rows).toHaveLength(1);
    expect(rows[0].breakerId).toBe("Q4_1");
    expect(rows[0].status?.name).toBe("SIED1/XCBR_Q4_1.stVal");
    expect(rows[0].control?.name).toBe("SPLC/CSWI_Q4_1.Oper");
  });

  it("finds load setpoint controls", () => {
    const rows = loadRows(smartHomeTags());
    expect(rows).toHaveLength(1);
    expect(rows[0].loadId).toBe("LB1");
    expect(rows[0].control.value).toBe(70);
  });
});

describe("zone panels", () => {
  let root: HTMLElement;

  beforeEach(() => {
    root = document.createElement("div");
    document.body.appendChild(root);
  });
  afterEach(() => {
    root.remove();
  });

  function zonesOf(tags: Tag[]): Map<string, Tag[]> {
    const map = new Map<string, Tag[]>();
    for (const t of tags) {
      map.set(t.zone, [...(map.get(t.zone) ?? []), t]);
    }
    return map;
  }

  it("renders measurement tiles with engineering units", () => {
    const { actions } = recordingActions();
    renderZones(root, zonesOf(smartHomeTags()), actions);

    const volts = root.querySelector('[data-tag="SIED1/MMXU1.PhV"] .tile-value');
    const power = root.querySelector('[data-tag="SIED1/MMXU1.TotW"] .tile-value');
    expect(volts?.textContent).toBe("400.2 V");
    expect(power?.textContent).toBe("35.75 kW");
  });

  it("marks non-good tiles so degraded data cannot pass as live", () => {
    const tags = [
      makeTag({ name: "SIED1/MMXU1.Hz", value: 49.9, quality: "stale", zone: "SmartHome" }),
    ];
    const { actions } = recordingActions();
    renderZones(root, zonesOf(tags), actions);

    const tile = root.querySelector('[data-tag="SIED1/MMXU1.Hz"]');
    expect(tile?.className).toContain("quality-stale");
    expect(tile?.querySelector(".tile-quality")?.textContent).toBe("STALE");
  });

  it("shows the breaker lamp color derived from its status tag", () => {
    const { actions } = recordingActions();
    renderZones(root, zonesOf(smartHomeTags()), actions);
    const lamp = root.querySelector('[data-breaker="Q4_1"] .lamp') as HTMLElement;
    expect(lamp.dataset.lamp).toBe("green");
  });

  it("issues one write per switch button click", () => {
    const { writes, actions } = recordingActions();
    renderZones(root, zonesOf(smartHomeTags()), actions);

    const openBtn = root.querySelector(
      '[data-breaker="Q4_1"] button[data-command="open"]',
    ) as HTMLButtonElement;
    openBtn.click();

    expect(writes).toEqual([{ tag: "SPLC/CSWI_Q4_1.Oper", value: false }]);
  });

  it("swallows the second click of a double-click", () => {
    vi.useFakeTimers();
    try {
      const { writes, actions } = recordingActions();
      renderZones(root, zonesOf(smartHomeTags()), actions);

      const closeBtn = root.querySelector(
        '[data-breaker="Q4_1"] button[data-command="close"]',
      ) as HTMLButtonElement;
      closeBtn.click();
      closeBtn.click(); // accidental repeat

      expect(writes).toEqual([{ tag: "SPLC/CSWI_Q4_1.Oper", value: true }]);
    } finally {
      vi.useRealTimers();
    }
  });

  it("disables switch buttons while a write is in flight", () => {
    const { actions, guard } = recordingActions();
    guard.attempt("SPLC/CSWI_Q4_1.Oper", () => {});
    renderZones(root, zonesOf(smartHomeTags()), actions);

    const buttons = root.querySelectorAll<HTMLButtonElement>('[data-breaker="Q4_1"] button');
    expect(buttons).toHaveLength(2);
    for (const btn of buttons) expect(btn.disabled).toBe(true);
    expect(root.querySelector(".switch-pending")?.textContent).toBe("sending…");
  });

  it("applies a load setpoint from the percent selector", () => {
    const { writes, actions } = recordingActions();
    renderZones(root, zonesOf(smartHomeTags()), actions);

    const row = root.querySelector('[data-load="LB1"]') as HTMLElement;
    const select = row.querySelector("select") as HTMLSelectElement;
    expect(select.value).toBe("70");
    select.value = "30";
    (row.querySelector("button") as HTMLButtonElement).click();

    expect(writes).toEqual([{ tag: "SPLC/LODC_LB1.SetPct", value: 30 }]);
  });
});

describe("WriteGuard", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  it("admits the first attempt and blocks repeats until released", () => {
    const guard = new WriteGuard(3000);
    let runs = 0;
    expect(guard.attempt("t", () => runs++)).toBe(true);
    expect(guard.attempt("t", () => runs++)).toBe(false);
    expect(runs).toBe(1);

    guard.release("t");
    expect(guard.attempt("t", () => runs++)).toBe(true);
    expect(runs).toBe(2);
  });

  it("expires the hold on its own if no resolution arrives", () => {
    const guard = new WriteGuard(3000);
    guard.attempt("t", () => {});
    expect(guard.isBusy("t")).toBe(true);

    vi.advanceTimersByTime(3000);
    expect(guard.isBusy("t")).toBe(false);
  });

  it("guards tags independently", () => {
    const guard = new WriteGuard();
    guard.attempt("a", () => {});
    expect(guard.isBusy("a")).toBe(true);
    expect(guard.isBusy("b")).toBe(false);
  });
});
