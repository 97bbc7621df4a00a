import { describe, expect, it } from "vitest";

import { isOn, lampColor, lampLabel } from "../src/lamp.js";
import type { Quality, Tag } from "../src/types.js";
import { makeStatus } from "./helpers.js";

describe("lampColor", () => {
  it("shows green for a good-quality ON status", () => {
    expect(lampColor(makeStatus("SIED1/XCBR_Q4_1.stVal", true))).toBe("green");
  });

  it("shows red for a good-quality OFF status", () => {
    expect(lampColor(makeStatus("SIED1/XCBR_Q4_1.stVal", false))).toBe("red");
  });

  it("shows grey when the tag is stale, whatever the value says", () => {
    expect(lampColor(makeStatus("SIED1/XCBR_Q4_1.stVal", true, { quality: "stale" }))).toBe(
      "grey",
    );
    expect(lampColor(makeStatus("SIED1/XCBR_Q4_1.stVal", false, { quality: "stale" }))).toBe(
      "grey",
    );
  });

  it("shows grey for invalid quality and for a missing tag", () => {
    expect(lampColor(makeStatus("SIED1/XCBR_Q4_1.stVal", true, { quality: "invalid" }))).toBe(
      "grey",
    );
    expect(lampColor(undefined)).toBe("grey");
    expect(lampColor(null)).toBe("grey");
  });

  it("yields exactly one color for every quality/value combination", () => {
    const colors = new Set(["green", "red", "grey"]);
    const qualities: Quality[] = ["good", "stale", "invalid"];
    const values: Tag["value"][] = [true, false, 1, 0, "1", "0", null];
    for (const quality of qualities) {
      for (const value of values) {
        const color = lampColor(makeStatus("X/XCBR_Q.stVal", false, { quality, value }));
        expect(colors.has(color)).toBe(true);
      }
    }
  });
});

describe("isOn", () => {
  it("accepts the encodings a status can arrive in", () => {
    expect(isOn(true)).toBe(true);
    expect(isOn(false)).toBe(false);
    expect(isOn(1)).toBe(true);
    expect(isOn(0)).toBe(false);
    expect(isOn("1")).toBe(true);
    expect(isOn("0")).toBe(false);
    expect(isOn(null)).toBe(false);
  });
});

describe("lampLabel", () => {
  it("matches color to operator wording", () => {
    expect(lampLabel("green")).toBe("ON");
    expect(lampLabel("red")).toBe("OFF");
    expect(lampLabel("grey")).toBe("STALE");
  });
});
